#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fewclusters {

enum class ErrorCode {
    NoTreated,
    NoUntreated,
    EmptyCluster,
    RaggedCovariates,
    InvalidArgument,
    GroupTooSmall,
    DegenerateVariance,
    Overflow,
    RankDeficient,
    MissingPeriodFlag,
    Separation,
    NoConvergence,
    Unbalanced,
    HOutOfRange,
    MethodInapplicable,
    Config,
    Parse,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library. The code identifies the failure
/// class so callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace fewclusters
