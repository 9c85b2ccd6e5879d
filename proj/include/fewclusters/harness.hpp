#pragma once

#include "fewclusters/comparators.hpp"
#include "fewclusters/dgp.hpp"
#include "fewclusters/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fewclusters {

enum class Method { Placebo, PlaceboUnadjusted, Im, Crs, CrsRandomized, WildBootstrap, BchT };

std::string_view to_string(Method m) noexcept;
Method method_from_string(std::string_view text);

enum class SweepParam { Beta, H, Q };

std::string_view to_string(SweepParam p) noexcept;
SweepParam sweep_param_from_string(std::string_view text);

/// A user-supplied decision rule evaluated on every replication's dataset.
/// `seed` is an independent stream for that replication.
struct CustomMethod {
    std::string name;
    std::function<bool(const ClusterDataset& data, std::uint64_t seed)> decide;
};

using Design = std::variant<LinearDesign, ProbitDesign>;

struct ExperimentSpec {
    std::string name = "experiment";
    Design design = LinearDesign{};
    SweepParam sweep = SweepParam::Beta;
    std::vector<double> values;
    std::vector<Method> methods;
    std::vector<CustomMethod> custom;
    std::size_t replications = 2000;
    double alpha = 0.05;
    std::uint64_t master_seed = 1;
    PairingStrategy pairing = PairingStrategy::Random;
    std::size_t bootstrap_reps = 199;
    /// 0 means default_threads().
    unsigned threads = 0;

    void validate() const;
};

struct RejectionRow {
    std::string method;
    SweepParam sweep;
    double sweep_value = 0.0;
    double reject_rate = 0.0;
    std::size_t replications = 0;
    std::uint64_t seed = 0;
    /// Replications where the method could not be computed (counted as
    /// non-rejections).
    std::size_t failures = 0;

    friend bool operator==(const RejectionRow&, const RejectionRow&) = default;
};

struct RejectionTable {
    std::vector<RejectionRow> rows;
    double alpha = 0.05;

    const RejectionRow* find(std::string_view method, double sweep_value) const;
    std::vector<std::string> methods() const;
    friend bool operator==(const RejectionTable&, const RejectionTable&) = default;
};

/// Design with the sweep coordinate applied.
Design apply_sweep(const Design& design, SweepParam param, double value);

ClusterDataset generate(const Design& design, std::uint64_t seed);

/// Seed of one replication: a hash of (master seed, sweep index, replication).
std::uint64_t replication_seed(std::uint64_t master, std::size_t sweep_index, std::size_t replication);

/**
 * Runs every method on the same dataset per replication and tallies
 * rejections for each sweep value. Results depend only on the spec, not on
 * the worker count. Throws MethodInapplicable if a method cannot run on the
 * design at some sweep value.
 */
RejectionTable run_experiment(const ExperimentSpec& spec);

std::string format_csv(const RejectionTable& table);
std::string format_svg(const RejectionTable& table, const std::string& title = {});
void emit_csv(const RejectionTable& table, const std::filesystem::path& path);
void emit_svg(const RejectionTable& table, const std::filesystem::path& path,
              const std::string& title = {});

/// Parses an experiment config. Validation failures throw Config with the
/// offending field path in the message.
ExperimentSpec spec_from_json(const nlohmann::json& config);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace fewclusters
