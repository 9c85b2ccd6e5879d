#pragma once

#include "fewclusters/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fewclusters {

inline constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;

/// n choose k, saturating at UINT64_MAX.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k) noexcept;

/// A sequence of assignments stored as one flat index buffer with stride q1.
class AssignmentSet {
public:
    explicit AssignmentSet(ClusterLayout layout) : layout_(layout) {}

    std::size_t size() const noexcept { return layout_.q1 == 0 ? 0 : indices_.size() / layout_.q1; }
    const ClusterLayout& layout() const noexcept { return layout_; }

    std::span<const std::uint32_t> operator[](std::size_t i) const {
        return std::span<const std::uint32_t>(indices_).subspan(i * layout_.q1, layout_.q1);
    }
    Assignment at(std::size_t i) const;

    void push_back(std::span<const std::uint32_t> treated);
    void reserve(std::size_t n) { indices_.reserve(n * layout_.q1); }

private:
    ClusterLayout layout_;
    std::vector<std::uint32_t> indices_;
};

/// All C(q, q1) assignments in lexicographic order; the identity comes
/// first. Throws Overflow when the count exceeds `cap`.
AssignmentSet enumerate_assignments(const ClusterLayout& layout,
                                    std::uint64_t cap = kDefaultEnumerationCap);

/// The identity followed by M uniform draws (with replacement) from the
/// set of assignments. Throws InvalidArgument if M == 0.
AssignmentSet subsample_assignments(const ClusterLayout& layout, std::size_t draws,
                                    std::uint64_t seed);

/// Rank k = ceil(N(1 - alpha)), evaluated as N - max{g : g/N <= alpha} with
/// the same division p_value uses, so that rejecting (observed above the
/// k-th smallest) and p <= alpha agree exactly in floating point.
std::size_t quantile_rank(std::size_t n, double alpha);

/// k-th smallest element of `stats`, k = quantile_rank(N, alpha).
double permutation_quantile(std::span<const double> stats, double alpha);

/// Fraction of `stats` at or above `observed`.
double p_value(double observed, std::span<const double> stats);

struct RandomizedThreshold {
    double critical_value = 0.0;
    double delta = 0.0;
};

/// Critical value plus the tie-splitting probability
/// (N alpha - #{> c}) / #{== c}.
RandomizedThreshold randomized_threshold(std::span<const double> stats, double alpha);

/**
 * The placebo test for one fixed layout and configuration.
 *
 * The evaluated assignment set is built once (full enumeration, or a
 * subsample when max_assignments is set and smaller than C(q, q1)) and can
 * be reused for many estimate vectors, which is what the Monte Carlo
 * harness does.
 */
class PlaceboTest {
public:
    PlaceboTest(const ClusterLayout& layout, const TestConfig& config,
                std::uint64_t enumeration_cap = kDefaultEnumerationCap);

    TestResult run(const EstimateVector& x) const;

    const AssignmentSet& assignments() const noexcept { return assignments_; }

    /// Placebo statistics of x over the assignment set, in set order.
    std::vector<double> placebo_statistics(const EstimateVector& x) const;

private:
    TestResult one_sided(const EstimateVector& x, double alpha) const;

    ClusterLayout layout_;
    TestConfig config_;
    AssignmentSet assignments_;
};

TestResult run_placebo_test(const EstimateVector& x, const TestConfig& config);

}  // namespace fewclusters
