#pragma once

#include "fewclusters/model.hpp"
#include "fewclusters/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace fewclusters {

// Benchmark inference methods for cluster-level treatment effects: the
// two-sample t test on cluster estimates, the matched-pair sign-change
// permutation test, the pooled cluster-robust t test and its wild cluster
// bootstrap.

/// Two-sample t test on cluster estimates with min(q1, q0) - 1 degrees of
/// freedom. The statistic is comparison of means over the two-sample
/// standard deviation. Throws GroupTooSmall.
TestResult im_t_test(const EstimateVector& x, double alpha, Side side);

enum class PairingStrategy { Random, BySize };

struct ClusterPair {
    std::size_t treated;
    std::size_t untreated;
    friend bool operator==(const ClusterPair&, const ClusterPair&) = default;
};

/// Perfect matching of treated to untreated clusters. Random pairing
/// shuffles the untreated clusters with `seed`; BySize pairs clusters of
/// equal size rank. Throws Unbalanced if q1 != q0.
std::vector<ClusterPair> pair_clusters(const ClusterDataset& data, PairingStrategy strategy,
                                       std::uint64_t seed);

/// Per-pair treatment coefficient from the pooled least-squares fit of the
/// pair's outcomes on (1, D, X).
std::vector<double> pair_effects_ols(const ClusterDataset& data, std::span<const ClusterPair> pairs);

/// Per-pair difference of cluster estimates, treated minus untreated.
std::vector<double> pair_effects_difference(const EstimateVector& x, std::span<const ClusterPair> pairs);

/// Mean over the square root of the sum of squared deviations. A zero
/// denominator gives +/-infinity with the sign of the mean, or 0.
double crs_statistic(std::span<const double> effects);

/**
 * Sign-change permutation test on matched-pair effects. All 2^q sign
 * vectors are evaluated; the nonrandomized decision uses the same quantile
 * rule as the placebo test. The randomized variant also rejects on a tie
 * with the critical value when a uniform draw from `seed` is at most the
 * tie-splitting probability.
 */
TestResult crs_sign_test(std::span<const double> effects, double alpha, bool randomized,
                         std::uint64_t seed, Side side = Side::Greater);

struct PooledFit {
    double beta_hat = 0.0;
    double se_crve = 0.0;
    double t_stat = 0.0;
    std::size_t n = 0;
    std::size_t q = 0;
    std::size_t d = 0;
};

/// (n - 1) q / ((n - d)(q - 1)).
double crve_dof_factor(std::size_t n, std::size_t d, std::size_t q);

/**
 * Pooled regression of the outcome on (1, D, X) with the cluster-robust
 * sandwich variance scaled by crve_dof_factor, where d counts all pooled
 * regressors. Throws RankDeficient.
 */
PooledFit pooled_ols_crve(const ClusterDataset& data);

/// Compares the pooled CRVE t statistic with t(q - 1) quantiles.
TestResult bch_t_test(const PooledFit& fit, double alpha, Side side);

/// One draw from the six-point distribution {+-sqrt(3/2), +-1, +-sqrt(1/2)}.
double webb_weight(Engine& eng);

/**
 * Wild cluster bootstrap of the pooled CRVE t statistic with the null
 * imposed: restricted residuals are multiplied by one six-point weight per
 * cluster and the unrestricted model is refit on each of `reps` samples.
 * The p-value is the fraction of bootstrap statistics at least as extreme
 * as the observed one; rejection iff p <= alpha.
 */
TestResult wild_cluster_bootstrap_test(const ClusterDataset& data, double alpha, Side side,
                                       std::size_t reps, std::uint64_t seed);

}  // namespace fewclusters
