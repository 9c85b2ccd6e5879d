#pragma once

#include "fewclusters/model.hpp"

#include <cstdint>
#include <span>

namespace fewclusters {

/// Pairwise (tree) summation; the split points depend only on the length.
double pairwise_sum(std::span<const double> values) noexcept;

/// Mean over the treated set minus mean over its complement.
double comparison_of_means(const EstimateVector& x, std::span<const std::uint32_t> treated);
double comparison_of_means(const EstimateVector& x, const Assignment& a);

/// Sum of the two groups' squared-deviation sums, each divided by
/// size * (size - 1). Throws GroupTooSmall unless q1 >= 2 and q0 >= 2.
double two_sample_variance(const EstimateVector& x, std::span<const std::uint32_t> treated);
double two_sample_variance(const EstimateVector& x, const Assignment& a);

/// (q1 * q0 / q) times the two-sample variance.
double scaled_variance(const EstimateVector& x, const Assignment& a);

/**
 * Placebo statistic rescaled by the ratio of the observed two-sample
 * standard deviation to the placebo one. At the identity assignment the
 * ratio is taken as exactly 1, so the result equals comparison_of_means.
 * Throws DegenerateVariance when the placebo standard deviation is zero.
 */
double adjusted_statistic(const EstimateVector& x, std::span<const std::uint32_t> treated);
double adjusted_statistic(const EstimateVector& x, const Assignment& a);

/**
 * Evaluates placebo statistics for one estimate vector under many
 * assignments. The observed standard deviation is computed once.
 *
 * A zero placebo standard deviation at a non-identity assignment yields
 * +/-infinity with the sign of the comparison of means (0 when that is 0),
 * so downstream quantiles and p-values stay defined.
 */
class PlaceboEvaluator {
public:
    PlaceboEvaluator(const EstimateVector& x, Adjustment adjustment);

    double operator()(std::span<const std::uint32_t> treated) const;
    const EstimateVector& estimates() const noexcept { return *x_; }

private:
    const EstimateVector* x_;
    Adjustment adjustment_;
    double observed_sd_ = 0.0;
};

}  // namespace fewclusters
