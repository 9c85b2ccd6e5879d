#pragma once

#include "fewclusters/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fewclusters {

struct SizeRange {
    std::size_t min = 15;
    std::size_t max = 25;
};

/**
 * Linear cluster-treatment design Y = theta0 + beta D + eta'X + U.
 *
 * Raw errors are N(0, 1) in treated and N(0, 2) (variance 2) in untreated
 * clusters; raw covariates are N(0, 1) in treated and chi2(2) - 2 in
 * untreated clusters. Errors and every covariate column pass through a
 * circular moving average of width h + 1.
 */
struct LinearDesign {
    std::size_t q1 = 3;
    std::size_t q0 = 3;
    std::size_t h = 10;
    double beta = 0.0;
    double theta0 = 0.0;
    std::vector<double> eta = {1.0, 1.0, 1.0, 1.0, 1.0};
    SizeRange sizes{15, 25};
    double treated_error_variance = 1.0;
    double untreated_error_variance = 2.0;
};

/// The linear design used as a latent model; outcome is 1{Y* > 0}.
struct ProbitDesign {
    std::size_t q1 = 3;
    std::size_t q0 = 3;
    std::size_t h = 10;
    double beta = 0.0;
    double theta0 = 0.0;
    std::vector<double> eta = {1.0, 1.0, 1.0, 1.0, 1.0};
    SizeRange sizes{350, 500};
};

/// Output entry i is the mean of source entries i, ..., i + h taken
/// modulo m. Throws HOutOfRange unless h <= m - 1.
std::vector<double> circular_ma(std::span<const double> source, std::size_t h);

ClusterDataset gen_linear(const LinearDesign& design, std::uint64_t seed);
ClusterDataset gen_probit(const ProbitDesign& design, std::uint64_t seed);

struct DidPanelDesign {
    std::size_t q1 = 3;
    std::size_t q0 = 3;
    std::size_t periods = 10;
    std::size_t t0 = 5;  // post period is t > t0, t = 1..periods
    double beta = 0.0;
    double theta0 = 0.0;
    double noise_sd = 1.0;
    double fixed_effect_sd = 1.0;
};

/// Panel with Y_t = theta0 I_t + beta I_t D + zeta + U_t, I_t = 1{t > t0}.
ClusterDataset gen_did_panel(const DidPanelDesign& design, std::uint64_t seed);

}  // namespace fewclusters
