#pragma once

#include "fewclusters/model.hpp"

#include <Eigen/Dense>

#include <string_view>

namespace fewclusters {

struct FitResult {
    double theta = 0.0;
    /// Covariate slopes; for the DiD fit the cluster constant comes first.
    Eigen::VectorXd nuisance;
    int iterations = 0;
    bool converged = true;
};

enum class EstimatorKind { OlsIntercept, DidSlope, Probit };

std::string_view to_string(EstimatorKind kind) noexcept;
EstimatorKind estimator_from_string(std::string_view text);

/// Least-squares coefficients of y on the columns of `design` via
/// column-pivoted Householder QR. Throws RankDeficient.
Eigen::VectorXd least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y);

/// Intercept of the within-cluster regression of outcome on (1, X).
FitResult ols_intercept(const Cluster& cluster);

/// Coefficient on the post-period dummy in the regression of outcome on
/// (1, post, X).
FitResult did_slope(const Cluster& cluster);

struct ProbitOptions {
    double tolerance = 1e-10;
    int max_iterations = 100;
    int max_halvings = 30;
    double separation_bound = 20.0;
    double divergence_bound = 1e3;
};

/// Sample moment m^{-1} sum (1, x')' (1{y > 0} - Phi(theta + eta'x)).
Eigen::VectorXd probit_moment(const Cluster& cluster, const Eigen::VectorXd& params);
/// Exact derivative of probit_moment: -m^{-1} sum (1,x')'(1,x') phi(theta + eta'x).
Eigen::MatrixXd probit_jacobian(const Cluster& cluster, const Eigen::VectorXd& params);

/**
 * Probit Z-estimate: a zero of probit_moment found by Newton's method from
 * the zero vector with step halving on the moment norm. Outcomes are read
 * as 1{y > 0}.
 *
 * Throws Separation if the outcome is constant or |theta| exceeds
 * options.separation_bound, NoConvergence if the iteration stalls or the
 * parameter norm exceeds options.divergence_bound.
 */
FitResult probit_z_estimate(const Cluster& cluster, const ProbitOptions& options = {});

FitResult fit_cluster(const Cluster& cluster, EstimatorKind kind);

/// Applies the fit to every cluster in canonical order. A per-cluster
/// failure is rethrown with the cluster id prefixed to the message.
EstimateVector estimate_all(const ClusterDataset& data, EstimatorKind kind);

}  // namespace fewclusters
