#include "fewclusters/estimators.hpp"

#include "fewclusters/error.hpp"
#include "fewclusters/parallel.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace fewclusters {

std::string_view to_string(EstimatorKind kind) noexcept {
    switch (kind) {
        case EstimatorKind::OlsIntercept: return "ols";
        case EstimatorKind::DidSlope: return "did";
        case EstimatorKind::Probit: return "probit";
    }
    return "ols";
}

EstimatorKind estimator_from_string(std::string_view text) {
    if (text == "ols" || text == "ols_intercept") return EstimatorKind::OlsIntercept;
    if (text == "did" || text == "did_slope") return EstimatorKind::DidSlope;
    if (text == "probit") return EstimatorKind::Probit;
    throw Error(ErrorCode::InvalidArgument, "unknown estimator '" + std::string(text) + "'");
}

Eigen::VectorXd least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
    if (design.rows() < design.cols()) {
        throw Error(ErrorCode::RankDeficient, "fewer observations than regressors");
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < design.cols()) {
        throw Error(ErrorCode::RankDeficient, "design matrix is rank deficient");
    }
    return qr.solve(y);
}

FitResult ols_intercept(const Cluster& cluster) {
    const auto m = static_cast<Eigen::Index>(cluster.size());
    const auto d = static_cast<Eigen::Index>(cluster.covariate_dim());
    Eigen::MatrixXd design(m, d + 1);
    design.col(0).setOnes();
    design.rightCols(d) = cluster.covariates;
    const Eigen::VectorXd coef = least_squares(design, cluster.outcome);
    FitResult fit;
    fit.theta = coef[0];
    fit.nuisance = coef.tail(d);
    return fit;
}

FitResult did_slope(const Cluster& cluster) {
    if (!cluster.has_period_flag()) {
        throw Error(ErrorCode::MissingPeriodFlag, "cluster has no post-period indicator");
    }
    const auto m = static_cast<Eigen::Index>(cluster.size());
    const auto d = static_cast<Eigen::Index>(cluster.covariate_dim());
    Eigen::MatrixXd design(m, d + 2);
    design.col(0).setOnes();
    for (Eigen::Index i = 0; i < m; ++i) design(i, 1) = cluster.post[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    design.rightCols(d) = cluster.covariates;
    const Eigen::VectorXd coef = least_squares(design, cluster.outcome);
    FitResult fit;
    fit.theta = coef[1];
    fit.nuisance.resize(d + 1);
    fit.nuisance[0] = coef[0];
    fit.nuisance.tail(d) = coef.tail(d);
    return fit;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) {
    constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
    return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

Eigen::MatrixXd augmented(const Cluster& cluster) {
    const auto m = static_cast<Eigen::Index>(cluster.size());
    const auto d = static_cast<Eigen::Index>(cluster.covariate_dim());
    Eigen::MatrixXd design(m, d + 1);
    design.col(0).setOnes();
    design.rightCols(d) = cluster.covariates;
    return design;
}

Eigen::VectorXd moment(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& params) {
    const Eigen::VectorXd index = design * params;
    Eigen::VectorXd resid(index.size());
    for (Eigen::Index i = 0; i < index.size(); ++i) {
        resid[i] = (y[i] > 0.0 ? 1.0 : 0.0) - normal_cdf(index[i]);
    }
    return design.transpose() * resid / static_cast<double>(design.rows());
}

Eigen::MatrixXd jacobian(const Eigen::MatrixXd& design, const Eigen::VectorXd& params) {
    const Eigen::VectorXd index = design * params;
    Eigen::VectorXd w(index.size());
    for (Eigen::Index i = 0; i < index.size(); ++i) w[i] = normal_pdf(index[i]);
    return -(design.transpose() * w.asDiagonal() * design) / static_cast<double>(design.rows());
}

}  // namespace

Eigen::VectorXd probit_moment(const Cluster& cluster, const Eigen::VectorXd& params) {
    return moment(augmented(cluster), cluster.outcome, params);
}

Eigen::MatrixXd probit_jacobian(const Cluster& cluster, const Eigen::VectorXd& params) {
    return jacobian(augmented(cluster), params);
}

FitResult probit_z_estimate(const Cluster& cluster, const ProbitOptions& options) {
    const Eigen::MatrixXd design = augmented(cluster);
    const Eigen::VectorXd& y = cluster.outcome;

    Eigen::Index successes = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) successes += y[i] > 0.0 ? 1 : 0;
    if (successes == 0 || successes == y.size()) {
        throw Error(ErrorCode::Separation, "binary outcome is constant within the cluster");
    }

    Eigen::VectorXd params = Eigen::VectorXd::Zero(design.cols());
    Eigen::VectorXd psi = moment(design, y, params);
    double norm = psi.norm();

    FitResult fit;
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (norm < options.tolerance) {
            fit.iterations = iter;
            fit.theta = params[0];
            fit.nuisance = params.tail(params.size() - 1);
            return fit;
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jacobian(design, params));
        if (qr.rank() < design.cols()) {
            throw Error(ErrorCode::RankDeficient, "probit Jacobian is singular");
        }
        const Eigen::VectorXd step = qr.solve(psi);

        double scale = 1.0;
        Eigen::VectorXd trial;
        Eigen::VectorXd trial_psi;
        double trial_norm = norm;
        bool improved = false;
        for (int h = 0; h <= options.max_halvings; ++h, scale *= 0.5) {
            trial = params - scale * step;
            trial_psi = moment(design, y, trial);
            trial_norm = trial_psi.norm();
            if (trial_norm < norm) {
                improved = true;
                break;
            }
        }
        if (!improved) {
            throw Error(ErrorCode::NoConvergence, "probit line search failed to reduce the moment norm");
        }
        params = trial;
        psi = trial_psi;
        norm = trial_norm;
        if (std::abs(params[0]) > options.separation_bound) {
            throw Error(ErrorCode::Separation, "probit intercept diverges; the data look separated");
        }
        if (params.norm() > options.divergence_bound) {
            throw Error(ErrorCode::NoConvergence, "probit parameters diverge");
        }
    }
    if (norm < options.tolerance) {
        fit.iterations = options.max_iterations;
        fit.theta = params[0];
        fit.nuisance = params.tail(params.size() - 1);
        return fit;
    }
    throw Error(ErrorCode::NoConvergence, "probit Newton iteration did not converge");
}

FitResult fit_cluster(const Cluster& cluster, EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::OlsIntercept: return ols_intercept(cluster);
        case EstimatorKind::DidSlope: return did_slope(cluster);
        case EstimatorKind::Probit: return probit_z_estimate(cluster);
    }
    return {};
}

EstimateVector estimate_all(const ClusterDataset& data, EstimatorKind kind) {
    std::vector<double> theta(data.size());
    parallel_for(data.size(), [&](std::size_t k) {
        try {
            theta[k] = fit_cluster(data[k], kind).theta;
        } catch (const Error& e) {
            throw Error(e.code(), "cluster '" + data[k].id + "': " + e.what());
        }
    });
    return EstimateVector(std::move(theta), data.layout());
}

}  // namespace fewclusters
