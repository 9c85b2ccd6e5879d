#include "fewclusters/comparators.hpp"

#include "fewclusters/error.hpp"
#include "fewclusters/estimators.hpp"
#include "fewclusters/permutation.hpp"
#include "fewclusters/placebo_stats.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace fewclusters {

namespace {

double ratio_or_infinity(double num, double den) {
    if (den > 0.0) return num / den;
    if (num == 0.0) return 0.0;
    return std::copysign(std::numeric_limits<double>::infinity(), num);
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
}

// Decision against a t(df) reference distribution.
TestResult t_reference_test(double stat, double df, double alpha, Side side) {
    check_alpha(alpha);
    const boost::math::students_t dist(df);
    TestResult r;
    r.statistic = stat;
    const auto upper_tail = [&](double t) {
        if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
        return boost::math::cdf(boost::math::complement(dist, t));
    };
    switch (side) {
        case Side::Greater:
            r.critical_value = boost::math::quantile(boost::math::complement(dist, alpha));
            r.reject = stat > r.critical_value;
            r.p_value = upper_tail(stat);
            break;
        case Side::Less:
            r.critical_value = -boost::math::quantile(boost::math::complement(dist, alpha));
            r.reject = stat < r.critical_value;
            r.p_value = upper_tail(-stat);
            break;
        case Side::TwoSided:
            r.critical_value = boost::math::quantile(boost::math::complement(dist, alpha / 2.0));
            r.reject = std::abs(stat) > r.critical_value;
            r.p_value = std::min(1.0, 2.0 * upper_tail(std::abs(stat)));
            break;
    }
    return r;
}

}  // namespace

TestResult im_t_test(const EstimateVector& x, double alpha, Side side) {
    const auto identity = Assignment::identity(x.layout());
    const double diff = comparison_of_means(x, identity);
    const double sd = std::sqrt(two_sample_variance(x, identity));
    const double df = static_cast<double>(std::min(x.layout().q1, x.layout().q0) - 1);
    auto r = t_reference_test(ratio_or_infinity(diff, sd), df, alpha, side);
    r.n_assignments = 0;
    return r;
}

std::vector<ClusterPair> pair_clusters(const ClusterDataset& data, PairingStrategy strategy,
                                       std::uint64_t seed) {
    const auto& layout = data.layout();
    if (layout.q1 != layout.q0) {
        throw Error(ErrorCode::Unbalanced, "matched pairs need as many treated as untreated clusters");
    }
    std::vector<std::size_t> treated(layout.q1);
    std::vector<std::size_t> untreated(layout.q0);
    std::iota(treated.begin(), treated.end(), 0);
    std::iota(untreated.begin(), untreated.end(), layout.q1);

    if (strategy == PairingStrategy::Random) {
        auto eng = make_engine(derive_seed(seed, {stream::kPairing}));
        for (std::size_t i = untreated.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(eng, 0, i - 1));
            std::swap(untreated[i - 1], untreated[j]);
        }
    } else {
        const auto by_size = [&](std::size_t a, std::size_t b) { return data[a].size() < data[b].size(); };
        std::stable_sort(treated.begin(), treated.end(), by_size);
        std::stable_sort(untreated.begin(), untreated.end(), by_size);
    }

    std::vector<ClusterPair> pairs(layout.q1);
    for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = {treated[i], untreated[i]};
    return pairs;
}

namespace {

// Stacked regression data with cluster row offsets.
struct PooledData {
    Eigen::MatrixXd design;  // columns: 1, D, X
    Eigen::VectorXd outcome;
    std::vector<Eigen::Index> offsets;  // size q + 1
};

PooledData stack(const ClusterDataset& data, std::span<const std::size_t> members) {
    const auto d = static_cast<Eigen::Index>(data.covariate_dim());
    Eigen::Index n = 0;
    for (auto k : members) n += static_cast<Eigen::Index>(data[k].size());
    PooledData p;
    p.design.resize(n, d + 2);
    p.outcome.resize(n);
    p.offsets.reserve(members.size() + 1);
    Eigen::Index row = 0;
    for (auto k : members) {
        const auto& c = data[k];
        const auto m = static_cast<Eigen::Index>(c.size());
        p.offsets.push_back(row);
        p.design.block(row, 0, m, 1).setOnes();
        p.design.block(row, 1, m, 1).setConstant(c.treated ? 1.0 : 0.0);
        p.design.block(row, 2, m, d) = c.covariates;
        p.outcome.segment(row, m) = c.outcome;
        row += m;
    }
    p.offsets.push_back(row);
    return p;
}

std::vector<std::size_t> all_clusters(const ClusterDataset& data) {
    std::vector<std::size_t> v(data.size());
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// Precomputed pieces of the pooled CRVE t statistic for a fixed design.
class CrveSolver {
public:
    CrveSolver(const Eigen::MatrixXd& design, std::vector<Eigen::Index> offsets)
        : design_(design), offsets_(std::move(offsets)) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design_);
        if (design_.rows() <= design_.cols() || qr.rank() < design_.cols()) {
            throw Error(ErrorCode::RankDeficient, "pooled design matrix is rank deficient");
        }
        bread_ = (design_.transpose() * design_).inverse();
        projector_ = bread_ * design_.transpose();
        const auto n = static_cast<std::size_t>(design_.rows());
        const auto q = offsets_.size() - 1;
        factor_ = crve_dof_factor(n, static_cast<std::size_t>(design_.cols()), q);
    }

    PooledFit fit(const Eigen::VectorXd& y) const {
        const Eigen::VectorXd coef = projector_ * y;
        const Eigen::VectorXd resid = y - design_ * coef;
        // Only the treatment row of bread * meat * bread is needed.
        const Eigen::RowVectorXd b1 = bread_.row(1);
        double meat = 0.0;
        for (std::size_t g = 0; g + 1 < offsets_.size(); ++g) {
            const Eigen::Index begin = offsets_[g];
            const Eigen::Index len = offsets_[g + 1] - begin;
            const Eigen::VectorXd score = design_.middleRows(begin, len).transpose() * resid.segment(begin, len);
            const double s = b1.dot(score);
            meat += s * s;
        }
        PooledFit f;
        f.beta_hat = coef[1];
        f.se_crve = std::sqrt(factor_ * meat);
        f.t_stat = ratio_or_infinity(f.beta_hat, f.se_crve);
        f.n = static_cast<std::size_t>(design_.rows());
        f.q = offsets_.size() - 1;
        f.d = static_cast<std::size_t>(design_.cols());
        return f;
    }

private:
    Eigen::MatrixXd design_;
    std::vector<Eigen::Index> offsets_;
    Eigen::MatrixXd bread_;
    Eigen::MatrixXd projector_;
    double factor_ = 1.0;
};

}  // namespace

std::vector<double> pair_effects_ols(const ClusterDataset& data, std::span<const ClusterPair> pairs) {
    std::vector<double> effects;
    effects.reserve(pairs.size());
    for (const auto& pair : pairs) {
        const std::array<std::size_t, 2> members{pair.treated, pair.untreated};
        const auto p = stack(data, members);
        effects.push_back(least_squares(p.design, p.outcome)[1]);
    }
    return effects;
}

std::vector<double> pair_effects_difference(const EstimateVector& x, std::span<const ClusterPair> pairs) {
    std::vector<double> effects;
    effects.reserve(pairs.size());
    for (const auto& pair : pairs) effects.push_back(x[pair.treated] - x[pair.untreated]);
    return effects;
}

double crs_statistic(std::span<const double> effects) {
    const double mean = pairwise_sum(effects) / static_cast<double>(effects.size());
    std::vector<double> sq(effects.size());
    std::transform(effects.begin(), effects.end(), sq.begin(), [mean](double b) { return (b - mean) * (b - mean); });
    return ratio_or_infinity(mean, std::sqrt(pairwise_sum(sq)));
}

namespace {

TestResult crs_greater(std::span<const double> effects, double alpha, bool randomized, std::uint64_t seed) {
    const std::size_t q = effects.size();
    const std::size_t count = std::size_t{1} << q;
    std::vector<double> flipped(q);
    std::vector<double> stats(count);
    // Mask 0 (no flips) is the observed statistic.
    for (std::size_t mask = 0; mask < count; ++mask) {
        for (std::size_t k = 0; k < q; ++k) flipped[k] = (mask >> k) & 1U ? -effects[k] : effects[k];
        stats[mask] = crs_statistic(flipped);
    }
    const auto threshold = randomized_threshold(stats, alpha);
    TestResult r;
    r.statistic = stats.front();
    r.critical_value = threshold.critical_value;
    r.randomized_threshold = threshold.delta;
    r.p_value = p_value(r.statistic, stats);
    r.n_assignments = count;
    r.randomized = randomized;
    r.reject = r.statistic > r.critical_value;
    if (randomized && !r.reject && r.statistic == r.critical_value) {
        auto eng = make_engine(derive_seed(seed, {stream::kRandomizedTest}));
        r.reject = uniform01(eng) < threshold.delta;
    }
    if (quantile_rank(count, alpha) == count) r.warnings.push_back(Warning::ZeroPower);
    return r;
}

}  // namespace

TestResult crs_sign_test(std::span<const double> effects, double alpha, bool randomized,
                         std::uint64_t seed, Side side) {
    check_alpha(alpha);
    if (effects.size() < 2) throw Error(ErrorCode::GroupTooSmall, "sign-change test needs at least two pairs");
    if (effects.size() > 24) throw Error(ErrorCode::Overflow, "too many pairs to enumerate all sign changes");
    std::vector<double> neg(effects.size());
    std::transform(effects.begin(), effects.end(), neg.begin(), [](double b) { return -b; });
    switch (side) {
        case Side::Greater:
            return crs_greater(effects, alpha, randomized, seed);
        case Side::Less: {
            auto r = crs_greater(neg, alpha, randomized, seed);
            r.statistic = -r.statistic;
            r.critical_value = -r.critical_value;
            return r;
        }
        case Side::TwoSided: {
            auto upper = crs_greater(effects, alpha / 2.0, randomized, seed);
            const auto lower = crs_greater(neg, alpha / 2.0, randomized, derive_seed(seed, {1}));
            upper.reject = upper.reject || lower.reject;
            upper.p_value = std::min(1.0, 2.0 * std::min(upper.p_value, lower.p_value));
            return upper;
        }
    }
    return {};
}

double crve_dof_factor(std::size_t n, std::size_t d, std::size_t q) {
    if (n <= d || q < 2) throw Error(ErrorCode::InvalidArgument, "CRVE correction needs n > d and q >= 2");
    return static_cast<double>(n - 1) * static_cast<double>(q) /
           (static_cast<double>(n - d) * static_cast<double>(q - 1));
}

PooledFit pooled_ols_crve(const ClusterDataset& data) {
    const auto members = all_clusters(data);
    const auto p = stack(data, members);
    const CrveSolver solver(p.design, p.offsets);
    return solver.fit(p.outcome);
}

TestResult bch_t_test(const PooledFit& fit, double alpha, Side side) {
    if (fit.q < 2) throw Error(ErrorCode::InvalidArgument, "t(q - 1) reference needs q >= 2");
    return t_reference_test(fit.t_stat, static_cast<double>(fit.q - 1), alpha, side);
}

double webb_weight(Engine& eng) {
    static const std::array<double, 6> kSupport{-std::sqrt(1.5), -1.0, -std::sqrt(0.5),
                                               std::sqrt(0.5),  1.0,  std::sqrt(1.5)};
    return kSupport[uniform_int(eng, 0, 5)];
}

TestResult wild_cluster_bootstrap_test(const ClusterDataset& data, double alpha, Side side,
                                       std::size_t reps, std::uint64_t seed) {
    check_alpha(alpha);
    if (reps == 0) throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least one repetition");
    const auto members = all_clusters(data);
    const auto p = stack(data, members);
    const CrveSolver solver(p.design, p.offsets);
    const PooledFit observed = solver.fit(p.outcome);

    // Null imposed: drop the treatment column.
    Eigen::MatrixXd restricted(p.design.rows(), p.design.cols() - 1);
    restricted.col(0) = p.design.col(0);
    restricted.rightCols(p.design.cols() - 2) = p.design.rightCols(p.design.cols() - 2);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(restricted);
    if (qr.rank() < restricted.cols()) {
        throw Error(ErrorCode::RankDeficient, "restricted design matrix is rank deficient");
    }
    const Eigen::VectorXd fitted = restricted * qr.solve(p.outcome);
    const Eigen::VectorXd resid = p.outcome - fitted;

    auto eng = make_engine(derive_seed(seed, {stream::kBootstrap}));
    std::vector<double> boot(reps);
    Eigen::VectorXd y_star(p.outcome.size());
    for (std::size_t b = 0; b < reps; ++b) {
        for (std::size_t g = 0; g + 1 < p.offsets.size(); ++g) {
            const double w = webb_weight(eng);
            const Eigen::Index begin = p.offsets[g];
            const Eigen::Index len = p.offsets[g + 1] - begin;
            y_star.segment(begin, len) = fitted.segment(begin, len) + w * resid.segment(begin, len);
        }
        boot[b] = solver.fit(y_star).t_stat;
    }

    const double t = observed.t_stat;
    std::size_t extreme = 0;
    for (double tb : boot) {
        switch (side) {
            case Side::Greater: extreme += tb >= t ? 1 : 0; break;
            case Side::Less: extreme += tb <= t ? 1 : 0; break;
            case Side::TwoSided: extreme += std::abs(tb) >= std::abs(t) ? 1 : 0; break;
        }
    }
    TestResult r;
    r.statistic = t;
    r.p_value = static_cast<double>(extreme) / static_cast<double>(reps);
    r.reject = r.p_value <= alpha;
    r.n_assignments = reps;
    std::vector<double> ref = boot;
    if (side == Side::Less) {
        for (double& v : ref) v = -v;
        r.critical_value = -permutation_quantile(ref, alpha);
    } else if (side == Side::TwoSided) {
        for (double& v : ref) v = std::abs(v);
        r.critical_value = permutation_quantile(ref, alpha);
    } else {
        r.critical_value = permutation_quantile(ref, alpha);
    }
    return r;
}

}  // namespace fewclusters
