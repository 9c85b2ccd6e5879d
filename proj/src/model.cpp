#include "fewclusters/model.hpp"

#include "fewclusters/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace fewclusters {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NoTreated: return "NoTreated";
        case ErrorCode::NoUntreated: return "NoUntreated";
        case ErrorCode::EmptyCluster: return "EmptyCluster";
        case ErrorCode::RaggedCovariates: return "RaggedCovariates";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::GroupTooSmall: return "GroupTooSmall";
        case ErrorCode::DegenerateVariance: return "DegenerateVariance";
        case ErrorCode::Overflow: return "Overflow";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::MissingPeriodFlag: return "MissingPeriodFlag";
        case ErrorCode::Separation: return "Separation";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::Unbalanced: return "Unbalanced";
        case ErrorCode::HOutOfRange: return "HOutOfRange";
        case ErrorCode::MethodInapplicable: return "MethodInapplicable";
        case ErrorCode::Config: return "Config";
        case ErrorCode::Parse: return "Parse";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

Observation Cluster::observation(std::size_t i) const {
    Observation obs;
    const auto row = static_cast<Eigen::Index>(i);
    obs.outcome = outcome[row];
    obs.covariates.resize(covariate_dim());
    for (std::size_t j = 0; j < covariate_dim(); ++j) {
        obs.covariates[j] = covariates(row, static_cast<Eigen::Index>(j));
    }
    if (has_period_flag()) obs.period_post = post[i] != 0;
    return obs;
}

Cluster Cluster::from_observations(std::string id, bool treated,
                                   std::span<const Observation> rows) {
    if (rows.empty()) {
        throw Error(ErrorCode::EmptyCluster, "cluster '" + id + "' has no observations");
    }
    const std::size_t d = rows.front().covariates.size();
    const bool with_period = rows.front().period_post.has_value();

    Cluster c;
    c.id = std::move(id);
    c.treated = treated;
    c.outcome.resize(static_cast<Eigen::Index>(rows.size()));
    c.covariates.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    if (with_period) c.post.resize(rows.size());

    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.covariates.size() != d) {
            throw Error(ErrorCode::RaggedCovariates,
                        "cluster '" + c.id + "' mixes covariate dimensions");
        }
        if (r.period_post.has_value() != with_period) {
            throw Error(ErrorCode::MissingPeriodFlag,
                        "cluster '" + c.id + "' has a period flag on some rows only");
        }
        const auto row = static_cast<Eigen::Index>(i);
        c.outcome[row] = r.outcome;
        for (std::size_t j = 0; j < d; ++j) c.covariates(row, static_cast<Eigen::Index>(j)) = r.covariates[j];
        if (with_period) c.post[i] = *r.period_post ? 1 : 0;
    }
    return c;
}

ClusterLayout validate_dataset(std::vector<Cluster>& clusters) {
    std::size_t q1 = 0;
    std::size_t q0 = 0;
    std::optional<std::size_t> dim;
    for (const auto& c : clusters) {
        if (c.size() == 0) {
            throw Error(ErrorCode::EmptyCluster, "cluster '" + c.id + "' has no observations");
        }
        if (static_cast<std::size_t>(c.covariates.rows()) != c.size() ||
            (c.has_period_flag() && c.post.size() != c.size())) {
            throw Error(ErrorCode::RaggedCovariates,
                        "cluster '" + c.id + "' has columns of unequal length");
        }
        if (dim && *dim != c.covariate_dim()) {
            throw Error(ErrorCode::RaggedCovariates,
                        "cluster '" + c.id + "' has a different covariate dimension");
        }
        dim = c.covariate_dim();
        (c.treated ? q1 : q0) += 1;
    }
    if (q1 == 0) throw Error(ErrorCode::NoTreated, "no treated clusters");
    if (q0 == 0) throw Error(ErrorCode::NoUntreated, "no untreated clusters");

    std::stable_partition(clusters.begin(), clusters.end(),
                          [](const Cluster& c) { return c.treated; });
    return ClusterLayout{q1, q0};
}

ClusterDataset::ClusterDataset(std::vector<Cluster> clusters)
    : clusters_(std::move(clusters)) {
    layout_ = validate_dataset(clusters_);
}

std::size_t ClusterDataset::total_observations() const noexcept {
    std::size_t n = 0;
    for (const auto& c : clusters_) n += c.size();
    return n;
}

std::size_t ClusterDataset::covariate_dim() const noexcept {
    return clusters_.empty() ? 0 : clusters_.front().covariate_dim();
}

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
}

void fnv_double(std::uint64_t& h, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    fnv_bytes(h, &bits, sizeof bits);
}

}  // namespace

std::uint64_t ClusterDataset::fingerprint() const noexcept {
    std::uint64_t h = kFnvOffset;
    for (const auto& c : clusters_) {
        fnv_bytes(h, c.id.data(), c.id.size());
        const unsigned char t = c.treated ? 1 : 0;
        fnv_bytes(h, &t, 1);
        for (Eigen::Index i = 0; i < c.outcome.size(); ++i) fnv_double(h, c.outcome[i]);
        for (Eigen::Index j = 0; j < c.covariates.cols(); ++j)
            for (Eigen::Index i = 0; i < c.covariates.rows(); ++i) fnv_double(h, c.covariates(i, j));
        if (!c.post.empty()) fnv_bytes(h, c.post.data(), c.post.size());
    }
    return h;
}

EstimateVector::EstimateVector(std::vector<double> values, ClusterLayout layout)
    : values_(std::move(values)), layout_(layout) {
    if (layout_.q1 == 0) throw Error(ErrorCode::NoTreated, "layout has no treated clusters");
    if (layout_.q0 == 0) throw Error(ErrorCode::NoUntreated, "layout has no untreated clusters");
    if (values_.size() != layout_.q()) {
        throw Error(ErrorCode::InvalidArgument, "estimate vector length does not match layout");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "estimate is not finite");
    }
}

EstimateVector EstimateVector::negated() const {
    std::vector<double> neg(values_.size());
    std::transform(values_.begin(), values_.end(), neg.begin(), [](double v) { return -v; });
    return EstimateVector(std::move(neg), layout_);
}

Assignment Assignment::identity(const ClusterLayout& layout) {
    Assignment a;
    a.treated.resize(layout.q1);
    std::iota(a.treated.begin(), a.treated.end(), 0u);
    return a;
}

bool Assignment::is_identity() const noexcept {
    for (std::size_t i = 0; i < treated.size(); ++i) {
        if (treated[i] != i) return false;
    }
    return true;
}

std::string_view to_string(Side side) noexcept {
    switch (side) {
        case Side::Greater: return "greater";
        case Side::Less: return "less";
        case Side::TwoSided: return "two_sided";
    }
    return "greater";
}

Side side_from_string(std::string_view text) {
    if (text == "greater") return Side::Greater;
    if (text == "less") return Side::Less;
    if (text == "two" || text == "two_sided" || text == "two-sided") return Side::TwoSided;
    throw Error(ErrorCode::InvalidArgument, "unknown side '" + std::string(text) + "'");
}

void TestConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    }
    if (max_assignments && *max_assignments == 0) {
        throw Error(ErrorCode::InvalidArgument, "max_assignments must be at least 1");
    }
}

std::string_view to_string(Warning w) noexcept {
    switch (w) {
        case Warning::ZeroPower: return "ZeroPowerWarning";
    }
    return "Warning";
}

bool TestResult::has_warning(Warning w) const noexcept {
    return std::find(warnings.begin(), warnings.end(), w) != warnings.end();
}

}  // namespace fewclusters
