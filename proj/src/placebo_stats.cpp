#include "fewclusters/placebo_stats.hpp"

#include "fewclusters/error.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace fewclusters {

double pairwise_sum(std::span<const double> values) noexcept {
    constexpr std::size_t kBlock = 8;
    if (values.size() <= kBlock) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

struct Split {
    std::vector<double> treated;
    std::vector<double> untreated;
};

// Reused per thread; statistics are evaluated millions of times in the
// Monte Carlo runs.
Split& split_buffers() {
    thread_local Split s;
    return s;
}

void check_assignment(const EstimateVector& x, std::span<const std::uint32_t> treated) {
    if (treated.size() != x.layout().q1) {
        throw Error(ErrorCode::InvalidArgument, "assignment size does not match q1");
    }
    for (std::size_t i = 0; i < treated.size(); ++i) {
        if (treated[i] >= x.size() || (i > 0 && treated[i] <= treated[i - 1])) {
            throw Error(ErrorCode::InvalidArgument, "assignment indices must be sorted, distinct and in range");
        }
    }
}

Split& split(const EstimateVector& x, std::span<const std::uint32_t> treated) {
    auto& s = split_buffers();
    s.treated.clear();
    s.untreated.clear();
    std::size_t next = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (next < treated.size() && treated[next] == k) {
            s.treated.push_back(x[k]);
            ++next;
        } else {
            s.untreated.push_back(x[k]);
        }
    }
    return s;
}

double mean(std::span<const double> v) { return pairwise_sum(v) / static_cast<double>(v.size()); }

// Squared-deviation sum divided by n(n - 1).
double mean_variance(std::vector<double>& v) {
    const double m = mean(v);
    for (double& e : v) e = (e - m) * (e - m);
    const double n = static_cast<double>(v.size());
    return pairwise_sum(v) / (n * (n - 1.0));
}

bool is_identity(std::span<const std::uint32_t> treated) {
    for (std::size_t i = 0; i < treated.size(); ++i) {
        if (treated[i] != i) return false;
    }
    return true;
}

void require_groups(const ClusterLayout& layout) {
    if (layout.q1 < 2 || layout.q0 < 2) {
        throw Error(ErrorCode::GroupTooSmall,
                    "two-sample variance needs at least two treated and two untreated clusters");
    }
}

double unchecked_means(const EstimateVector& x, std::span<const std::uint32_t> treated) {
    const auto& s = split(x, treated);
    return mean(s.treated) - mean(s.untreated);
}

double unchecked_variance(const EstimateVector& x, std::span<const std::uint32_t> treated) {
    auto& s = split(x, treated);
    return mean_variance(s.treated) + mean_variance(s.untreated);
}

}  // namespace

double comparison_of_means(const EstimateVector& x, std::span<const std::uint32_t> treated) {
    check_assignment(x, treated);
    return unchecked_means(x, treated);
}

double comparison_of_means(const EstimateVector& x, const Assignment& a) {
    return comparison_of_means(x, std::span<const std::uint32_t>(a.treated));
}

double two_sample_variance(const EstimateVector& x, std::span<const std::uint32_t> treated) {
    check_assignment(x, treated);
    require_groups(x.layout());
    return unchecked_variance(x, treated);
}

double two_sample_variance(const EstimateVector& x, const Assignment& a) {
    return two_sample_variance(x, std::span<const std::uint32_t>(a.treated));
}

double scaled_variance(const EstimateVector& x, const Assignment& a) {
    const auto& l = x.layout();
    const double factor = static_cast<double>(l.q1) * static_cast<double>(l.q0) / static_cast<double>(l.q());
    return factor * two_sample_variance(x, a);
}

double adjusted_statistic(const EstimateVector& x, std::span<const std::uint32_t> treated) {
    check_assignment(x, treated);
    require_groups(x.layout());
    const double t = unchecked_means(x, treated);
    if (is_identity(treated)) return t;
    const double placebo_sd = std::sqrt(unchecked_variance(x, treated));
    if (placebo_sd == 0.0) {
        throw Error(ErrorCode::DegenerateVariance, "placebo two-sample variance is zero");
    }
    const auto identity = Assignment::identity(x.layout());
    const double observed_sd = std::sqrt(unchecked_variance(x, identity.treated));
    return t * observed_sd / placebo_sd;
}

double adjusted_statistic(const EstimateVector& x, const Assignment& a) {
    return adjusted_statistic(x, std::span<const std::uint32_t>(a.treated));
}

PlaceboEvaluator::PlaceboEvaluator(const EstimateVector& x, Adjustment adjustment)
    : x_(&x), adjustment_(adjustment) {
    if (adjustment_ == Adjustment::Adjusted) {
        require_groups(x.layout());
        const auto identity = Assignment::identity(x.layout());
        observed_sd_ = std::sqrt(unchecked_variance(x, identity.treated));
    }
}

double PlaceboEvaluator::operator()(std::span<const std::uint32_t> treated) const {
    const double t = unchecked_means(*x_, treated);
    if (adjustment_ == Adjustment::Unadjusted || is_identity(treated)) return t;
    const double placebo_sd = std::sqrt(unchecked_variance(*x_, treated));
    if (placebo_sd == 0.0) {
        if (t == 0.0) return 0.0;
        return std::copysign(std::numeric_limits<double>::infinity(), t);
    }
    return t * observed_sd_ / placebo_sd;
}

}  // namespace fewclusters
