#include "fewclusters/permutation.hpp"

#include "fewclusters/error.hpp"
#include "fewclusters/parallel.hpp"
#include "fewclusters/placebo_stats.hpp"
#include "fewclusters/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace fewclusters {

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) noexcept {
    if (k > n) return 0;
    k = std::min(k, n - k);
    constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t result = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        // result * (n - k + i) / i stays integral at every step.
        const std::uint64_t num = n - k + i;
        const std::uint64_t g = std::gcd(result, i);
        const std::uint64_t r = result / g;
        const std::uint64_t d = i / g;
        const std::uint64_t m = num / d;
        if (r > kMax / m) return kMax;
        result = r * m;
    }
    return result;
}

Assignment AssignmentSet::at(std::size_t i) const {
    const auto s = (*this)[i];
    return Assignment{std::vector<std::uint32_t>(s.begin(), s.end())};
}

void AssignmentSet::push_back(std::span<const std::uint32_t> treated) {
    indices_.insert(indices_.end(), treated.begin(), treated.end());
}

AssignmentSet enumerate_assignments(const ClusterLayout& layout, std::uint64_t cap) {
    const std::uint64_t count = binomial(layout.q(), layout.q1);
    if (count > cap) {
        throw Error(ErrorCode::Overflow,
                    "C(" + std::to_string(layout.q()) + ", " + std::to_string(layout.q1) +
                        ") assignments exceed the enumeration cap; use subsampling");
    }
    AssignmentSet set(layout);
    set.reserve(count);
    const auto q = static_cast<std::uint32_t>(layout.q());
    const auto q1 = static_cast<std::uint32_t>(layout.q1);
    std::vector<std::uint32_t> comb(q1);
    for (std::uint32_t i = 0; i < q1; ++i) comb[i] = i;
    while (true) {
        set.push_back(comb);
        // Advance to the next combination in lexicographic order.
        std::int64_t i = static_cast<std::int64_t>(q1) - 1;
        while (i >= 0 && comb[i] == q - q1 + static_cast<std::uint32_t>(i)) --i;
        if (i < 0) break;
        ++comb[i];
        for (auto j = static_cast<std::uint32_t>(i) + 1; j < q1; ++j) comb[j] = comb[j - 1] + 1;
    }
    return set;
}

AssignmentSet subsample_assignments(const ClusterLayout& layout, std::size_t draws,
                                    std::uint64_t seed) {
    if (draws == 0) throw Error(ErrorCode::InvalidArgument, "subsample size M must be at least 1");
    AssignmentSet set(layout);
    set.reserve(draws + 1);
    set.push_back(Assignment::identity(layout).treated);

    auto eng = make_engine(derive_seed(seed, {stream::kSubsample}));
    const auto q = static_cast<std::uint32_t>(layout.q());
    const auto q1 = static_cast<std::uint32_t>(layout.q1);
    std::vector<std::uint32_t> pick;
    pick.reserve(q1);
    for (std::size_t d = 0; d < draws; ++d) {
        // Floyd's algorithm: a uniform q1-subset of {0, ..., q - 1}.
        pick.clear();
        for (std::uint32_t j = q - q1; j < q; ++j) {
            const auto t = static_cast<std::uint32_t>(uniform_int(eng, 0, j));
            if (std::find(pick.begin(), pick.end(), t) == pick.end()) {
                pick.push_back(t);
            } else {
                pick.push_back(j);
            }
        }
        std::sort(pick.begin(), pick.end());
        set.push_back(pick);
    }
    return set;
}

std::size_t quantile_rank(std::size_t n, double alpha) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty placebo distribution");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    const double dn = static_cast<double>(n);
    std::size_t floor_count = static_cast<std::size_t>(std::floor(dn * alpha));
    // Nudge onto the exact boundary of {g : g / N <= alpha}.
    while (floor_count + 1 < n && static_cast<double>(floor_count + 1) / dn <= alpha) ++floor_count;
    while (floor_count > 0 && static_cast<double>(floor_count) / dn > alpha) --floor_count;
    return n - floor_count;
}

double permutation_quantile(std::span<const double> stats, double alpha) {
    const std::size_t k = quantile_rank(stats.size(), alpha);
    std::vector<double> sorted(stats.begin(), stats.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
    return sorted[k - 1];
}

double p_value(double observed, std::span<const double> stats) {
    if (stats.empty()) throw Error(ErrorCode::InvalidArgument, "empty placebo distribution");
    const auto count = std::count_if(stats.begin(), stats.end(), [observed](double s) { return s >= observed; });
    return static_cast<double>(count) / static_cast<double>(stats.size());
}

RandomizedThreshold randomized_threshold(std::span<const double> stats, double alpha) {
    RandomizedThreshold r;
    r.critical_value = permutation_quantile(stats, alpha);
    std::size_t above = 0;
    std::size_t equal = 0;
    for (double s : stats) {
        if (s > r.critical_value) ++above;
        else if (s == r.critical_value) ++equal;
    }
    r.delta = (static_cast<double>(stats.size()) * alpha - static_cast<double>(above)) /
              static_cast<double>(equal);
    return r;
}

namespace {

AssignmentSet build_assignments(const ClusterLayout& layout, const TestConfig& cfg,
                                std::uint64_t cap) {
    const std::uint64_t full = binomial(layout.q(), layout.q1);
    if (cfg.max_assignments && *cfg.max_assignments < full) {
        return subsample_assignments(layout, *cfg.max_assignments, cfg.seed);
    }
    return enumerate_assignments(layout, cap);
}

constexpr std::size_t kParallelThreshold = 4096;

}  // namespace

PlaceboTest::PlaceboTest(const ClusterLayout& layout, const TestConfig& config,
                         std::uint64_t enumeration_cap)
    : layout_(layout), config_(config), assignments_(layout) {
    config_.validate();
    if (layout.q1 == 0) throw Error(ErrorCode::NoTreated, "no treated clusters");
    if (layout.q0 == 0) throw Error(ErrorCode::NoUntreated, "no untreated clusters");
    if (config_.adjustment == Adjustment::Adjusted && (layout.q1 < 2 || layout.q0 < 2)) {
        throw Error(ErrorCode::GroupTooSmall,
                    "the adjusted placebo test needs at least two treated and two untreated clusters");
    }
    assignments_ = build_assignments(layout, config_, enumeration_cap);
}

std::vector<double> PlaceboTest::placebo_statistics(const EstimateVector& x) const {
    if (!(x.layout() == layout_)) throw Error(ErrorCode::InvalidArgument, "estimate layout differs from test layout");
    const PlaceboEvaluator eval(x, config_.adjustment);
    std::vector<double> stats(assignments_.size());
    if (stats.size() < kParallelThreshold) {
        for (std::size_t i = 0; i < stats.size(); ++i) stats[i] = eval(assignments_[i]);
    } else {
        parallel_for(stats.size(), [&](std::size_t i) { stats[i] = eval(assignments_[i]); });
    }
    return stats;
}

TestResult PlaceboTest::one_sided(const EstimateVector& x, double alpha) const {
    const auto stats = placebo_statistics(x);
    // Element 0 is always the identity assignment.
    const double observed = stats.front();
    const auto threshold = randomized_threshold(stats, alpha);

    TestResult r;
    r.statistic = observed;
    r.critical_value = threshold.critical_value;
    r.randomized_threshold = threshold.delta;
    r.p_value = p_value(observed, stats);
    r.reject = observed > threshold.critical_value;
    r.n_assignments = stats.size();
    if (quantile_rank(stats.size(), alpha) == stats.size()) r.warnings.push_back(Warning::ZeroPower);
    return r;
}

TestResult PlaceboTest::run(const EstimateVector& x) const {
    switch (config_.side) {
        case Side::Greater:
            return one_sided(x, config_.alpha);
        case Side::Less: {
            auto r = one_sided(x.negated(), config_.alpha);
            // Report on the original scale: reject iff statistic < critical value.
            r.statistic = -r.statistic;
            r.critical_value = -r.critical_value;
            return r;
        }
        case Side::TwoSided: {
            const double half = config_.alpha / 2.0;
            auto upper = one_sided(x, half);
            const auto lower = one_sided(x.negated(), half);
            upper.reject = upper.reject || lower.reject;
            upper.p_value = std::min(1.0, 2.0 * std::min(upper.p_value, lower.p_value));
            return upper;
        }
    }
    return {};
}

TestResult run_placebo_test(const EstimateVector& x, const TestConfig& config) {
    return PlaceboTest(x.layout(), config).run(x);
}

}  // namespace fewclusters
