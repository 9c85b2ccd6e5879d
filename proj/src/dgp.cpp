#include "fewclusters/dgp.hpp"

#include "fewclusters/error.hpp"
#include "fewclusters/rng.hpp"

#include <cmath>
#include <string>

namespace fewclusters {

std::vector<double> circular_ma(std::span<const double> source, std::size_t h) {
    const std::size_t m = source.size();
    if (m == 0 || h > m - 1) {
        throw Error(ErrorCode::HOutOfRange,
                    "dependence window h = " + std::to_string(h) + " needs at least h + 1 observations");
    }
    const double scale = 1.0 / static_cast<double>(h + 1);
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= h; ++j) s += source[(i + j) % m];
        out[i] = s * scale;
    }
    return out;
}

namespace {

enum class Law { Normal, CenteredChiSquare2 };

// Stream coordinates under a cluster: size, errors, then one per column.
constexpr std::uint64_t kSizeStream = 0;
constexpr std::uint64_t kErrorStream = 1;
constexpr std::uint64_t kColumnStreamBase = 2;

std::vector<double> draw_field(std::uint64_t seed, std::size_t m, Law law, double sd) {
    auto eng = make_engine(seed);
    std::vector<double> raw(m);
    for (auto& v : raw) {
        if (law == Law::Normal) {
            v = sd * std_normal(eng);
        } else {
            const double a = std_normal(eng);
            const double b = std_normal(eng);
            v = a * a + b * b - 2.0;
        }
    }
    return raw;
}

struct LatentSpec {
    std::size_t q1;
    std::size_t q0;
    std::size_t h;
    double beta;
    double theta0;
    const std::vector<double>* eta;
    SizeRange sizes;
    double treated_error_sd;
    double untreated_error_sd;
};

Cluster latent_cluster(const LatentSpec& spec, std::size_t k, std::uint64_t seed) {
    const bool treated = k < spec.q1;
    const std::uint64_t base = derive_seed(seed, {stream::kData, k});

    auto size_eng = make_engine(derive_seed(base, {kSizeStream}));
    const auto m = static_cast<std::size_t>(uniform_int(size_eng, spec.sizes.min, spec.sizes.max));
    const std::size_t d = spec.eta->size();

    Cluster c;
    c.id = (treated ? "T" : "U") + std::to_string(treated ? k + 1 : k + 1 - spec.q1);
    c.treated = treated;
    c.covariates.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    c.outcome.resize(static_cast<Eigen::Index>(m));

    const auto errors = circular_ma(
        draw_field(derive_seed(base, {kErrorStream}), m, Law::Normal,
                   treated ? spec.treated_error_sd : spec.untreated_error_sd),
        spec.h);
    for (std::size_t i = 0; i < m; ++i) {
        c.outcome[static_cast<Eigen::Index>(i)] = spec.theta0 + (treated ? spec.beta : 0.0) + errors[i];
    }
    for (std::size_t j = 0; j < d; ++j) {
        const auto column = circular_ma(
            draw_field(derive_seed(base, {kColumnStreamBase + j}), m,
                       treated ? Law::Normal : Law::CenteredChiSquare2, 1.0),
            spec.h);
        for (std::size_t i = 0; i < m; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            c.covariates(row, static_cast<Eigen::Index>(j)) = column[i];
            c.outcome[row] += (*spec.eta)[j] * column[i];
        }
    }
    return c;
}

void check_sizes(const SizeRange& sizes, std::size_t h) {
    if (sizes.min == 0 || sizes.min > sizes.max) {
        throw Error(ErrorCode::InvalidArgument, "cluster size range must satisfy 1 <= min <= max");
    }
    if (h > sizes.min - 1) {
        throw Error(ErrorCode::HOutOfRange, "dependence window h exceeds the smallest cluster size minus one");
    }
}

ClusterDataset generate(const LatentSpec& spec, std::uint64_t seed, bool binary) {
    if (spec.q1 == 0 || spec.q0 == 0) throw Error(ErrorCode::InvalidArgument, "design needs q1 >= 1 and q0 >= 1");
    check_sizes(spec.sizes, spec.h);
    std::vector<Cluster> clusters;
    clusters.reserve(spec.q1 + spec.q0);
    for (std::size_t k = 0; k < spec.q1 + spec.q0; ++k) {
        auto c = latent_cluster(spec, k, seed);
        if (binary) {
            for (Eigen::Index i = 0; i < c.outcome.size(); ++i) c.outcome[i] = c.outcome[i] > 0.0 ? 1.0 : 0.0;
        }
        clusters.push_back(std::move(c));
    }
    return ClusterDataset(std::move(clusters));
}

}  // namespace

ClusterDataset gen_linear(const LinearDesign& design, std::uint64_t seed) {
    const LatentSpec spec{design.q1, design.q0, design.h, design.beta, design.theta0, &design.eta,
                          design.sizes, std::sqrt(design.treated_error_variance),
                          std::sqrt(design.untreated_error_variance)};
    return generate(spec, seed, false);
}

ClusterDataset gen_probit(const ProbitDesign& design, std::uint64_t seed) {
    const LatentSpec spec{design.q1, design.q0, design.h, design.beta, design.theta0, &design.eta,
                          design.sizes, 1.0, 1.0};
    return generate(spec, seed, true);
}

ClusterDataset gen_did_panel(const DidPanelDesign& design, std::uint64_t seed) {
    if (design.q1 == 0 || design.q0 == 0) throw Error(ErrorCode::InvalidArgument, "design needs q1 >= 1 and q0 >= 1");
    if (design.t0 == 0 || design.t0 >= design.periods) {
        throw Error(ErrorCode::InvalidArgument, "intervention period must leave pre and post observations");
    }
    std::vector<Cluster> clusters;
    for (std::size_t k = 0; k < design.q1 + design.q0; ++k) {
        const bool treated = k < design.q1;
        auto eng = make_engine(derive_seed(seed, {stream::kData, k}));
        const double zeta = design.fixed_effect_sd * std_normal(eng);
        Cluster c;
        c.id = (treated ? "T" : "U") + std::to_string(treated ? k + 1 : k + 1 - design.q1);
        c.treated = treated;
        c.outcome.resize(static_cast<Eigen::Index>(design.periods));
        c.covariates.resize(static_cast<Eigen::Index>(design.periods), 0);
        c.post.resize(design.periods);
        for (std::size_t t = 1; t <= design.periods; ++t) {
            const bool post = t > design.t0;
            const double noise = design.noise_sd * std_normal(eng);
            c.post[t - 1] = post ? 1 : 0;
            c.outcome[static_cast<Eigen::Index>(t - 1)] =
                (post ? design.theta0 + (treated ? design.beta : 0.0) : 0.0) + zeta + noise;
        }
        clusters.push_back(std::move(c));
    }
    return ClusterDataset(std::move(clusters));
}

}  // namespace fewclusters
