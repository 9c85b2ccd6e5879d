#include <doctest.h>

#include "fewclusters/comparators.hpp"
#include "fewclusters/dgp.hpp"
#include "fewclusters/error.hpp"
#include "fewclusters/rng.hpp"

#include <cmath>
#include <numeric>

using namespace fewclusters;

namespace {

Cluster sized_cluster(std::string id, bool treated, std::size_t m) {
    Cluster c;
    c.id = std::move(id);
    c.treated = treated;
    c.outcome = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    c.covariates.resize(static_cast<Eigen::Index>(m), 0);
    return c;
}

// Brute-force sign-change p-value, written without the library statistic.
double oracle_sign_p(const std::vector<double>& b) {
    const auto stat = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double e : v) mean += e;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double e : v) ss += (e - mean) * (e - mean);
        return mean / std::sqrt(ss);
    };
    const double observed = stat(b);
    const std::size_t count = std::size_t{1} << b.size();
    std::size_t at_least = 0;
    for (std::size_t mask = 0; mask < count; ++mask) {
        auto v = b;
        for (std::size_t k = 0; k < v.size(); ++k) {
            if ((mask >> k) & 1U) v[k] = -v[k];
        }
        if (mask == 0 || stat(v) >= observed) ++at_least;
    }
    return static_cast<double>(at_least) / static_cast<double>(count);
}

}  // namespace

TEST_CASE("IM t test by hand") {
    const EstimateVector x({3, 1, 2, 0}, ClusterLayout{2, 2});
    const auto r = im_t_test(x, 0.05, Side::Greater);
    CHECK(r.statistic == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(r.critical_value == doctest::Approx(6.314).epsilon(1e-3));
    CHECK_FALSE(r.reject);

    const EstimateVector flat({2, 0, 0, 2}, ClusterLayout{2, 2});
    CHECK(im_t_test(flat, 0.05, Side::Greater).statistic == 0.0);
    CHECK_FALSE(im_t_test(flat, 0.45, Side::Greater).reject);
}

TEST_CASE("IM and CRS decisions are scale invariant") {
    auto eng = make_engine(50);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(8), w(8);
        for (std::size_t k = 0; k < 8; ++k) {
            v[k] = std_normal(eng) + (k < 4 ? 1.0 : 0.0);
            w[k] = 10.0 * v[k];
        }
        const ClusterLayout layout{4, 4};
        CHECK(im_t_test(EstimateVector(v, layout), 0.1, Side::Greater).reject ==
              im_t_test(EstimateVector(w, layout), 0.1, Side::Greater).reject);
        std::vector<double> e(v.begin(), v.begin() + 6), f(w.begin(), w.begin() + 6);
        CHECK(crs_sign_test(e, 0.1, false, 0).reject == crs_sign_test(f, 0.1, false, 0).reject);
    }
}

TEST_CASE("pairing by size") {
    std::vector<Cluster> clusters{sized_cluster("t30", true, 30), sized_cluster("t10", true, 10),
                                  sized_cluster("t20", true, 20), sized_cluster("u19", false, 19),
                                  sized_cluster("u33", false, 33), sized_cluster("u12", false, 12)};
    const ClusterDataset data(clusters);
    const auto pairs = pair_clusters(data, PairingStrategy::BySize, 0);
    REQUIRE(pairs.size() == 3);
    std::vector<std::pair<std::string, std::string>> named;
    for (const auto& p : pairs) named.emplace_back(data[p.treated].id, data[p.untreated].id);
    CHECK(named == std::vector<std::pair<std::string, std::string>>{{"t10", "u12"}, {"t20", "u19"}, {"t30", "u33"}});
}

TEST_CASE("pairing errors and determinism") {
    std::vector<Cluster> unbalanced{sized_cluster("a", true, 3), sized_cluster("b", true, 3),
                                    sized_cluster("c", false, 3), sized_cluster("d", false, 3),
                                    sized_cluster("e", false, 3)};
    try {
        pair_clusters(ClusterDataset(unbalanced), PairingStrategy::Random, 1);
        FAIL("expected Unbalanced");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Unbalanced);
    }

    LinearDesign design;
    design.q1 = design.q0 = 6;
    const auto data = gen_linear(design, 3);
    const auto a = pair_clusters(data, PairingStrategy::Random, 17);
    CHECK(a == pair_clusters(data, PairingStrategy::Random, 17));
    std::vector<std::size_t> partners;
    for (const auto& p : a) partners.push_back(p.untreated);
    std::sort(partners.begin(), partners.end());
    CHECK(partners == std::vector<std::size_t>{6, 7, 8, 9, 10, 11});
}

TEST_CASE("pair effects") {
    // Pair of clusters with outcomes T:(1,1), U:(0,0).
    Cluster t = sized_cluster("t", true, 2);
    t.outcome.setOnes();
    Cluster u = sized_cluster("u", false, 2);
    const ClusterDataset data(std::vector<Cluster>{t, u});
    const std::vector<ClusterPair> pairs{{0, 1}};
    CHECK(pair_effects_ols(data, pairs)[0] == doctest::Approx(1.0));

    const EstimateVector x({5, 2, 1, 1}, ClusterLayout{2, 2});
    const std::vector<ClusterPair> xp{{0, 3}, {1, 2}};
    CHECK(pair_effects_difference(x, xp) == std::vector<double>{4.0, 1.0});
}

TEST_CASE("CRS sign test counts and zero power") {
    auto eng = make_engine(51);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> b{std_normal(eng) + 3.0, std_normal(eng) + 3.0, std_normal(eng) + 3.0};
        const auto r = crs_sign_test(b, 0.05, false, 0);
        CHECK(r.n_assignments == 8);
        CHECK_FALSE(r.reject);
        CHECK(r.has_warning(Warning::ZeroPower));
    }
}

TEST_CASE("CRS constant positive effects") {
    const std::vector<double> ones(5, 1.0);
    const auto r = crs_sign_test(ones, 0.05, false, 0);
    CHECK(std::isinf(r.statistic));
    CHECK(r.p_value == doctest::Approx(1.0 / 32.0));
    CHECK(r.reject);
}

TEST_CASE("CRS all-positive effects: p is 2^-q against a brute-force oracle") {
    auto eng = make_engine(52);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> b(5);
        for (auto& e : b) e = 0.01 + 3.0 * uniform01(eng);
        const double p = crs_sign_test(b, 0.05, false, 0).p_value;
        CHECK(p == doctest::Approx(oracle_sign_p(b)));
        CHECK(p == doctest::Approx(1.0 / 32.0));
    }
}

TEST_CASE("randomized CRS rejects on ties with probability delta") {
    // q = 4 equal effects: the observed statistic is the unique maximum (+inf).
    // At alpha = 0.05 the critical value is that maximum, so the observed
    // statistic ties it and delta = (16 * 0.05 - 0) / 1 = 0.8.
    const std::vector<double> b(4, 1.0);
    const auto r = crs_sign_test(b, 0.05, false, 0);
    CHECK_FALSE(r.reject);
    REQUIRE(r.randomized_threshold);
    CHECK(*r.randomized_threshold == doctest::Approx(0.8));
    int partial = 0;
    for (std::uint64_t s = 0; s < 4000; ++s) partial += crs_sign_test(b, 0.05, true, s).reject ? 1 : 0;
    CHECK(std::abs(partial / 4000.0 - 0.8) < 0.03);

    // At alpha = 0.1 the critical value drops below the maximum.
    CHECK(crs_sign_test(b, 0.1, false, 0).reject);
}

TEST_CASE("CRVE degrees-of-freedom factor") {
    CHECK(crve_dof_factor(100, 7, 6) == doctest::Approx(99.0 * 6.0 / (93.0 * 5.0)));
    CHECK(crve_dof_factor(100, 7, 6) == doctest::Approx(1.2774).epsilon(1e-4));
}

TEST_CASE("pooled OLS point estimate") {
    Cluster t = sized_cluster("t", true, 2);
    t.outcome.setOnes();
    Cluster u = sized_cluster("u", false, 2);
    u.outcome << 0.1, -0.1;
    t.outcome << 1.1, 0.9;
    const auto fit = pooled_ols_crve(ClusterDataset(std::vector<Cluster>{t, u}));
    CHECK(fit.beta_hat == doctest::Approx(1.0));
    CHECK(fit.n == 4);
    CHECK(fit.q == 2);
    CHECK(fit.d == 2);
}

TEST_CASE("CRVE with singleton clusters equals HC1") {
    auto eng = make_engine(53);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 40;
        std::vector<Cluster> clusters;
        for (std::size_t i = 0; i < n; ++i) {
            Cluster c;
            c.id = "s" + std::to_string(i);
            c.treated = i % 3 == 0;
            c.covariates.resize(1, 2);
            c.covariates << std_normal(eng), std_normal(eng);
            c.outcome.resize(1);
            c.outcome[0] = 0.5 * c.covariates(0, 0) + std_normal(eng) * (1.0 + std::abs(c.covariates(0, 1)));
            clusters.push_back(std::move(c));
        }
        const ClusterDataset data(clusters);
        Eigen::MatrixXd X(n, 4);
        Eigen::VectorXd y(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& c = data[i];
            const auto r = static_cast<Eigen::Index>(i);
            X(r, 0) = 1.0;
            X(r, 1) = c.treated ? 1.0 : 0.0;
            X.block(r, 2, 1, 2) = c.covariates;
            y[r] = c.outcome[0];
        }
        const Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();
        const Eigen::VectorXd coef = xtx_inv * X.transpose() * y;
        const Eigen::VectorXd e = y - X * coef;
        Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(4, 4);
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) meat += e[i] * e[i] * X.row(i).transpose() * X.row(i);
        const double hc1 = (xtx_inv * meat * xtx_inv)(1, 1) * static_cast<double>(n) / static_cast<double>(n - 4);
        const auto fit = pooled_ols_crve(data);
        CHECK(fit.beta_hat == doctest::Approx(coef[1]).epsilon(1e-10));
        CHECK(fit.se_crve * fit.se_crve == doctest::Approx(hc1).epsilon(1e-10));
    }
}

TEST_CASE("CRVE is close to the classical variance under homoskedastic independent data") {
    auto eng = make_engine(54);
    double crve_sum = 0.0, classical_sum = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<Cluster> clusters;
        for (int g = 0; g < 50; ++g) {
            Cluster c;
            c.id = "g" + std::to_string(g);
            c.treated = g < 25;
            c.covariates.resize(20, 1);
            c.outcome.resize(20);
            for (int i = 0; i < 20; ++i) {
                c.covariates(i, 0) = std_normal(eng);
                c.outcome[i] = c.covariates(i, 0) + std_normal(eng);
            }
            clusters.push_back(std::move(c));
        }
        const ClusterDataset data(clusters);
        Eigen::MatrixXd X(1000, 3);
        Eigen::VectorXd y(1000);
        Eigen::Index r = 0;
        for (const auto& c : data.clusters()) {
            for (Eigen::Index i = 0; i < 20; ++i, ++r) {
                X(r, 0) = 1.0;
                X(r, 1) = c.treated ? 1.0 : 0.0;
                X(r, 2) = c.covariates(i, 0);
                y[r] = c.outcome[i];
            }
        }
        const Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();
        const Eigen::VectorXd e = y - X * (xtx_inv * X.transpose() * y);
        classical_sum += e.squaredNorm() / (1000.0 - 3.0) * xtx_inv(1, 1);
        const double se = pooled_ols_crve(data).se_crve;
        crve_sum += se * se;
    }
    CHECK(std::abs(crve_sum / classical_sum - 1.0) < 0.2);
}

TEST_CASE("BCH t test against t(q - 1)") {
    PooledFit fit;
    fit.t_stat = 2.0;
    fit.q = 6;
    const auto r = bch_t_test(fit, 0.05, Side::Greater);
    CHECK(r.critical_value == doctest::Approx(2.015).epsilon(1e-3));
    CHECK_FALSE(r.reject);
    fit.t_stat = 0.0;
    CHECK_FALSE(bch_t_test(fit, 0.45, Side::Greater).reject);
    fit.t_stat = 2.0;
    CHECK(bch_t_test(fit, 0.2, Side::Greater).reject);
}

TEST_CASE("Webb weight moments") {
    auto eng = make_engine(55);
    double sum = 0.0, sum2 = 0.0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) {
        const double w = webb_weight(eng);
        sum += w;
        sum2 += w * w;
    }
    const double mean = sum / n;
    CHECK(std::abs(mean) < 0.005);
    CHECK(std::abs(sum2 / n - mean * mean - 1.0) < 0.01);
}

TEST_CASE("wild cluster bootstrap bookkeeping") {
    LinearDesign design;
    const auto data = gen_linear(design, 8);
    const auto a = wild_cluster_bootstrap_test(data, 0.05, Side::Greater, 199, 5);
    const auto b = wild_cluster_bootstrap_test(data, 0.05, Side::Greater, 199, 5);
    CHECK(a.n_assignments == 199);
    CHECK(a.p_value == b.p_value);
    CHECK(a.statistic == b.statistic);
    CHECK(a.reject == (a.p_value <= 0.05));
    CHECK(a.statistic == doctest::Approx(pooled_ols_crve(data).t_stat));
}

TEST_CASE("wild cluster bootstrap size at six treated and six untreated clusters") {
    LinearDesign design;
    design.q1 = design.q0 = 6;
    int rejected = 0;
    const int reps = 2000;
    for (int rep = 0; rep < reps; ++rep) {
        const auto seed = derive_seed(2718, {static_cast<std::uint64_t>(rep)});
        const auto data = gen_linear(design, seed);
        rejected += wild_cluster_bootstrap_test(data, 0.05, Side::Greater, 199, seed).reject ? 1 : 0;
    }
    CHECK(std::abs(rejected / static_cast<double>(reps) - 0.05) <= 0.015);
}
