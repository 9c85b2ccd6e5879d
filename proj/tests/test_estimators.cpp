#include <doctest.h>

#include "fewclusters/dgp.hpp"
#include "fewclusters/error.hpp"
#include "fewclusters/estimators.hpp"
#include "fewclusters/rng.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>

using namespace fewclusters;

namespace {

Cluster cluster_from(std::vector<double> y, std::vector<std::vector<double>> x = {},
                     std::vector<std::uint8_t> post = {}) {
    Cluster c;
    c.id = "c";
    c.treated = true;
    c.outcome = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    const auto d = x.empty() ? 0 : x.front().size();
    c.covariates.resize(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) c.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[i][j];
    }
    c.post = std::move(post);
    return c;
}

Cluster binary_cluster(std::size_t successes, std::size_t total) {
    std::vector<double> y(total, 0.0);
    for (std::size_t i = 0; i < successes; ++i) y[i] = 1.0;
    return cluster_from(std::move(y));
}

Cluster random_probit_cluster(Engine& eng, std::size_t m, std::size_t d) {
    Cluster c;
    c.id = "r";
    c.outcome.resize(static_cast<Eigen::Index>(m));
    c.covariates.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < m; ++i) {
        double index = 0.3;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = std_normal(eng);
            c.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            index += 0.5 * v;
        }
        c.outcome[static_cast<Eigen::Index>(i)] = index + std_normal(eng) > 0.0 ? 1.0 : 0.0;
    }
    return c;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("ols intercept") {
    CHECK(ols_intercept(cluster_from({1, 2, 3})).theta == doctest::Approx(2.0));

    const auto fit = ols_intercept(cluster_from({5, 7, 9}, {{0}, {1}, {2}}));
    CHECK(fit.theta == doctest::Approx(5.0));
    REQUIRE(fit.nuisance.size() == 1);
    CHECK(fit.nuisance[0] == doctest::Approx(2.0));

    CHECK(code_of([] { ols_intercept(cluster_from({1, 2}, {{1}, {1}})); }) == ErrorCode::RankDeficient);
}

TEST_CASE("ols intercept is exact on noiseless data") {
    auto eng = make_engine(31);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> y;
        std::vector<std::vector<double>> x;
        for (int i = 0; i < 30; ++i) {
            const double a = std_normal(eng), b = std_normal(eng);
            x.push_back({a, b});
            y.push_back(-1.5 + 2.0 * a + 0.25 * b);
        }
        const auto c = cluster_from(y, x);
        const auto fit = ols_intercept(c);
        Eigen::VectorXd resid = c.outcome - (fit.theta + (c.covariates * fit.nuisance).array()).matrix();
        CHECK(resid.squaredNorm() / c.outcome.squaredNorm() < 1e-18);
        CHECK(fit.theta == doctest::Approx(-1.5));
    }
}

TEST_CASE("did slope") {
    CHECK(did_slope(cluster_from({1, 1, 3, 3}, {}, {0, 0, 1, 1})).theta == doctest::Approx(2.0));
    CHECK(did_slope(cluster_from({0, 2, 1, 3}, {}, {0, 0, 1, 1})).theta == doctest::Approx(1.0));
    CHECK(code_of([] { did_slope(cluster_from({1, 2, 3}, {}, {1, 1, 1})); }) == ErrorCode::RankDeficient);
    CHECK(code_of([] { did_slope(cluster_from({1, 2, 3})); }) == ErrorCode::MissingPeriodFlag);
}

TEST_CASE("probit on a constant inverts the normal cdf") {
    const boost::math::normal_distribution<> phi;
    const auto f30 = probit_z_estimate(binary_cluster(30, 100));
    CHECK(f30.theta == doctest::Approx(boost::math::quantile(phi, 0.3)).epsilon(1e-9));
    CHECK(f30.theta == doctest::Approx(-0.5244).epsilon(1e-4));
    CHECK(f30.converged);
    CHECK(std::abs(probit_z_estimate(binary_cluster(50, 100)).theta) < 1e-12);
    CHECK(code_of([] { probit_z_estimate(binary_cluster(100, 100)); }) == ErrorCode::Separation);
    CHECK(code_of([] { probit_z_estimate(binary_cluster(0, 100)); }) == ErrorCode::Separation);
}

TEST_CASE("probit jacobian matches central differences") {
    auto eng = make_engine(41);
    for (int trial = 0; trial < 100; ++trial) {
        const auto c = random_probit_cluster(eng, 200, 2);
        Eigen::VectorXd p(3);
        for (int j = 0; j < 3; ++j) p[j] = 0.8 * std_normal(eng);
        const Eigen::MatrixXd jac = probit_jacobian(c, p);
        Eigen::MatrixXd fd(3, 3);
        const double step = 1e-5;
        for (int j = 0; j < 3; ++j) {
            Eigen::VectorXd up = p, down = p;
            up[j] += step;
            down[j] -= step;
            fd.col(j) = (probit_moment(c, up) - probit_moment(c, down)) / (2.0 * step);
        }
        CHECK((jac - fd).norm() / jac.norm() <= 1e-6);
    }
}

TEST_CASE("probit solution is a zero of the moment function") {
    auto eng = make_engine(43);
    for (int trial = 0; trial < 30; ++trial) {
        const auto c = random_probit_cluster(eng, 300, 2);
        const auto fit = probit_z_estimate(c);
        Eigen::VectorXd p(3);
        p << fit.theta, fit.nuisance;
        CHECK(probit_moment(c, p).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("probit intercept is consistent") {
    auto rmse = [](std::size_t m) {
        ProbitDesign design;
        design.q1 = 1;
        design.q0 = 1;
        design.h = 0;
        design.sizes = {m, m};
        double sum = 0.0;
        std::size_t used = 0;
        for (std::uint64_t rep = 0; rep < 500; ++rep) {
            const auto data = gen_probit(design, rep);
            try {
                const double t = probit_z_estimate(data[0]).theta;
                sum += t * t;
                ++used;
            } catch (const Error&) {
            }
        }
        CHECK(used > 450);
        return std::sqrt(sum / static_cast<double>(used));
    };
    CHECK(rmse(400) < rmse(100));
}

TEST_CASE("estimate_all") {
    std::vector<Cluster> clusters;
    for (int k = 0; k < 6; ++k) {
        auto c = cluster_from({1.0 + k, 2.0 + k, 3.0 + k});
        c.id = "k" + std::to_string(k);
        c.treated = k < 3;
        clusters.push_back(std::move(c));
    }
    const ClusterDataset data(clusters);
    const auto x = estimate_all(data, EstimatorKind::OlsIntercept);
    REQUIRE(x.size() == 6);
    CHECK(x[4] == doctest::Approx(6.0));

    for (int k = 0; k < 6; ++k) {
        auto c = k == 4 ? cluster_from({1, 2}, {{1}, {1}}) : cluster_from({1, 2, 4}, {{0}, {1}, {2}});
        c.id = k == 4 ? "broken" : "ok" + std::to_string(k);
        c.treated = k < 3;
        clusters[static_cast<std::size_t>(k)] = std::move(c);
    }
    try {
        estimate_all(ClusterDataset(clusters), EstimatorKind::OlsIntercept);
        FAIL("expected RankDeficient");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RankDeficient);
        CHECK(std::string(e.what()).find("broken") != std::string::npos);
    }
}

TEST_CASE("estimate_all with probit on binary data") {
    std::vector<Cluster> clusters;
    for (int k = 0; k < 4; ++k) {
        auto c = binary_cluster(20 + 10 * static_cast<std::size_t>(k), 100);
        c.id = "p" + std::to_string(k);
        c.treated = k % 2 == 0;
        clusters.push_back(std::move(c));
    }
    const ClusterDataset data(clusters);
    const auto x = estimate_all(data, EstimatorKind::Probit);
    const boost::math::normal_distribution<> phi;
    // Treated clusters come first: p0 (20%), p2 (40%), then p1 (30%), p3 (50%).
    CHECK(x[0] == doctest::Approx(boost::math::quantile(phi, 0.2)).epsilon(1e-9));
    CHECK(x[2] == doctest::Approx(boost::math::quantile(phi, 0.3)).epsilon(1e-9));
}

TEST_CASE("estimator names") {
    CHECK(estimator_from_string("ols") == EstimatorKind::OlsIntercept);
    CHECK(estimator_from_string("did") == EstimatorKind::DidSlope);
    CHECK(estimator_from_string("probit") == EstimatorKind::Probit);
    CHECK_THROWS_AS(estimator_from_string("logit"), Error);
}
