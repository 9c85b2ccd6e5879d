#include "fewclusters/cli.hpp"
#include "fewclusters/comparators.hpp"
#include "fewclusters/dgp.hpp"
#include "fewclusters/error.hpp"
#include "fewclusters/estimators.hpp"
#include "fewclusters/harness.hpp"
#include "fewclusters/parallel.hpp"
#include "fewclusters/permutation.hpp"
#include "fewclusters/placebo_stats.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <sstream>

namespace py = pybind11;
using namespace fewclusters;

namespace {

EstimateVector to_estimates(const std::vector<double>& x, std::size_t q1) {
    if (q1 > x.size()) throw Error(ErrorCode::InvalidArgument, "q1 exceeds the number of estimates");
    return EstimateVector(x, ClusterLayout{q1, x.size() - q1});
}

py::dict to_dict(const TestResult& r) {
    py::dict d;
    d["statistic"] = r.statistic;
    d["critical_value"] = r.critical_value;
    d["p_value"] = r.p_value;
    d["reject"] = r.reject;
    d["n_assignments"] = r.n_assignments;
    d["randomized_threshold"] = r.randomized_threshold ? py::cast(*r.randomized_threshold) : py::none();
    py::list warnings;
    for (auto w : r.warnings) warnings.append(std::string(to_string(w)));
    d["warnings"] = warnings;
    return d;
}

// Builds a dataset from row-wise arrays; rows of a cluster may be interleaved.
ClusterDataset make_dataset(const std::vector<std::string>& cluster_id, const std::vector<int>& treated,
                            const Eigen::VectorXd& outcome, const std::optional<Eigen::MatrixXd>& covariates,
                            const std::optional<std::vector<int>>& post) {
    const auto n = cluster_id.size();
    if (treated.size() != n || static_cast<std::size_t>(outcome.size()) != n ||
        (covariates && static_cast<std::size_t>(covariates->rows()) != n) || (post && post->size() != n)) {
        throw Error(ErrorCode::InvalidArgument, "all row-wise inputs must have the same length");
    }
    std::vector<std::string> order;
    std::map<std::string, std::pair<bool, std::vector<Observation>>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = groups.try_emplace(cluster_id[i], treated[i] != 0, std::vector<Observation>{});
        if (inserted) order.push_back(cluster_id[i]);
        if (it->second.first != (treated[i] != 0)) {
            throw Error(ErrorCode::InvalidArgument, "treated flag varies within cluster '" + cluster_id[i] + "'");
        }
        Observation obs;
        obs.outcome = outcome[static_cast<Eigen::Index>(i)];
        if (covariates) {
            const auto row = covariates->row(static_cast<Eigen::Index>(i));
            obs.covariates.resize(static_cast<std::size_t>(row.size()));
            for (Eigen::Index j = 0; j < row.size(); ++j) obs.covariates[static_cast<std::size_t>(j)] = row[j];
        }
        if (post) obs.period_post = (*post)[i] != 0;
        it->second.second.push_back(std::move(obs));
    }
    std::vector<Cluster> clusters;
    for (const auto& id : order) {
        const auto& [is_treated, rows] = groups.at(id);
        clusters.push_back(Cluster::from_observations(id, is_treated, rows));
    }
    return ClusterDataset(std::move(clusters));
}

py::list table_rows(const RejectionTable& table) {
    py::list rows;
    for (const auto& r : table.rows) {
        py::dict d;
        d["method"] = r.method;
        d["sweep_param"] = std::string(to_string(r.sweep));
        d["sweep_value"] = r.sweep_value;
        d["reject_rate"] = r.reject_rate;
        d["reps"] = r.replications;
        d["seed"] = r.seed;
        d["failures"] = r.failures;
        rows.append(d);
    }
    return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Placebo inference with few treated and untreated clusters";

    static py::exception<Error> error_type(m, "FewClustersError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const std::string msg = std::string(to_string(e.code())) + ": " + e.what();
            PyErr_SetString(error_type.ptr(), msg.c_str());
        }
    });

    m.def("set_threads", &set_default_threads, py::arg("threads"));

    // Placebo statistics and test.
    m.def(
        "comparison_of_means",
        [](const std::vector<double>& x, std::size_t q1, std::vector<std::uint32_t> treated) {
            return comparison_of_means(to_estimates(x, q1), Assignment{std::move(treated)});
        },
        py::arg("x"), py::arg("q1"), py::arg("treated"));
    m.def(
        "two_sample_variance",
        [](const std::vector<double>& x, std::size_t q1, std::vector<std::uint32_t> treated) {
            return two_sample_variance(to_estimates(x, q1), Assignment{std::move(treated)});
        },
        py::arg("x"), py::arg("q1"), py::arg("treated"));
    m.def(
        "adjusted_statistic",
        [](const std::vector<double>& x, std::size_t q1, std::vector<std::uint32_t> treated) {
            return adjusted_statistic(to_estimates(x, q1), Assignment{std::move(treated)});
        },
        py::arg("x"), py::arg("q1"), py::arg("treated"));
    m.def(
        "enumerate_assignments",
        [](std::size_t q1, std::size_t q0) {
            const auto set = enumerate_assignments(ClusterLayout{q1, q0});
            std::vector<std::vector<std::uint32_t>> out;
            out.reserve(set.size());
            for (std::size_t i = 0; i < set.size(); ++i) out.push_back(set.at(i).treated);
            return out;
        },
        py::arg("q1"), py::arg("q0"));
    m.def(
        "placebo_test",
        [](const std::vector<double>& x, std::size_t q1, double alpha, const std::string& side, bool adjusted,
           std::optional<std::size_t> max_assignments, std::uint64_t seed) {
            TestConfig cfg;
            cfg.alpha = alpha;
            cfg.side = side_from_string(side);
            cfg.adjustment = adjusted ? Adjustment::Adjusted : Adjustment::Unadjusted;
            cfg.max_assignments = max_assignments;
            cfg.seed = seed;
            return to_dict(run_placebo_test(to_estimates(x, q1), cfg));
        },
        py::arg("x"), py::arg("q1"), py::arg("alpha") = 0.05, py::arg("side") = "greater",
        py::arg("adjusted") = true, py::arg("max_assignments") = py::none(), py::arg("seed") = 0);

    // Comparators on estimates.
    m.def(
        "im_t_test",
        [](const std::vector<double>& x, std::size_t q1, double alpha, const std::string& side) {
            return to_dict(im_t_test(to_estimates(x, q1), alpha, side_from_string(side)));
        },
        py::arg("x"), py::arg("q1"), py::arg("alpha") = 0.05, py::arg("side") = "greater");
    m.def(
        "crs_sign_test",
        [](const std::vector<double>& effects, double alpha, bool randomized, std::uint64_t seed,
           const std::string& side) {
            return to_dict(crs_sign_test(effects, alpha, randomized, seed, side_from_string(side)));
        },
        py::arg("effects"), py::arg("alpha") = 0.05, py::arg("randomized") = false, py::arg("seed") = 0,
        py::arg("side") = "greater");

    // Clustered data.
    py::class_<ClusterDataset>(m, "ClusterDataset")
        .def(py::init(&make_dataset), py::arg("cluster_id"), py::arg("treated"), py::arg("outcome"),
             py::arg("covariates") = py::none(), py::arg("post") = py::none())
        .def_property_readonly("q1", [](const ClusterDataset& d) { return d.layout().q1; })
        .def_property_readonly("q0", [](const ClusterDataset& d) { return d.layout().q0; })
        .def_property_readonly("ids",
                               [](const ClusterDataset& d) {
                                   std::vector<std::string> ids;
                                   for (const auto& c : d.clusters()) ids.push_back(c.id);
                                   return ids;
                               })
        .def_property_readonly("sizes",
                               [](const ClusterDataset& d) {
                                   std::vector<std::size_t> sizes;
                                   for (const auto& c : d.clusters()) sizes.push_back(c.size());
                                   return sizes;
                               })
        .def_property_readonly("fingerprint", &ClusterDataset::fingerprint)
        .def("__len__", &ClusterDataset::size);

    m.def(
        "estimate",
        [](const ClusterDataset& data, const std::string& estimator) {
            const auto x = estimate_all(data, estimator_from_string(estimator));
            return std::vector<double>(x.values().begin(), x.values().end());
        },
        py::arg("data"), py::arg("estimator") = "ols");
    m.def(
        "pooled_ols_crve",
        [](const ClusterDataset& data) {
            const auto fit = pooled_ols_crve(data);
            py::dict d;
            d["beta_hat"] = fit.beta_hat;
            d["se_crve"] = fit.se_crve;
            d["t_stat"] = fit.t_stat;
            d["n"] = fit.n;
            d["q"] = fit.q;
            return d;
        },
        py::arg("data"));
    m.def(
        "bch_t_test",
        [](const ClusterDataset& data, double alpha, const std::string& side) {
            return to_dict(bch_t_test(pooled_ols_crve(data), alpha, side_from_string(side)));
        },
        py::arg("data"), py::arg("alpha") = 0.05, py::arg("side") = "greater");
    m.def(
        "wild_cluster_bootstrap_test",
        [](const ClusterDataset& data, double alpha, const std::string& side, std::size_t reps, std::uint64_t seed) {
            return to_dict(wild_cluster_bootstrap_test(data, alpha, side_from_string(side), reps, seed));
        },
        py::arg("data"), py::arg("alpha") = 0.05, py::arg("side") = "greater", py::arg("reps") = 199,
        py::arg("seed") = 0);

    // Data-generating processes.
    m.def("circular_ma", [](const std::vector<double>& source, std::size_t h) { return circular_ma(source, h); },
          py::arg("source"), py::arg("h"));
    m.def(
        "gen_linear",
        [](std::size_t q1, std::size_t q0, std::size_t h, double beta, std::uint64_t seed) {
            LinearDesign d;
            d.q1 = q1;
            d.q0 = q0;
            d.h = h;
            d.beta = beta;
            return gen_linear(d, seed);
        },
        py::arg("q1") = 3, py::arg("q0") = 3, py::arg("h") = 10, py::arg("beta") = 0.0, py::arg("seed") = 0);
    m.def(
        "gen_probit",
        [](std::size_t q1, std::size_t q0, std::size_t h, double beta, std::uint64_t seed) {
            ProbitDesign d;
            d.q1 = q1;
            d.q0 = q0;
            d.h = h;
            d.beta = beta;
            return gen_probit(d, seed);
        },
        py::arg("q1") = 3, py::arg("q0") = 3, py::arg("h") = 10, py::arg("beta") = 0.0, py::arg("seed") = 0);

    // Monte Carlo experiments; the config is the JSON text accepted by the CLI.
    m.def(
        "run_experiment_json",
        [](const std::string& config) {
            const auto spec = spec_from_json(nlohmann::json::parse(config));
            RejectionTable table;
            {
                py::gil_scoped_release release;
                table = run_experiment(spec);
            }
            return py::make_tuple(table_rows(table), format_csv(table));
        },
        py::arg("config"));

    m.def(
        "cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
