#include "fewclusters/cli.hpp"

#include "fewclusters/comparators.hpp"
#include "fewclusters/error.hpp"
#include "fewclusters/estimators.hpp"
#include "fewclusters/harness.hpp"
#include "fewclusters/parallel.hpp"
#include "fewclusters/permutation.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace fewclusters::cli {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string_view rest = line;
    while (true) {
        const auto comma = rest.find(',');
        cells.push_back(trim(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    return cells;
}

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
    throw Error(ErrorCode::Parse, "line " + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
    double v = 0.0;
    const auto* end = cell.data() + cell.size();
    const auto res = std::from_chars(cell.data(), end, v);
    if (cell.empty() || res.ec != std::errc() || res.ptr != end) {
        parse_error(line, "column '" + column + "' is not a number: '" + cell + "'");
    }
    return v;
}

bool parse_flag(const std::string& cell, std::size_t line, const std::string& column) {
    if (cell == "0") return false;
    if (cell == "1") return true;
    parse_error(line, "column '" + column + "' must be 0 or 1, got '" + cell + "'");
}

}  // namespace

ClusterDataset read_cluster_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw Error(ErrorCode::Parse, "input is empty");
    const auto header = split_row(line);

    std::optional<std::size_t> id_col, treated_col, outcome_col, post_col;
    std::map<std::size_t, std::size_t> covariate_cols;  // covariate number -> column
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto& h = header[c];
        const auto set = [&](std::optional<std::size_t>& slot) {
            if (slot) throw Error(ErrorCode::Parse, "duplicate column '" + h + "'");
            slot = c;
        };
        if (h == "cluster_id") {
            set(id_col);
        } else if (h == "treated") {
            set(treated_col);
        } else if (h == "outcome") {
            set(outcome_col);
        } else if (h == "post") {
            set(post_col);
        } else if (h.size() > 1 && h[0] == 'x' && h.find_first_not_of("0123456789", 1) == std::string::npos) {
            const auto num = std::stoul(h.substr(1));
            if (num == 0 || !covariate_cols.emplace(num, c).second) {
                throw Error(ErrorCode::Parse, "invalid or duplicate covariate column '" + h + "'");
            }
        } else {
            throw Error(ErrorCode::Parse, "unknown column '" + h + "'");
        }
    }
    if (!id_col) throw Error(ErrorCode::Parse, "missing required column 'cluster_id'");
    if (!treated_col) throw Error(ErrorCode::Parse, "missing required column 'treated'");
    if (!outcome_col) throw Error(ErrorCode::Parse, "missing required column 'outcome'");
    std::size_t expected = 1;
    for (const auto& [num, col] : covariate_cols) {
        if (num != expected++) throw Error(ErrorCode::Parse, "covariate columns must be x1..xd without gaps");
    }

    struct Pending {
        bool treated;
        std::vector<Observation> rows;
    };
    std::vector<std::string> order;
    std::map<std::string, Pending> groups;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_row(line);
        if (cells.size() != header.size()) {
            parse_error(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                     std::to_string(cells.size()));
        }
        const auto& id = cells[*id_col];
        if (id.empty()) parse_error(line_no, "empty cluster_id");
        const bool treated = parse_flag(cells[*treated_col], line_no, "treated");
        Observation obs;
        obs.outcome = parse_number(cells[*outcome_col], line_no, "outcome");
        if (post_col) obs.period_post = parse_flag(cells[*post_col], line_no, "post");
        for (const auto& [num, col] : covariate_cols) {
            obs.covariates.push_back(parse_number(cells[col], line_no, header[col]));
        }
        auto [it, inserted] = groups.try_emplace(id, Pending{treated, {}});
        if (inserted) {
            order.push_back(id);
        } else if (it->second.treated != treated) {
            parse_error(line_no, "cluster '" + id + "' has inconsistent treated flags");
        }
        it->second.rows.push_back(std::move(obs));
    }

    std::vector<Cluster> clusters;
    clusters.reserve(order.size());
    for (const auto& id : order) {
        auto& g = groups.at(id);
        clusters.push_back(Cluster::from_observations(id, g.treated, g.rows));
    }
    return ClusterDataset(std::move(clusters));
}

namespace {

using nlohmann::json;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::GroupTooSmall:
        case ErrorCode::Unbalanced:
        case ErrorCode::MethodInapplicable:
        case ErrorCode::Overflow:
            return kExitInapplicable;
        default:
            return kExitDataError;
    }
}

json number_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

struct TestOptions {
    std::string input;
    std::string method = "placebo";
    std::string estimator = "ols";
    double alpha = 0.05;
    std::string side = "greater";
    bool unadjusted = false;
    std::optional<std::size_t> max_perms;
    std::uint64_t seed = 0;
    std::string pairing = "random";
    bool randomized = false;
    std::size_t boot_reps = 199;
};

json run_test_command(const TestOptions& opt) {
    std::ifstream file(opt.input);
    if (!file) throw Error(ErrorCode::Io, "cannot open '" + opt.input + "'");
    const auto data = read_cluster_csv(file);
    const auto kind = estimator_from_string(opt.estimator);
    const auto side = side_from_string(opt.side);

    const bool pooled = opt.method == "wildboot" || opt.method == "bch";
    if (pooled && kind != EstimatorKind::OlsIntercept) {
        throw Error(ErrorCode::MethodInapplicable,
                    "method '" + opt.method + "' is a pooled linear regression and needs --estimator ols");
    }

    TestResult result;
    if (opt.method == "placebo") {
        TestConfig cfg;
        cfg.alpha = opt.alpha;
        cfg.side = side;
        cfg.adjustment = opt.unadjusted ? Adjustment::Unadjusted : Adjustment::Adjusted;
        cfg.max_assignments = opt.max_perms;
        cfg.seed = opt.seed;
        result = run_placebo_test(estimate_all(data, kind), cfg);
    } else if (opt.method == "im") {
        result = im_t_test(estimate_all(data, kind), opt.alpha, side);
    } else if (opt.method == "crs") {
        const auto strategy = opt.pairing == "size" || opt.pairing == "by_size" ? PairingStrategy::BySize
                                                                               : PairingStrategy::Random;
        const auto pairs = pair_clusters(data, strategy, opt.seed);
        const auto effects = kind == EstimatorKind::OlsIntercept
                                 ? pair_effects_ols(data, pairs)
                                 : pair_effects_difference(estimate_all(data, kind), pairs);
        result = crs_sign_test(effects, opt.alpha, opt.randomized, opt.seed, side);
    } else if (opt.method == "wildboot") {
        result = wild_cluster_bootstrap_test(data, opt.alpha, side, opt.boot_reps, opt.seed);
    } else if (opt.method == "bch") {
        result = bch_t_test(pooled_ols_crve(data), opt.alpha, side);
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown method '" + opt.method + "'");
    }

    json report;
    report["method"] = opt.method;
    report["estimator"] = std::string(to_string(kind));
    report["side"] = std::string(to_string(side));
    report["alpha"] = opt.alpha;
    report["statistic"] = number_or_null(result.statistic);
    report["critical_value"] = number_or_null(result.critical_value);
    report["p_value"] = result.p_value;
    report["reject"] = result.reject;
    report["n_assignments"] = result.n_assignments;
    report["randomized_threshold"] =
        result.randomized_threshold ? number_or_null(*result.randomized_threshold) : json(nullptr);
    report["warnings"] = json::array();
    for (auto w : result.warnings) report["warnings"].push_back(std::string(to_string(w)));
    return report;
}

struct SimulateOptions {
    std::string config;
    std::string out_dir = ".";
};

void run_simulate_command(const SimulateOptions& opt, std::ostream& out) {
    std::ifstream file(opt.config);
    if (!file) throw Error(ErrorCode::Io, "cannot open '" + opt.config + "'");
    json config;
    try {
        config = json::parse(file);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
    }
    const auto spec = spec_from_json(config);
    const auto table = run_experiment(spec);

    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    const auto csv_path = dir / "rejection_table.csv";
    const auto svg_path = dir / ("rejection_" + std::string(to_string(spec.sweep)) + ".svg");
    emit_csv(table, csv_path);
    emit_svg(table, svg_path, spec.name);

    out << spec.name << ": " << spec.values.size() << " sweep values x " << spec.replications
        << " replications, " << table.methods().size() << " methods\n";
    for (const auto& m : table.methods()) {
        out << "  " << m << ':';
        for (const auto& r : table.rows) {
            if (r.method == m) out << ' ' << format_double(r.reject_rate);
        }
        out << '\n';
    }
    out << "wrote " << csv_path.string() << "\nwrote " << svg_path.string() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Placebo inference with few treated and untreated clusters", "fewclusters"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: FEWCLUSTERS_THREADS or hardware)");

    TestOptions test_opt;
    auto* test = app.add_subcommand("test", "Test for a zero treatment effect on CSV data");
    test->add_option("input", test_opt.input, "CSV file")->required();
    test->add_option("--method", test_opt.method)
        ->check(CLI::IsMember({"placebo", "im", "crs", "wildboot", "bch"}));
    test->add_option("--estimator", test_opt.estimator)->check(CLI::IsMember({"ols", "did", "probit"}));
    test->add_option("--alpha", test_opt.alpha)->check(CLI::Range(0.0, 1.0));
    test->add_option("--side", test_opt.side)->check(CLI::IsMember({"greater", "less", "two"}));
    test->add_flag("--unadjusted", test_opt.unadjusted, "Use unadjusted placebo statistics");
    test->add_option("--max-perms", test_opt.max_perms, "Subsample this many placebo assignments")
        ->check(CLI::PositiveNumber);
    test->add_option("--seed", test_opt.seed);
    test->add_option("--pairing", test_opt.pairing, "Matched-pair strategy for crs")
        ->check(CLI::IsMember({"random", "size"}));
    test->add_flag("--randomized", test_opt.randomized, "Randomized crs decision");
    test->add_option("--boot-reps", test_opt.boot_reps, "Wild bootstrap repetitions")->check(CLI::PositiveNumber);

    SimulateOptions sim_opt;
    auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo experiment from a JSON config");
    sim->add_option("--config", sim_opt.config)->required();
    sim->add_option("--out", sim_opt.out_dir);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        // --help and --version report success; every other parse failure is a usage error.
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    }
    if (threads > 0) set_default_threads(threads);

    try {
        if (*test) {
            out << run_test_command(test_opt).dump(2) << '\n';
        } else {
            run_simulate_command(sim_opt, out);
        }
        return kExitOk;
    } catch (const Error& e) {
        err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitDataError;
    }
}

}  // namespace fewclusters::cli
