#include "fewclusters/harness.hpp"

#include "fewclusters/error.hpp"
#include "fewclusters/estimators.hpp"
#include "fewclusters/parallel.hpp"
#include "fewclusters/permutation.hpp"
#include "fewclusters/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace fewclusters {

std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::Placebo: return "placebo";
        case Method::PlaceboUnadjusted: return "placebo_unadjusted";
        case Method::Im: return "im";
        case Method::Crs: return "crs";
        case Method::CrsRandomized: return "crs_randomized";
        case Method::WildBootstrap: return "wild_bootstrap";
        case Method::BchT: return "bch_t";
    }
    return "placebo";
}

Method method_from_string(std::string_view text) {
    for (auto m : {Method::Placebo, Method::PlaceboUnadjusted, Method::Im, Method::Crs,
                   Method::CrsRandomized, Method::WildBootstrap, Method::BchT}) {
        if (text == to_string(m)) return m;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + std::string(text) + "'");
}

std::string_view to_string(SweepParam p) noexcept {
    switch (p) {
        case SweepParam::Beta: return "beta";
        case SweepParam::H: return "h";
        case SweepParam::Q: return "q";
    }
    return "beta";
}

SweepParam sweep_param_from_string(std::string_view text) {
    if (text == "beta") return SweepParam::Beta;
    if (text == "h") return SweepParam::H;
    if (text == "q") return SweepParam::Q;
    throw Error(ErrorCode::InvalidArgument, "unknown sweep parameter '" + std::string(text) + "'");
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void ExperimentSpec::validate() const {
    if (replications < 1) throw Error(ErrorCode::Config, "replications: must be at least 1");
    if (values.empty()) throw Error(ErrorCode::Config, "sweep.values: must not be empty");
    if (methods.empty() && custom.empty()) throw Error(ErrorCode::Config, "methods: must not be empty");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::Config, "alpha: must lie in (0, 1)");
    if (bootstrap_reps < 1) throw Error(ErrorCode::Config, "bootstrap_reps: must be at least 1");
    for (double v : values) {
        if (!std::isfinite(v)) throw Error(ErrorCode::Config, "sweep.values: must be finite");
        if (sweep != SweepParam::Beta && (v < 0.0 || v != std::floor(v))) {
            throw Error(ErrorCode::Config, "sweep.values: h and q sweeps need non-negative integers");
        }
    }
}

const RejectionRow* RejectionTable::find(std::string_view method, double sweep_value) const {
    for (const auto& r : rows) {
        if (r.method == method && r.sweep_value == sweep_value) return &r;
    }
    return nullptr;
}

std::vector<std::string> RejectionTable::methods() const {
    std::vector<std::string> out;
    for (const auto& r : rows) {
        if (std::find(out.begin(), out.end(), r.method) == out.end()) out.push_back(r.method);
    }
    return out;
}

Design apply_sweep(const Design& design, SweepParam param, double value) {
    return std::visit(
        [&](auto d) -> Design {
            switch (param) {
                case SweepParam::Beta: d.beta = value; break;
                case SweepParam::H: d.h = static_cast<std::size_t>(value); break;
                case SweepParam::Q:
                    d.q1 = static_cast<std::size_t>(value);
                    d.q0 = static_cast<std::size_t>(value);
                    break;
            }
            return d;
        },
        design);
}

ClusterDataset generate(const Design& design, std::uint64_t seed) {
    return std::visit(
        [&](const auto& d) -> ClusterDataset {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, LinearDesign>) {
                return gen_linear(d, seed);
            } else {
                return gen_probit(d, seed);
            }
        },
        design);
}

std::uint64_t replication_seed(std::uint64_t master, std::size_t sweep_index, std::size_t replication) {
    return derive_seed(master, {sweep_index, replication});
}

namespace {

bool is_probit(const Design& d) { return std::holds_alternative<ProbitDesign>(d); }

ClusterLayout design_layout(const Design& d) {
    return std::visit([](const auto& x) { return ClusterLayout{x.q1, x.q0}; }, d);
}

Adjustment placebo_adjustment(Method m, const ClusterLayout& layout) {
    if (m == Method::PlaceboUnadjusted) return Adjustment::Unadjusted;
    return layout.balanced() ? Adjustment::Unadjusted : Adjustment::Adjusted;
}

void check_applicable(const ExperimentSpec& spec, const Design& design, double value) {
    const auto layout = design_layout(design);
    const std::string where = " (" + std::string(to_string(spec.sweep)) + " = " + format_double(value) + ")";
    if (layout.q1 == 0 || layout.q0 == 0) {
        throw Error(ErrorCode::MethodInapplicable, "design needs treated and untreated clusters" + where);
    }
    for (auto m : spec.methods) {
        const std::string name(to_string(m));
        switch (m) {
            case Method::Placebo:
            case Method::PlaceboUnadjusted:
                if (placebo_adjustment(m, layout) == Adjustment::Adjusted && (layout.q1 < 2 || layout.q0 < 2)) {
                    throw Error(ErrorCode::MethodInapplicable,
                                name + ": the adjusted placebo test needs q1 >= 2 and q0 >= 2" + where);
                }
                break;
            case Method::Im:
                if (layout.q1 < 2 || layout.q0 < 2) {
                    throw Error(ErrorCode::MethodInapplicable, name + ": needs q1 >= 2 and q0 >= 2" + where);
                }
                break;
            case Method::Crs:
            case Method::CrsRandomized:
                if (!layout.balanced()) {
                    throw Error(ErrorCode::MethodInapplicable,
                                name + ": the matched-pair test only applies when q1 = q0" + where);
                }
                if (layout.q1 < 2) {
                    throw Error(ErrorCode::MethodInapplicable, name + ": needs at least two pairs" + where);
                }
                break;
            case Method::WildBootstrap:
            case Method::BchT:
                if (is_probit(design)) {
                    throw Error(ErrorCode::MethodInapplicable,
                                name + ": pooled linear methods are not run on the probit design" + where);
                }
                break;
        }
    }
}

// Per-sweep-value state shared by all replications.
struct SweepContext {
    Design design;
    ClusterLayout layout;
    std::map<Method, std::unique_ptr<PlaceboTest>> placebo;
};

// One replication: returns a reject/fail code per method (custom methods last).
enum : std::uint8_t { kKeep = 0, kReject = 1, kFail = 2 };

std::vector<std::uint8_t> run_replication(const ExperimentSpec& spec, const SweepContext& ctx,
                                          std::uint64_t seed) {
    const auto data = generate(ctx.design, derive_seed(seed, {stream::kData}));
    const EstimatorKind kind = is_probit(ctx.design) ? EstimatorKind::Probit : EstimatorKind::OlsIntercept;

    std::optional<EstimateVector> estimates;
    bool estimate_failed = false;
    const auto get_estimates = [&]() -> const EstimateVector* {
        if (!estimates && !estimate_failed) {
            try {
                estimates = estimate_all(data, kind);
            } catch (const Error&) {
                estimate_failed = true;
            }
        }
        return estimates ? &*estimates : nullptr;
    };

    std::optional<std::vector<double>> pair_effects;
    const auto get_pair_effects = [&]() -> const std::vector<double>& {
        if (!pair_effects) {
            const auto pairs = pair_clusters(data, spec.pairing, derive_seed(seed, {stream::kPairing}));
            if (kind == EstimatorKind::OlsIntercept) {
                pair_effects = pair_effects_ols(data, pairs);
            } else {
                const auto* x = get_estimates();
                if (!x) throw Error(ErrorCode::NoConvergence, "cluster estimates unavailable");
                pair_effects = pair_effects_difference(*x, pairs);
            }
        }
        return *pair_effects;
    };

    std::vector<std::uint8_t> out;
    out.reserve(spec.methods.size() + spec.custom.size());
    for (auto m : spec.methods) {
        try {
            bool reject = false;
            switch (m) {
                case Method::Placebo:
                case Method::PlaceboUnadjusted: {
                    const auto* x = get_estimates();
                    if (!x) throw Error(ErrorCode::NoConvergence, "cluster estimates unavailable");
                    reject = ctx.placebo.at(m)->run(*x).reject;
                    break;
                }
                case Method::Im: {
                    const auto* x = get_estimates();
                    if (!x) throw Error(ErrorCode::NoConvergence, "cluster estimates unavailable");
                    reject = im_t_test(*x, spec.alpha, Side::Greater).reject;
                    break;
                }
                case Method::Crs:
                case Method::CrsRandomized:
                    reject = crs_sign_test(get_pair_effects(), spec.alpha, m == Method::CrsRandomized,
                                           derive_seed(seed, {stream::kRandomizedTest}))
                                 .reject;
                    break;
                case Method::WildBootstrap:
                    reject = wild_cluster_bootstrap_test(data, spec.alpha, Side::Greater, spec.bootstrap_reps,
                                                         derive_seed(seed, {stream::kBootstrap}))
                                 .reject;
                    break;
                case Method::BchT:
                    reject = bch_t_test(pooled_ols_crve(data), spec.alpha, Side::Greater).reject;
                    break;
            }
            out.push_back(reject ? kReject : kKeep);
        } catch (const Error&) {
            out.push_back(kFail);
        }
    }
    for (std::size_t c = 0; c < spec.custom.size(); ++c) {
        const bool reject = spec.custom[c].decide(data, derive_seed(seed, {stream::kCustom, c}));
        out.push_back(reject ? kReject : kKeep);
    }
    return out;
}

}  // namespace

RejectionTable run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    RejectionTable table;
    table.alpha = spec.alpha;

    std::vector<SweepContext> contexts;
    for (double v : spec.values) {
        SweepContext ctx;
        ctx.design = apply_sweep(spec.design, spec.sweep, v);
        ctx.layout = design_layout(ctx.design);
        check_applicable(spec, ctx.design, v);
        for (auto m : spec.methods) {
            if (m != Method::Placebo && m != Method::PlaceboUnadjusted) continue;
            TestConfig cfg;
            cfg.alpha = spec.alpha;
            cfg.side = Side::Greater;
            cfg.adjustment = placebo_adjustment(m, ctx.layout);
            ctx.placebo[m] = std::make_unique<PlaceboTest>(ctx.layout, cfg);
        }
        contexts.push_back(std::move(ctx));
    }

    const std::size_t n_methods = spec.methods.size() + spec.custom.size();
    const std::size_t reps = spec.replications;
    for (std::size_t s = 0; s < spec.values.size(); ++s) {
        std::vector<std::uint8_t> outcomes(reps * n_methods);
        parallel_for(
            reps,
            [&](std::size_t r) {
                const auto codes = run_replication(spec, contexts[s], replication_seed(spec.master_seed, s, r));
                std::copy(codes.begin(), codes.end(), outcomes.begin() + static_cast<std::ptrdiff_t>(r * n_methods));
            },
            spec.threads);

        for (std::size_t j = 0; j < n_methods; ++j) {
            std::size_t rejects = 0;
            std::size_t failures = 0;
            for (std::size_t r = 0; r < reps; ++r) {
                const auto code = outcomes[r * n_methods + j];
                rejects += code == kReject ? 1 : 0;
                failures += code == kFail ? 1 : 0;
            }
            RejectionRow row;
            row.method = j < spec.methods.size() ? std::string(to_string(spec.methods[j]))
                                                 : spec.custom[j - spec.methods.size()].name;
            row.sweep = spec.sweep;
            row.sweep_value = spec.values[s];
            row.reject_rate = static_cast<double>(rejects) / static_cast<double>(reps);
            row.replications = reps;
            row.seed = spec.master_seed;
            row.failures = failures;
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

std::string format_csv(const RejectionTable& table) {
    std::ostringstream out;
    out << "method,sweep_param,sweep_value,reject_rate,reps,seed\n";
    for (const auto& r : table.rows) {
        out << r.method << ',' << to_string(r.sweep) << ',' << format_double(r.sweep_value) << ','
            << format_double(r.reject_rate) << ',' << r.replications << ',' << r.seed << '\n';
    }
    return out.str();
}

namespace {

std::string fixed(double v, int digits = 2) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(digits);
    s << v;
    return s.str();
}

std::string xml_escape(std::string_view text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string format_svg(const RejectionTable& table, const std::string& title) {
    constexpr double kWidth = 640, kHeight = 420;
    constexpr double kLeft = 60, kRight = 170, kTop = 40, kBottom = 50;
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;

    double xmin = 0.0, xmax = 1.0;
    if (!table.rows.empty()) {
        xmin = xmax = table.rows.front().sweep_value;
        for (const auto& r : table.rows) {
            xmin = std::min(xmin, r.sweep_value);
            xmax = std::max(xmax, r.sweep_value);
        }
        if (xmax == xmin) xmax = xmin + 1.0;
    }
    const auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * plot_w; };
    const auto py = [&](double y) { return kTop + (1.0 - y) * plot_h; };

    static const char* kPalette[] = {"#000000", "#888888", "#1f77b4", "#d62728",
                                     "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    std::ostringstream s;
    s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    s << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty()) {
        s << "  <text x=\"" << kLeft << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
          << xml_escape(title) << "</text>\n";
    }
    // Axes and ticks.
    s << "  <g stroke=\"black\" stroke-width=\"1\">\n";
    s << "    <line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << kLeft + plot_w << "\" y2=\"" << py(0) << "\"/>\n";
    s << "    <line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << kLeft << "\" y2=\"" << py(1) << "\"/>\n";
    s << "  </g>\n";
    s << "  <g font-family=\"sans-serif\" font-size=\"10\">\n";
    for (int i = 0; i <= 5; ++i) {
        const double y = i / 5.0;
        s << "    <text x=\"" << kLeft - 6 << "\" y=\"" << fixed(py(y) + 3, 1) << "\" text-anchor=\"end\">"
          << fixed(y, 1) << "</text>\n";
        const double x = xmin + (xmax - xmin) * i / 5.0;
        s << "    <text x=\"" << fixed(px(x), 1) << "\" y=\"" << py(0) + 16 << "\" text-anchor=\"middle\">"
          << fixed(x, 2) << "</text>\n";
    }
    const std::string xlabel = table.rows.empty() ? "" : std::string(to_string(table.rows.front().sweep));
    s << "    <text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
      << xml_escape(xlabel) << "</text>\n";
    s << "  </g>\n";
    // Nominal level.
    s << "  <line x1=\"" << kLeft << "\" y1=\"" << fixed(py(table.alpha), 2) << "\" x2=\"" << kLeft + plot_w
      << "\" y2=\"" << fixed(py(table.alpha), 2)
      << "\" stroke=\"#555555\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n";

    const auto methods = table.methods();
    for (std::size_t i = 0; i < methods.size(); ++i) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : table.rows) {
            if (r.method == methods[i]) pts.emplace_back(r.sweep_value, r.reject_rate);
        }
        std::sort(pts.begin(), pts.end());
        const char* color = kPalette[i % std::size(kPalette)];
        s << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < pts.size(); ++k) {
            if (k) s << ' ';
            s << fixed(px(pts[k].first), 2) << ',' << fixed(py(pts[k].second), 2);
        }
        s << "\"/>\n";
        const double ly = kTop + 14.0 * static_cast<double>(i);
        s << "  <line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly << "\" x2=\"" << kWidth - kRight + 30
          << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
        s << "  <text x=\"" << kWidth - kRight + 36 << "\" y=\"" << ly + 3
          << "\" font-family=\"sans-serif\" font-size=\"10\">" << xml_escape(methods[i]) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw Error(ErrorCode::Io, "failed writing '" + path.string() + "'");
}

}  // namespace

void emit_csv(const RejectionTable& table, const std::filesystem::path& path) {
    write_file(path, format_csv(table));
}

void emit_svg(const RejectionTable& table, const std::filesystem::path& path, const std::string& title) {
    write_file(path, format_svg(table, title));
}

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::Config, path + ": " + what);
}

template <class T>
T read(const json& obj, const std::string& key, const std::string& path, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        config_error(path + key, "has the wrong type");
    }
}

std::size_t read_count(const json& obj, const std::string& key, const std::string& path, std::size_t fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) config_error(path + key, "must be a non-negative integer");
    return v.get<std::size_t>();
}

template <class D>
void read_common(const json& j, D& d) {
    d.q1 = read_count(j, "q1", "design.", d.q1);
    d.q0 = read_count(j, "q0", "design.", d.q0);
    d.h = read_count(j, "h", "design.", d.h);
    d.beta = read<double>(j, "beta", "design.", d.beta);
    d.theta0 = read<double>(j, "theta0", "design.", d.theta0);
    d.eta = read<std::vector<double>>(j, "eta", "design.", d.eta);
    d.sizes.min = read_count(j, "size_min", "design.", d.sizes.min);
    d.sizes.max = read_count(j, "size_max", "design.", d.sizes.max);
    if (d.sizes.min == 0 || d.sizes.min > d.sizes.max) config_error("design.size_min", "must satisfy 1 <= size_min <= size_max");
}

}  // namespace

ExperimentSpec spec_from_json(const json& config) {
    if (!config.is_object()) config_error("$", "config must be a JSON object");
    ExperimentSpec spec;
    spec.name = read<std::string>(config, "name", "", spec.name);

    if (!config.contains("design") || !config.at("design").is_object()) config_error("design", "missing object");
    const auto& dj = config.at("design");
    const auto kind = read<std::string>(dj, "kind", "design.", "linear");
    if (kind == "linear") {
        LinearDesign d;
        read_common(dj, d);
        d.treated_error_variance = read<double>(dj, "treated_error_variance", "design.", d.treated_error_variance);
        d.untreated_error_variance = read<double>(dj, "untreated_error_variance", "design.", d.untreated_error_variance);
        spec.design = d;
    } else if (kind == "probit") {
        ProbitDesign d;
        read_common(dj, d);
        spec.design = d;
    } else {
        config_error("design.kind", "must be \"linear\" or \"probit\"");
    }

    if (!config.contains("sweep") || !config.at("sweep").is_object()) config_error("sweep", "missing object");
    const auto& sj = config.at("sweep");
    try {
        spec.sweep = sweep_param_from_string(read<std::string>(sj, "param", "sweep.", "beta"));
    } catch (const Error&) {
        config_error("sweep.param", "must be one of beta, h, q");
    }
    spec.values = read<std::vector<double>>(sj, "values", "sweep.", {});

    if (!config.contains("methods") || !config.at("methods").is_array()) config_error("methods", "missing array");
    const auto& mj = config.at("methods");
    for (std::size_t i = 0; i < mj.size(); ++i) {
        const std::string path = "methods[" + std::to_string(i) + "]";
        if (!mj[i].is_string()) config_error(path, "must be a string");
        try {
            spec.methods.push_back(method_from_string(mj[i].get<std::string>()));
        } catch (const Error&) {
            config_error(path, "unknown method '" + mj[i].get<std::string>() + "'");
        }
    }

    if (config.contains("replications")) {
        const auto& r = config.at("replications");
        if (!r.is_number_integer() || r.get<long long>() < 1) config_error("replications", "must be an integer >= 1");
        spec.replications = r.get<std::size_t>();
    }
    spec.alpha = read<double>(config, "alpha", "", spec.alpha);
    if (config.contains("master_seed")) {
        const auto& s = config.at("master_seed");
        if (!s.is_number_integer()) config_error("master_seed", "must be an integer");
        spec.master_seed = s.get<std::uint64_t>();
    }
    spec.bootstrap_reps = read_count(config, "bootstrap_reps", "", spec.bootstrap_reps);
    const auto pairing = read<std::string>(config, "crs_pairing", "", "random");
    if (pairing == "random") {
        spec.pairing = PairingStrategy::Random;
    } else if (pairing == "by_size") {
        spec.pairing = PairingStrategy::BySize;
    } else {
        config_error("crs_pairing", "must be \"random\" or \"by_size\"");
    }

    spec.validate();
    return spec;
}

}  // namespace fewclusters
