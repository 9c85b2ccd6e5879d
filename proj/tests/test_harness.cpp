#include <doctest.h>

#include "fewclusters/error.hpp"
#include "fewclusters/harness.hpp"
#include "fewclusters/rng.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>

using namespace fewclusters;

namespace {

ExperimentSpec small_spec() {
    ExperimentSpec spec;
    LinearDesign design;
    design.q1 = design.q0 = 3;
    spec.design = design;
    spec.sweep = SweepParam::Beta;
    spec.values = {0.0, 1.5};
    spec.methods = {Method::Placebo, Method::Im, Method::Crs, Method::CrsRandomized, Method::WildBootstrap,
                    Method::BchT};
    spec.replications = 40;
    spec.bootstrap_reps = 49;
    spec.master_seed = 11;
    return spec;
}

// Minimal well-formedness check: balanced, properly nested tags.
bool well_formed_xml(const std::string& doc) {
    std::vector<std::string> stack;
    std::size_t pos = 0;
    bool saw_root = false;
    while ((pos = doc.find('<', pos)) != std::string::npos) {
        const auto end = doc.find('>', pos);
        if (end == std::string::npos) return false;
        const std::string tag = doc.substr(pos + 1, end - pos - 1);
        pos = end + 1;
        if (tag.empty()) return false;
        if (tag.front() == '?' || tag.front() == '!') continue;
        if (tag.front() == '/') {
            if (stack.empty() || stack.back() != tag.substr(1)) return false;
            stack.pop_back();
            continue;
        }
        if (tag.back() == '/') continue;
        if (stack.empty() && saw_root) return false;
        saw_root = true;
        stack.push_back(tag.substr(0, tag.find_first_of(" \t\n")));
    }
    if (!stack.empty() || !saw_root) return false;
    // Text content must not carry raw ampersands outside entities.
    for (std::size_t i = doc.find('&'); i != std::string::npos; i = doc.find('&', i + 1)) {
        const auto semi = doc.find(';', i);
        if (semi == std::string::npos || semi - i > 6) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("spec validation") {
    auto spec = small_spec();
    spec.replications = 0;
    try {
        run_experiment(spec);
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Config);
        CHECK(std::string(e.what()).find("replications") != std::string::npos);
    }
    spec = small_spec();
    spec.values.clear();
    CHECK_THROWS_AS(run_experiment(spec), Error);
}

TEST_CASE("method applicability") {
    auto spec = small_spec();
    LinearDesign d;
    d.q1 = 2;
    d.q0 = 4;
    spec.design = d;
    spec.methods = {Method::Crs};
    try {
        run_experiment(spec);
        FAIL("expected MethodInapplicable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MethodInapplicable);
    }

    spec.design = ProbitDesign{};
    spec.methods = {Method::WildBootstrap};
    CHECK_THROWS_AS(run_experiment(spec), Error);
}

TEST_CASE("sweeps rewrite the design") {
    const Design base = LinearDesign{};
    CHECK(std::get<LinearDesign>(apply_sweep(base, SweepParam::Beta, 0.3)).beta == 0.3);
    CHECK(std::get<LinearDesign>(apply_sweep(base, SweepParam::H, 7)).h == 7);
    const auto q = std::get<LinearDesign>(apply_sweep(base, SweepParam::Q, 5));
    CHECK(q.q1 == 5);
    CHECK(q.q0 == 5);
}

TEST_CASE("table shape and determinism") {
    const auto spec = small_spec();
    const auto a = run_experiment(spec);
    CHECK(a.rows.size() == spec.values.size() * spec.methods.size());
    for (const auto& r : a.rows) {
        CHECK(r.reject_rate >= 0.0);
        CHECK(r.reject_rate <= 1.0);
        CHECK(r.replications == 40);
        CHECK(r.failures == 0);
    }
    CHECK(a == run_experiment(spec));
    CHECK(a.find("placebo", 1.5) != nullptr);
    CHECK(a.find("placebo", 0.7) == nullptr);
}

TEST_CASE("thread count does not change the table") {
    auto spec = small_spec();
    spec.threads = 1;
    const auto one = run_experiment(spec);
    spec.threads = 8;
    const auto eight = run_experiment(spec);
    CHECK(one == eight);
    CHECK(format_csv(one) == format_csv(eight));
}

TEST_CASE("an exact reference method rejects at the nominal rate") {
    ExperimentSpec spec;
    spec.values = {0.0};
    spec.replications = 2000;
    spec.custom.push_back({"oracle", [](const ClusterDataset&, std::uint64_t seed) {
                               auto eng = make_engine(seed);
                               return uniform01(eng) < 0.05;
                           }});
    const auto table = run_experiment(spec);
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0].method == "oracle");
    CHECK(std::abs(table.rows[0].reject_rate - 0.05) <= 0.01);
}

TEST_CASE("every method sees the same dataset within a replication") {
    ExperimentSpec spec;
    spec.values = {0.0, 0.5};
    spec.replications = 30;
    spec.master_seed = 99;
    std::mutex mu;
    std::vector<std::uint64_t> seen_a, seen_b;
    spec.custom.push_back({"a", [&](const ClusterDataset& data, std::uint64_t) {
                               std::lock_guard lock(mu);
                               seen_a.push_back(data.fingerprint());
                               return false;
                           }});
    spec.custom.push_back({"b", [&](const ClusterDataset& data, std::uint64_t) {
                               std::lock_guard lock(mu);
                               seen_b.push_back(data.fingerprint());
                               return false;
                           }});
    spec.threads = 4;
    run_experiment(spec);

    std::vector<std::uint64_t> expected;
    for (std::size_t s = 0; s < spec.values.size(); ++s) {
        const auto design = apply_sweep(spec.design, spec.sweep, spec.values[s]);
        for (std::size_t r = 0; r < spec.replications; ++r) {
            const auto seed = replication_seed(spec.master_seed, s, r);
            expected.push_back(generate(design, derive_seed(seed, {stream::kData})).fingerprint());
        }
    }
    std::sort(seen_a.begin(), seen_a.end());
    std::sort(seen_b.begin(), seen_b.end());
    std::sort(expected.begin(), expected.end());
    CHECK(seen_a == expected);
    CHECK(seen_b == expected);
}

TEST_CASE("CSV output") {
    RejectionTable table;
    CHECK(format_csv(table) == "method,sweep_param,sweep_value,reject_rate,reps,seed\n");

    for (const char* m : {"placebo", "im"}) {
        for (double v : {0.0, 0.15, 0.3}) table.rows.push_back({m, SweepParam::Beta, v, 0.05, 2000, 7, 0});
    }
    const auto csv = format_csv(table);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    CHECK(csv.find("im,beta,0.15,0.05,2000,7\n") != std::string::npos);
}

TEST_CASE("SVG output is well-formed") {
    const auto table = run_experiment(small_spec());
    const auto svg = format_svg(table, "size & power <test>");
    CHECK(well_formed_xml(svg));
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(well_formed_xml(format_svg(RejectionTable{})));
    CHECK_FALSE(well_formed_xml("<svg><g></svg>"));
}

TEST_CASE("JSON configs") {
    const auto spec = spec_from_json(nlohmann::json::parse(R"({
        "design": {"kind": "probit", "q1": 4, "q0": 2, "h": 3, "size_min": 50, "size_max": 60},
        "sweep": {"param": "h", "values": [0, 1, 2]},
        "methods": ["placebo", "im"],
        "replications": 10,
        "master_seed": 5,
        "crs_pairing": "by_size"
    })"));
    const auto& d = std::get<ProbitDesign>(spec.design);
    CHECK(d.q1 == 4);
    CHECK(d.sizes.max == 60);
    CHECK(spec.sweep == SweepParam::H);
    CHECK(spec.values.size() == 3);
    CHECK(spec.pairing == PairingStrategy::BySize);

    const auto bad = [](const char* text) {
        try {
            spec_from_json(nlohmann::json::parse(text));
        } catch (const Error& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(bad(R"({"design": {}, "sweep": {"values": [0]}, "methods": ["placebo"], "replications": 0})")
              .find("replications") != std::string::npos);
    CHECK(bad(R"({"design": {}, "sweep": {"values": [0]}, "methods": ["nope"]})").find("methods[0]") !=
          std::string::npos);
    CHECK(bad(R"({"design": {"q1": -1}, "sweep": {"values": [0]}, "methods": ["im"]})").find("design.q1") !=
          std::string::npos);
}

TEST_CASE("number formatting round-trips") {
    for (double v : {0.0, 0.05, 0.15, 1.0 / 3.0, 1e-9, 2000.0}) CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(0.15) == "0.15");
}
