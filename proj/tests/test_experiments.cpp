#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnndyn/csv.hpp"
#include "qnndyn/errors.hpp"
#include "qnndyn/experiments.hpp"
#include "qnndyn/svgplot.hpp"

using namespace qnndyn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "qnndyn_exp_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json base_config(const std::string& kind) {
    return json{{"kind", kind}, {"d", 4}, {"p", 2}, {"seeds", {1, 2}}};
}

}  // namespace

TEST_CASE("config parsing accepts scalars and lists interchangeably") {
    json a = base_config("pauli-sublinear");
    a["d"] = 4;
    a["gamma"] = 1.0;
    json b = base_config("pauli-sublinear");
    b["d"] = json::array({4});
    b["gamma"] = json::array({1.0});
    ExperimentConfig ca = ExperimentConfig::from_json(a);
    ExperimentConfig cb = ExperimentConfig::from_json(b);
    CHECK(ca.d == cb.d);
    CHECK(ca.gamma == cb.gamma);
    CHECK(ca.hash() == cb.hash());
    CHECK(ca.m == std::vector<int>{2});
    CHECK(ca.threads == 1);
    CHECK_FALSE(ca.allow_large);
}

TEST_CASE("config parsing rejects unknown keys and malformed values") {
    json good = base_config("pauli-sublinear");
    CHECK_NOTHROW(ExperimentConfig::from_json(good));

    json unknown = good;
    unknown["learning_rate"] = 0.1;  // the real key is learning_rate_scale
    CHECK_THROWS_AS(ExperimentConfig::from_json(unknown), ConfigError);

    json odd_d = good;
    odd_d["d"] = 5;
    CHECK_THROWS_AS(ExperimentConfig::from_json(odd_d), ConfigError);

    json bad_gamma = good;
    bad_gamma["gamma"] = 0.0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad_gamma), ConfigError);

    json bad_eps = good;
    bad_eps["epsilon"] = 1.0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad_eps), ConfigError);

    json no_seeds = good;
    no_seeds.erase("seeds");
    CHECK_THROWS_AS(ExperimentConfig::from_json(no_seeds), ConfigError);

    json no_kind = good;
    no_kind.erase("kind");
    CHECK_THROWS_AS(ExperimentConfig::from_json(no_kind), ConfigError);

    json bad_kind = good;
    bad_kind["kind"] = "frobnicate";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad_kind), ConfigError);

    json one_sample_m2 = base_config("one-sample");
    one_sample_m2["m"] = 2;
    CHECK_THROWS_AS(ExperimentConfig::from_json(one_sample_m2), ConfigError);

    json minima_odd_m = base_config("minima-sampling");
    minima_odd_m["m"] = 3;
    minima_odd_m["gamma"] = 2.0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(minima_odd_m), ConfigError);
}

TEST_CASE("config hash ignores execution-only fields and tracks semantic ones") {
    ExperimentConfig a = ExperimentConfig::from_json(base_config("pauli-sublinear"));
    ExperimentConfig b = a;
    b.out_dir = "somewhere/else";
    b.threads = 7;
    b.allow_large = true;
    CHECK(a.hash() == b.hash());
    ExperimentConfig c = a;
    c.d = {8};
    CHECK(a.hash() != c.hash());
    CHECK(a.hash().size() == 16);
}

TEST_CASE("fnv1a matches the published test vectors") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("rate estimator recovers a pure exponential decay") {
    std::vector<double> t, l;
    for (int k = 0; k <= 200; ++k) {
        t.push_back(0.02 * k);
        l.push_back(2.5 * std::exp(-1.7 * 0.02 * k));
    }
    std::vector<double> r = rate_estimate(t, l, 50);
    for (double x : r) CHECK(x == doctest::Approx(1.7).epsilon(1e-10));
    CHECK_THROWS_AS(rate_estimate({0.0, 1.0}, {1.0}, 10), std::invalid_argument);
    CHECK(rate_estimate({0.0}, {1.0}, 10) == std::vector<double>{0.0});
}

TEST_CASE("fit_line is exact on affine data and rejects degenerate input") {
    LinearFit f = fit_line({1.0, 2.0, 4.0, 8.0}, {-1.0, -3.0, -7.0, -15.0});
    CHECK(f.slope == doctest::Approx(-2.0).epsilon(1e-14));
    CHECK(f.intercept == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(fit_line({1.0}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(fit_line({2.0, 2.0}, {1.0, 5.0}), std::invalid_argument);
}

TEST_CASE("median_of handles odd and even counts") {
    CHECK(median_of({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median_of({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK_THROWS_AS(median_of({}), std::invalid_argument);
}

TEST_CASE("csv files round-trip doubles bit-exactly") {
    fs::path p = scratch_dir() / "roundtrip.csv";
    {
        CsvWriter w(p.string());
        w.header({"x", "y"});
        w.row({0.1, -1.0 / 7.0});
        w.row({1e-300, 6.02214076e23});
    }
    CsvTable t = read_csv(p.string());
    CHECK(t.columns == std::vector<std::string>{"x", "y"});
    REQUIRE(t.rows() == 2);
    CHECK(t.col("x")[0] == 0.1);
    CHECK(t.col("y")[0] == -1.0 / 7.0);
    CHECK(t.col("x")[1] == 1e-300);
    CHECK(t.col("y")[1] == 6.02214076e23);
    CHECK_THROWS(read_csv((scratch_dir() / "missing.csv").string()));
}

TEST_CASE("svg chart writer emits a plausible document") {
    fs::path p = scratch_dir() / "chart.svg";
    PlotSeries s{"series", {{1.0, 1.0}, {2.0, 0.1}, {3.0, 0.01}}, false};
    write_svg_chart(p.string(), {"title", "x", "y", false, true}, {s});
    std::string body = slurp(p);
    CHECK(body.find("<svg") != std::string::npos);
    CHECK(body.find("</svg>") != std::string::npos);
    CHECK(body.find("polyline") != std::string::npos);
}

TEST_CASE("tiny pauli-sublinear run is deterministic and verifies") {
    json j = base_config("pauli-sublinear");
    j["max_iters"] = 20;
    j["log_every"] = 5;
    j["rate_window"] = 4;
    j["out_dir"] = (scratch_dir() / "sub_a").string();
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    RunRecord rec = run_experiment(cfg);
    CHECK(rec.kind == "pauli-sublinear");
    CHECK(rec.aggregates.at("cells").size() == 1);
    double ratio = rec.aggregates.at("cells")[0].at("min_bound_ratio").get<double>();
    CHECK(ratio >= 1.0 - 1e-9);

    std::ostringstream log;
    CHECK(verify_record((fs::path(cfg.out_dir) / "record.json").string(), log));

    json j2 = j;
    j2["out_dir"] = (scratch_dir() / "sub_b").string();
    run_experiment(ExperimentConfig::from_json(j2));
    for (const auto& cell : rec.files.at("cells")) {
        for (const auto& name : cell.at("seed_csvs")) {
            std::string f = name.get<std::string>();
            CHECK(slurp(fs::path(cfg.out_dir) / f) == slurp(scratch_dir() / "sub_b" / f));
        }
    }
}

TEST_CASE("verify catches a tampered record") {
    json j = base_config("pauli-sublinear");
    j["max_iters"] = 10;
    j["log_every"] = 5;
    j["rate_window"] = 3;
    j["out_dir"] = (scratch_dir() / "tamper").string();
    run_experiment(ExperimentConfig::from_json(j));
    fs::path rp = fs::path(j["out_dir"].get<std::string>()) / "record.json";

    json rec;
    {
        std::ifstream in(rp);
        in >> rec;
    }
    double v = rec["aggregates"]["cells"][0]["mean_final_loss"].get<double>();
    rec["aggregates"]["cells"][0]["mean_final_loss"] = v * 1.001;
    {
        std::ofstream out(rp);
        out << rec.dump(2);
    }
    std::ostringstream log;
    CHECK_FALSE(verify_record(rp.string(), log));
}

TEST_CASE("tiny scaled-fast run verifies and reports threshold stats") {
    json j = base_config("scaled-fast");
    j["d"] = 2;
    j["p"] = 3;
    j["gamma"] = 4.0;
    j["max_iters"] = 400;
    j["log_every"] = 10;
    j["rate_window"] = 5;
    j["early_stop_loss"] = 1e-2;
    j["out_dir"] = (scratch_dir() / "fast").string();
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    RunRecord rec = run_experiment(cfg);
    const json& cell = rec.aggregates.at("cells")[0];
    CHECK(cell.contains("frac_reached"));
    CHECK(cell.contains("median_iters_to_threshold"));
    std::ostringstream log;
    CHECK(verify_record((fs::path(cfg.out_dir) / "record.json").string(), log));

    json bad = j;
    bad["gamma"] = 1.0;
    CHECK_THROWS_AS(run_experiment(ExperimentConfig::from_json(bad)), ConfigError);
}

TEST_CASE("tiny one-sample run fits the rate scatter and verifies") {
    json j = base_config("one-sample");
    j["d"] = 2;
    j["m"] = 1;
    j["p"] = 4;
    j["gamma"] = json::array({2.0, 4.0});
    j["seeds"] = json::array({1, 2, 3});
    j["max_iters"] = 300;
    j["log_every"] = 5;
    j["rate_window"] = 8;
    j["early_stop_loss"] = 1e-6;
    j["out_dir"] = (scratch_dir() / "one").string();
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    RunRecord rec = run_experiment(cfg);
    CHECK(rec.aggregates.at("fit").at("slope").get<double>() > 0.0);
    CHECK(rec.aggregates.at("per_gamma").size() == 2);
    std::ostringstream log;
    CHECK(verify_record((fs::path(cfg.out_dir) / "record.json").string(), log));
}

TEST_CASE("tiny asym lambda sweep matches the scalar closed form and verifies") {
    json j = base_config("asym-lambda-sweep");
    j.erase("p");
    j["d"] = 4;
    j["m"] = json::array({1, 2});
    j["gamma"] = json::array({1.0, 2.0});
    j["seeds"] = json::array({5});
    j["asym_step"] = 1e-3;
    j["asym_t_end"] = 0.05;
    j["asym_log_every"] = 5;
    j["out_dir"] = (scratch_dir() / "sweep").string();
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    RunRecord rec = run_experiment(cfg);
    for (const auto& cell : rec.aggregates.at("cells")) {
        if (cell.at("m").get<int>() == 1) {
            CHECK(cell.at("m1_closed_form_max_dev").get<double>() < 1e-8);
        }
        CHECK(cell.at("median_min_lambda").get<double>() >= -1e-9);
    }
    std::ostringstream log;
    CHECK(verify_record((fs::path(cfg.out_dir) / "record.json").string(), log));
}

TEST_CASE("tiny kernel drift run shows gamma independence and verifies") {
    json j = base_config("kernel-drift");
    j.erase("p");
    j["m"] = 2;
    j["gamma"] = json::array({2.0, 4.0});
    j["seeds"] = json::array({1, 2});
    j["asym_step"] = 1e-3;
    j["asym_t_end"] = 0.05;
    j["asym_log_every"] = 5;
    j["out_dir"] = (scratch_dir() / "drift").string();
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    RunRecord rec = run_experiment(cfg);
    CHECK(rec.aggregates.at("gamma_independence_max_dev").get<double>() <= 1e-10);
    std::ostringstream log;
    CHECK(verify_record((fs::path(cfg.out_dir) / "record.json").string(), log));
}

TEST_CASE("tiny y-concentration run verifies and respects the resource cap") {
    json j = base_config("y-concentration");
    j["p"] = json::array({2, 4});
    j["seeds"] = json::array({1, 2, 3});
    j["max_iters"] = 20;
    j["log_every"] = 5;
    j["out_dir"] = (scratch_dir() / "conc").string();
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    RunRecord rec = run_experiment(cfg);
    CHECK(rec.aggregates.contains("slope_y0_dev"));
    CHECK(rec.aggregates.contains("slope_theta_disp"));
    std::ostringstream log;
    CHECK(verify_record((fs::path(cfg.out_dir) / "record.json").string(), log));

    json big = j;
    big["d"] = 32;
    big["out_dir"] = (scratch_dir() / "conc_big").string();
    CHECK_THROWS_AS(run_experiment(ExperimentConfig::from_json(big)), ResourceCapError);
}

TEST_CASE("tiny minima sampling run verifies and is reproducible") {
    json j = base_config("minima-sampling");
    j.erase("p");
    j["d"] = 16;
    j["m"] = 2;
    j["gamma"] = 2.0;
    j["num_samples"] = 8;
    j["seeds"] = json::array({9});
    j["out_dir"] = (scratch_dir() / "minima_a").string();
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    RunRecord rec = run_experiment(cfg);
    const json& cell = rec.aggregates.at("cells")[0];
    CHECK(cell.at("median").get<double>() <= 6.0 + 1e-9);
    CHECK(cell.at("q05").get<double>() <= cell.at("q95").get<double>());
    std::ostringstream log;
    CHECK(verify_record((fs::path(cfg.out_dir) / "record.json").string(), log));

    json j2 = j;
    j2["out_dir"] = (scratch_dir() / "minima_b").string();
    run_experiment(ExperimentConfig::from_json(j2));
    CHECK(slurp(fs::path(cfg.out_dir) / "values.csv") ==
          slurp(scratch_dir() / "minima_b" / "values.csv"));
}
