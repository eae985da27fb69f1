#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qnndyn/errors.hpp"
#include "qnndyn/experiments.hpp"

namespace {

using qnndyn::ConfigError;

struct CommonOpts {
    std::string config;
    std::string out;
    std::string seeds;
    int threads = 0;
    bool allow_large = false;
};

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t comma = s.find(',', pos);
        std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos
                                                                   : comma - pos);
        if (tok.empty()) throw ConfigError("--seeds has an empty entry");
        char* end = nullptr;
        errno = 0;
        unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
        if (errno != 0 || end == tok.c_str() || *end != '\0') {
            throw ConfigError("--seeds entry is not a non-negative integer: '" + tok + "'");
        }
        out.push_back(v);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw ConfigError("--seeds must list at least one seed");
    return out;
}

int run_kind(const std::string& kind, const CommonOpts& o) {
    qnndyn::ExperimentConfig cfg = qnndyn::ExperimentConfig::load(o.config);
    if (cfg.kind != kind) {
        throw ConfigError("config kind '" + cfg.kind + "' does not match subcommand '" + kind +
                          "'");
    }
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (!o.seeds.empty()) cfg.seeds = parse_seeds(o.seeds);
    if (o.threads > 0) cfg.threads = o.threads;
    if (o.allow_large) cfg.allow_large = true;
    cfg.validate();
    qnndyn::RunRecord rec = qnndyn::run_experiment(cfg);
    std::cout << "wrote " << (std::filesystem::path(cfg.out_dir) / "record.json").string()
              << " [" << rec.config_hash << "] in " << rec.wall_seconds << "s\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"training dynamics toolkit for measurement-based quantum models"};
    app.set_version_flag("--version", qnndyn::kToolVersion);
    app.require_subcommand(1);

    const std::vector<std::string> kinds = {
        "pauli-sublinear", "one-sample",      "asym-lambda-sweep", "scaled-fast",
        "kernel-drift",    "y-concentration", "minima-sampling"};
    CommonOpts opts;
    for (const std::string& kind : kinds) {
        CLI::App* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
        sub->add_option("--config", opts.config, "JSON experiment config")->required();
        sub->add_option("--out", opts.out, "output directory (overrides the config)");
        sub->add_option("--seeds", opts.seeds, "comma-separated seed list (overrides)");
        sub->add_option("--threads", opts.threads, "worker threads (overrides)");
        sub->add_flag("--allow-large", opts.allow_large, "lift the default resource caps");
    }
    std::string record_path;
    CLI::App* verify = app.add_subcommand(
        "verify", "recompute a run's aggregates from its CSV files and compare");
    verify->add_option("record", record_path, "path to a record.json")->required();
    app.add_subcommand("selftest", "run a quick battery of internal consistency checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (const std::string& kind : kinds) {
            if (app.get_subcommand(kind)->parsed()) return run_kind(kind, opts);
        }
        if (verify->parsed()) {
            return qnndyn::verify_record(record_path, std::cout) ? 0 : 1;
        }
        return qnndyn::selftest(std::cout) == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const qnndyn::ResourceCapError& e) {
        std::cerr << "resource cap: " << e.what() << '\n';
        return 4;
    } catch (const qnndyn::NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
