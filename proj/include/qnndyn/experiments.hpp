#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace qnndyn {

// One experiment = one config. d/m/p/gamma accept a scalar or a list in JSON;
// runners iterate the cross product of whatever lists the kind uses. Unknown
// keys are rejected so that typos cannot silently fall back to defaults.
struct ExperimentConfig {
    std::string kind;
    std::vector<int> d;
    std::vector<int> m{2};
    std::vector<int> p;
    std::vector<double> gamma{1.0};
    std::vector<std::uint64_t> seeds;

    // gradient-descent settings (learning rate is learning_rate_scale / p)
    double learning_rate_scale = 1e-3;
    int max_iters = 1000;
    int log_every = 10;
    double early_stop_loss = 0.0;

    // asymptotic-flow settings, in rescaled time τ = γ²t so γ families share
    // a horizon; runners divide by γ² before integrating
    double asym_step = 1e-3;
    double asym_t_end = 1.0;
    int asym_log_every = 10;

    std::uint64_t dataset_seed = 1234;  // datasets are fixed across seeds
    int rate_window = 50;               // logged points per rate estimate
    int num_samples = 200;              // minima-sampling draws per cell
    double epsilon = 0.05;              // minima threshold slack

    std::string out_dir = "out";
    int threads = 1;
    bool allow_large = false;

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
    nlohmann::json to_json() const;

    // FNV-1a over the canonical dump of the semantic fields (everything
    // except out_dir/threads/allow_large), as 16 hex digits.
    std::string hash() const;
    void validate() const;
};

struct RunRecord {
    std::string kind;
    std::string config_hash;
    std::string tool_version;
    double wall_seconds = 0.0;
    nlohmann::json config;               // echoed semantic config
    nlohmann::json files;                // paths relative to the record's directory
    nlohmann::json aggregates;

    nlohmann::json to_json() const;
    void write(const std::string& path) const;
};

RunRecord run_pauli_sublinear(const ExperimentConfig& cfg);
RunRecord run_one_sample(const ExperimentConfig& cfg);
RunRecord run_asym_lambda_sweep(const ExperimentConfig& cfg);
RunRecord run_scaled_fast(const ExperimentConfig& cfg);
RunRecord run_kernel_drift(const ExperimentConfig& cfg);
RunRecord run_y_concentration(const ExperimentConfig& cfg);
RunRecord run_minima_sampling(const ExperimentConfig& cfg);

// Dispatch on cfg.kind.
RunRecord run_experiment(const ExperimentConfig& cfg);

// Re-derives every aggregate statistic of a written record from its CSV files
// and compares. Returns true when everything matches to 1e-12 relative.
bool verify_record(const std::string& record_path, std::ostream& log);

// Fast built-in property checks (gradient vs finite differences, the kernel
// split identity, spectrum conservation, minima closed forms). Returns the
// number of failures; prints one line per check.
int selftest(std::ostream& log);

// Least-squares helpers shared by runners, verify and the acceptance suite.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// -d ln L / dt estimated per logged point by a least-squares slope over a
// centered window of `window` logged points (clamped at the ends).
std::vector<double> rate_estimate(const std::vector<double>& time, const std::vector<double>& loss,
                                  int window);

double median_of(std::vector<double> values);

std::uint64_t fnv1a(const std::string& s);

extern const char* const kToolVersion;

}  // namespace qnndyn
