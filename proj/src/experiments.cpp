#include "qnndyn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "qnndyn/asymdyn.hpp"
#include "qnndyn/csv.hpp"
#include "qnndyn/errors.hpp"
#include "qnndyn/kernels.hpp"
#include "qnndyn/model.hpp"
#include "qnndyn/svgplot.hpp"
#include "qnndyn/train.hpp"

namespace qnndyn {

const char* const kToolVersion = "qnn-dyn 0.1.0";

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// stream-id namespaces keep independent draws from ever sharing a stream
constexpr std::uint64_t kAnsatzStream = 1'000'000;
constexpr std::uint64_t kDatasetStream = 2'000'000;
constexpr std::uint64_t kDirectionStream = 3'000'000;

std::vector<int> as_int_list(const json& v, const std::string& key) {
    auto one = [&](const json& x) {
        if (!x.is_number_integer()) throw ConfigError("config key '" + key + "' must be integer");
        return x.get<int>();
    };
    std::vector<int> out;
    if (v.is_array()) {
        for (const auto& x : v) out.push_back(one(x));
    } else {
        out.push_back(one(v));
    }
    return out;
}

std::vector<double> as_double_list(const json& v, const std::string& key) {
    auto one = [&](const json& x) {
        if (!x.is_number()) throw ConfigError("config key '" + key + "' must be numeric");
        return x.get<double>();
    };
    std::vector<double> out;
    if (v.is_array()) {
        for (const auto& x : v) out.push_back(one(x));
    } else {
        out.push_back(one(v));
    }
    return out;
}

double as_double(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config key '" + key + "' must be numeric");
    return v.get<double>();
}

int as_int(const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be integer");
    return v.get<int>();
}

std::string num_tag(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    std::string s = buf;
    for (char& c : s) {
        if (c == '.') c = 'p';
        if (c == '-') c = 'm';
    }
    return s;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex err_mutex;
    auto worker = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

TrainingSet cell_dataset(const ExperimentConfig& cfg, int d, int m) {
    RngStream rng(cfg.dataset_seed,
                  kDatasetStream + static_cast<std::uint64_t>(d) * 64 + static_cast<std::uint64_t>(m));
    TrainingSet ds = sample_orthogonal_dataset(d, m, rng, m % 2 == 0);
    if (m == 1) ds.labels(0) = 1.0;  // single-sample runs use the +1 label
    return ds;
}

PeriodicAnsatz cell_ansatz(int d, int p, std::uint64_t seed) {
    RngStream rng(seed, kAnsatzStream + static_cast<std::uint64_t>(p));
    return build_periodic_ansatz(d, p, rng);
}

// measurement direction shared across γ values at fixed (seed, d)
Matrix cell_direction(int d, std::uint64_t seed) {
    RngStream rng(seed, kDirectionStream + static_cast<std::uint64_t>(d));
    return haar_unitary(d, rng);
}

// ---------------------------------------------------------------- series ---

struct SeedSeries {
    std::vector<double> iter, time, loss, rate, lmin, lmax, dispinf, disp2;
};

SeedSeries series_from_traj(const Trajectory& traj, int rate_window) {
    SeedSeries s;
    for (const TrajectoryStep& st : traj.steps) {
        s.iter.push_back(st.iter);
        s.time.push_back(st.time);
        s.loss.push_back(st.loss);
        s.lmin.push_back(st.kernel.lambda_min_asym);
        s.lmax.push_back(st.kernel.lambda_max_full);
        s.dispinf.push_back(st.theta_disp_inf);
        s.disp2.push_back(st.theta_disp_2);
    }
    s.rate = rate_estimate(s.time, s.loss, rate_window);
    return s;
}

SeedSeries series_from_csv(const CsvTable& t) {
    SeedSeries s;
    s.iter = t.col("iter");
    s.time = t.col("time");
    s.loss = t.col("loss");
    s.rate = t.col("rate_estimate");
    s.lmin = t.col("lambda_min_asym");
    s.lmax = t.col("lambda_max_full");
    s.dispinf = t.col("theta_disp_inf");
    s.disp2 = t.col("theta_disp_2");
    return s;
}

void write_seed_csv(const std::string& path, const SeedSeries& s) {
    CsvWriter w(path);
    w.header({"iter", "time", "loss", "rate_estimate", "lambda_min_asym", "lambda_max_full",
              "theta_disp_inf", "theta_disp_2"});
    for (std::size_t k = 0; k < s.iter.size(); ++k) {
        w.row({s.iter[k], s.time[k], s.loss[k], s.rate[k], s.lmin[k], s.lmax[k], s.dispinf[k],
               s.disp2[k]});
    }
}

// ------------------------------------------------------------ aggregation ---

double vec_mean(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

double vec_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mu = vec_mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// generator operator norm squared is known in closed form for the shipped H
double hnorm_sq(int d) { return static_cast<double>(d) - 1.0 / static_cast<double>(d); }

struct TrainCell {
    int d = 0, m = 0, p = 0;
    double gamma = 1.0;
    std::vector<SeedSeries> seeds;
};

struct AggTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

// Shared by the runners and `verify`: everything here is a pure function of
// the per-seed series plus the config scalars, so it can be recomputed from
// the CSV files alone.
json aggregate_training_cell(const ExperimentConfig& cfg, const TrainCell& cell, AggTable* agg) {
    const bool bound = cell.gamma == 1.0;
    const double eta = cfg.learning_rate_scale / cell.p;
    const double c1 = 12.0 * eta * cell.p * hnorm_sq(cell.d);

    std::size_t common = cell.seeds.front().iter.size();
    for (const SeedSeries& s : cell.seeds) common = std::min(common, s.iter.size());

    std::vector<double> final_losses, flatness, rate_ratios, iters_to, c0s;
    double min_bound_ratio = std::numeric_limits<double>::infinity();
    int reached = 0;
    for (const SeedSeries& s : cell.seeds) {
        final_losses.push_back(s.loss.back());
        double r0 = std::abs(s.rate.front()), rT = std::abs(s.rate.back());
        flatness.push_back(rT / std::max(r0, 1e-300));
        rate_ratios.push_back(s.rate.back() / std::max(s.rate.front(), 1e-300));
        if (cfg.early_stop_loss > 0.0 && s.loss.back() < cfg.early_stop_loss) {
            ++reached;
            iters_to.push_back(s.iter.back());
        }
        double c0 = 1.0 / std::sqrt(s.loss.front());
        c0s.push_back(c0);
        if (bound) {
            for (std::size_t k = 0; k < s.iter.size(); ++k) {
                double env = c0 + c1 * s.iter[k];
                min_bound_ratio = std::min(min_bound_ratio, s.loss[k] * env * env);
            }
        }
    }

    if (agg) {
        agg->header = {"iter", "time", "mean_loss", "std_loss", "half_std_loss"};
        if (bound) {
            agg->header.push_back("bound_mean");
            agg->header.push_back("bound_ratio_min");
        }
        for (std::size_t k = 0; k < common; ++k) {
            std::vector<double> losses;
            for (const SeedSeries& s : cell.seeds) losses.push_back(s.loss[k]);
            std::vector<double> row = {cell.seeds[0].iter[k], cell.seeds[0].time[k],
                                       vec_mean(losses), vec_std(losses), 0.5 * vec_std(losses)};
            if (bound) {
                double bmean = 0.0, rmin = std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < cell.seeds.size(); ++j) {
                    double env = c0s[j] + c1 * cell.seeds[j].iter[k];
                    bmean += 1.0 / (env * env);
                    rmin = std::min(rmin, cell.seeds[j].loss[k] * env * env);
                }
                row.push_back(bmean / static_cast<double>(cell.seeds.size()));
                row.push_back(rmin);
            }
            agg->rows.push_back(std::move(row));
        }
    }

    json out;
    out["d"] = cell.d;
    out["m"] = cell.m;
    out["p"] = cell.p;
    out["gamma"] = cell.gamma;
    out["eta"] = eta;
    out["mean_final_loss"] = vec_mean(final_losses);
    out["flatness_mean"] = vec_mean(flatness);
    out["rate_ratio_mean"] = vec_mean(rate_ratios);
    if (bound) out["min_bound_ratio"] = min_bound_ratio;
    if (cfg.early_stop_loss > 0.0) {
        out["loss_threshold"] = cfg.early_stop_loss;
        out["frac_reached"] =
            static_cast<double>(reached) / static_cast<double>(cell.seeds.size());
        out["median_iters_to_threshold"] = iters_to.empty() ? -1.0 : median_of(iters_to);
    }
    return out;
}

std::string cell_tag(const TrainCell& c) {
    return "d" + std::to_string(c.d) + "_m" + std::to_string(c.m) + "_p" + std::to_string(c.p) +
           "_g" + num_tag(c.gamma);
}

void write_agg_csv(const std::string& path, const AggTable& agg) {
    CsvWriter w(path);
    w.header(agg.header);
    for (const auto& r : agg.rows) w.row(r);
}

// ------------------------------------------------------- training runners ---

RunRecord make_record(const ExperimentConfig& cfg) {
    RunRecord rec;
    rec.kind = cfg.kind;
    rec.config_hash = cfg.hash();
    rec.tool_version = kToolVersion;
    rec.config = cfg.to_json();
    return rec;
}

void finish_record(RunRecord& rec, const ExperimentConfig& cfg,
                   std::chrono::steady_clock::time_point start) {
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rec.write((fs::path(cfg.out_dir) / "record.json").string());
}

RunRecord run_training_family(const ExperimentConfig& cfg, bool scaled) {
    auto start = std::chrono::steady_clock::now();
    for (double g : cfg.gamma) {
        if (!scaled && g != 1.0) {
            throw ConfigError(cfg.kind + " requires gamma = 1 (got " + std::to_string(g) + ")");
        }
        if (scaled && g <= 1.0) {
            throw ConfigError(cfg.kind + " requires gamma > 1 (got " + std::to_string(g) + ")");
        }
    }
    fs::create_directories(cfg.out_dir);
    RunRecord rec = make_record(cfg);
    json cells_files = json::array();
    json cells_stats = json::array();

    for (int d : cfg.d) {
        for (int m : cfg.m) {
            TrainingSet ds = cell_dataset(cfg, d, m);
            for (int p : cfg.p) {
                for (double g : cfg.gamma) {
                    TrainCell cell{d, m, p, g, {}};
                    cell.seeds.resize(cfg.seeds.size());
                    std::vector<std::string> paths(cfg.seeds.size());
                    parallel_for(
                        static_cast<int>(cfg.seeds.size()), cfg.threads, [&](int si) {
                            PeriodicAnsatz ansatz = cell_ansatz(d, p, cfg.seeds[si]);
                            Measurement meas{build_pauli_like_measurement(d), g};
                            TrainConfig tc;
                            tc.learning_rate = cfg.learning_rate_scale / p;
                            tc.max_iters = cfg.max_iters;
                            tc.log_every = cfg.log_every;
                            tc.early_stop_loss = cfg.early_stop_loss;
                            tc.gamma = g;
                            Trajectory traj = train_gd(ansatz, ds, meas, tc);
                            cell.seeds[si] = series_from_traj(traj, cfg.rate_window);
                            std::string name = cfg.kind + "_" + cell_tag(cell) + "_seed" +
                                               std::to_string(cfg.seeds[si]) + ".csv";
                            write_seed_csv((fs::path(cfg.out_dir) / name).string(),
                                           cell.seeds[si]);
                            paths[si] = name;
                        });

                    AggTable agg;
                    json stats = aggregate_training_cell(cfg, cell, &agg);
                    std::string agg_name = cfg.kind + "_" + cell_tag(cell) + "_agg.csv";
                    write_agg_csv((fs::path(cfg.out_dir) / agg_name).string(), agg);

                    std::vector<PlotSeries> plot;
                    PlotSeries meanc{"mean loss", {}, false};
                    PlotSeries boundc{"lower bound", {}, false};
                    for (const auto& row : agg.rows) {
                        meanc.points.emplace_back(std::max(row[0], 1.0), row[2]);
                        if (row.size() >= 7) boundc.points.emplace_back(std::max(row[0], 1.0), row[5]);
                    }
                    plot.push_back(std::move(meanc));
                    if (!boundc.points.empty()) plot.push_back(std::move(boundc));
                    std::string svg_name = cfg.kind + "_" + cell_tag(cell) + ".svg";
                    write_svg_chart((fs::path(cfg.out_dir) / svg_name).string(),
                                    {cfg.kind + " " + cell_tag(cell), "iteration", "loss", true,
                                     true},
                                    plot);

                    json cf;
                    cf["d"] = d;
                    cf["m"] = m;
                    cf["p"] = p;
                    cf["gamma"] = g;
                    cf["seed_csvs"] = paths;
                    cf["agg_csv"] = agg_name;
                    cf["svg"] = svg_name;
                    cells_files.push_back(cf);
                    cells_stats.push_back(stats);
                }
            }
        }
    }
    rec.files["cells"] = cells_files;
    rec.aggregates["cells"] = cells_stats;
    finish_record(rec, cfg, start);
    return rec;
}

}  // namespace

// ------------------------------------------------------------ public API ---

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("fit_line needs two same-length samples at least");
    }
    double mx = vec_mean(x), my = vec_mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate x values");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssres = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double e = y[i] - (f.intercept + f.slope * x[i]);
        ssres += e * e;
    }
    f.r2 = syy == 0.0 ? 1.0 : 1.0 - ssres / syy;
    return f;
}

std::vector<double> rate_estimate(const std::vector<double>& time, const std::vector<double>& loss,
                                  int window) {
    if (time.size() != loss.size()) throw std::invalid_argument("rate_estimate: length mismatch");
    const int n = static_cast<int>(time.size());
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    window = std::max(window, 2);
    std::vector<double> ln(n);
    for (int k = 0; k < n; ++k) ln[k] = std::log(std::max(loss[k], 1e-300));
    for (int k = 0; k < n; ++k) {
        int lo = std::max(0, k - window / 2);
        int hi = std::min(n - 1, lo + window - 1);
        lo = std::max(0, hi - window + 1);
        double mt = 0.0, ml = 0.0;
        int cnt = hi - lo + 1;
        for (int i = lo; i <= hi; ++i) {
            mt += time[i];
            ml += ln[i];
        }
        mt /= cnt;
        ml /= cnt;
        double num = 0.0, den = 0.0;
        for (int i = lo; i <= hi; ++i) {
            num += (time[i] - mt) * (ln[i] - ml);
            den += (time[i] - mt) * (time[i] - mt);
        }
        out[k] = den > 0.0 ? -num / den : 0.0;
    }
    return out;
}

double median_of(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty set");
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    bool have_kind = false, have_seeds = false, have_d = false;
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") {
            if (!value.is_string()) throw ConfigError("kind must be a string");
            c.kind = value.get<std::string>();
            have_kind = true;
        } else if (key == "d") {
            c.d = as_int_list(value, key);
            have_d = true;
        } else if (key == "m") {
            c.m = as_int_list(value, key);
        } else if (key == "p") {
            c.p = as_int_list(value, key);
        } else if (key == "gamma") {
            c.gamma = as_double_list(value, key);
        } else if (key == "seeds") {
            if (!value.is_array() || value.empty()) {
                throw ConfigError("seeds must be a non-empty array");
            }
            for (const auto& s : value) {
                if (!s.is_number_unsigned() && !s.is_number_integer()) {
                    throw ConfigError("seeds must be non-negative integers");
                }
                c.seeds.push_back(s.get<std::uint64_t>());
            }
            have_seeds = true;
        } else if (key == "learning_rate_scale") {
            c.learning_rate_scale = as_double(value, key);
        } else if (key == "max_iters") {
            c.max_iters = as_int(value, key);
        } else if (key == "log_every") {
            c.log_every = as_int(value, key);
        } else if (key == "early_stop_loss") {
            c.early_stop_loss = as_double(value, key);
        } else if (key == "asym_step") {
            c.asym_step = as_double(value, key);
        } else if (key == "asym_t_end") {
            c.asym_t_end = as_double(value, key);
        } else if (key == "asym_log_every") {
            c.asym_log_every = as_int(value, key);
        } else if (key == "dataset_seed") {
            c.dataset_seed = value.get<std::uint64_t>();
        } else if (key == "rate_window") {
            c.rate_window = as_int(value, key);
        } else if (key == "num_samples") {
            c.num_samples = as_int(value, key);
        } else if (key == "epsilon") {
            c.epsilon = as_double(value, key);
        } else if (key == "out_dir") {
            if (!value.is_string()) throw ConfigError("out_dir must be a string");
            c.out_dir = value.get<std::string>();
        } else if (key == "threads") {
            c.threads = as_int(value, key);
        } else if (key == "allow_large") {
            if (!value.is_boolean()) throw ConfigError("allow_large must be boolean");
            c.allow_large = value.get<bool>();
        } else {
            throw ConfigError("unknown config key: '" + key + "'");
        }
    }
    if (!have_kind) throw ConfigError("config is missing 'kind'");
    if (!have_seeds) throw ConfigError("config is missing 'seeds'");
    if (!have_d) throw ConfigError("config is missing 'd'");
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return from_json(j);
}

json ExperimentConfig::to_json() const {
    json j;
    j["kind"] = kind;
    j["d"] = d;
    j["m"] = m;
    j["p"] = p;
    j["gamma"] = gamma;
    j["seeds"] = seeds;
    j["learning_rate_scale"] = learning_rate_scale;
    j["max_iters"] = max_iters;
    j["log_every"] = log_every;
    j["early_stop_loss"] = early_stop_loss;
    j["asym_step"] = asym_step;
    j["asym_t_end"] = asym_t_end;
    j["asym_log_every"] = asym_log_every;
    j["dataset_seed"] = dataset_seed;
    j["rate_window"] = rate_window;
    j["num_samples"] = num_samples;
    j["epsilon"] = epsilon;
    j["out_dir"] = out_dir;
    j["threads"] = threads;
    j["allow_large"] = allow_large;
    return j;
}

std::string ExperimentConfig::hash() const {
    json j = to_json();
    j.erase("out_dir");
    j.erase("threads");
    j.erase("allow_large");
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

void ExperimentConfig::validate() const {
    static const std::set<std::string> kinds = {
        "pauli-sublinear", "one-sample",      "asym-lambda-sweep", "scaled-fast",
        "kernel-drift",    "y-concentration", "minima-sampling"};
    if (!kinds.count(kind)) throw ConfigError("unknown experiment kind: '" + kind + "'");
    if (d.empty()) throw ConfigError("d list must not be empty");
    if (m.empty()) throw ConfigError("m list must not be empty");
    if (gamma.empty()) throw ConfigError("gamma list must not be empty");
    for (int x : d) {
        if (x < 2 || x % 2 != 0) throw ConfigError("all d values must be even and >= 2");
    }
    for (int x : m) {
        if (x < 1) throw ConfigError("all m values must be >= 1");
    }
    for (int x : p) {
        if (x < 1) throw ConfigError("all p values must be >= 1");
    }
    for (double x : gamma) {
        if (!(x > 0.0)) throw ConfigError("all gamma values must be positive");
    }
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (!(learning_rate_scale > 0.0)) throw ConfigError("learning_rate_scale must be positive");
    if (max_iters < 0) throw ConfigError("max_iters must be >= 0");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
    if (early_stop_loss < 0.0) throw ConfigError("early_stop_loss must be >= 0");
    if (!(asym_step > 0.0) || !(asym_t_end > 0.0)) {
        throw ConfigError("asym_step and asym_t_end must be positive");
    }
    if (asym_log_every < 1) throw ConfigError("asym_log_every must be >= 1");
    if (rate_window < 2) throw ConfigError("rate_window must be >= 2");
    if (num_samples < 1) throw ConfigError("num_samples must be >= 1");
    if (epsilon < 0.0 || epsilon >= 1.0) throw ConfigError("epsilon must lie in [0, 1)");
    if (threads < 1) throw ConfigError("threads must be >= 1");

    const bool needs_p = kind == "pauli-sublinear" || kind == "one-sample" ||
                         kind == "scaled-fast" || kind == "y-concentration";
    if (needs_p && p.empty()) throw ConfigError(kind + " requires a p value or list");
    if (kind == "one-sample" && (m.size() != 1 || m[0] != 1)) {
        throw ConfigError("one-sample requires m = 1");
    }
    if (kind == "minima-sampling") {
        for (int x : m) {
            if (x < 2 || x % 2 != 0) throw ConfigError("minima-sampling requires even m >= 2");
        }
        for (double g : gamma) {
            if (g < 1.0) throw ConfigError("minima-sampling requires gamma >= 1");
        }
    }
}

json RunRecord::to_json() const {
    json j;
    j["kind"] = kind;
    j["config_hash"] = config_hash;
    j["tool_version"] = tool_version;
    j["wall_seconds"] = wall_seconds;
    j["config"] = config;
    j["files"] = files;
    j["aggregates"] = aggregates;
    return j;
}

void RunRecord::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write record: " + path);
    out << to_json().dump(2) << '\n';
}

RunRecord run_pauli_sublinear(const ExperimentConfig& cfg) {
    return run_training_family(cfg, false);
}

RunRecord run_scaled_fast(const ExperimentConfig& cfg) { return run_training_family(cfg, true); }

RunRecord run_one_sample(const ExperimentConfig& cfg) {
    auto start = std::chrono::steady_clock::now();
    fs::create_directories(cfg.out_dir);
    RunRecord rec = make_record(cfg);
    json cells_files = json::array();

    struct ScatterRow {
        double gamma, p, seed, yhat, x, xnorm, rate;
    };
    std::vector<ScatterRow> scatter;

    for (int d : cfg.d) {
        TrainingSet ds = cell_dataset(cfg, d, 1);
        for (int p : cfg.p) {
            for (double g : cfg.gamma) {
                TrainCell cell{d, 1, p, g, {}};
                cell.seeds.resize(cfg.seeds.size());
                std::vector<std::string> paths(cfg.seeds.size());
                std::vector<double> yhats(cfg.seeds.size());
                parallel_for(static_cast<int>(cfg.seeds.size()), cfg.threads, [&](int si) {
                    PeriodicAnsatz ansatz = cell_ansatz(d, p, cfg.seeds[si]);
                    Measurement meas{build_pauli_like_measurement(d), g};
                    TrainConfig tc;
                    tc.learning_rate = cfg.learning_rate_scale / p;
                    tc.max_iters = cfg.max_iters;
                    tc.log_every = cfg.log_every;
                    tc.early_stop_loss = cfg.early_stop_loss;
                    tc.gamma = g;
                    Trajectory traj = train_gd(ansatz, ds, meas, tc);
                    cell.seeds[si] = series_from_traj(traj, cfg.rate_window);
                    yhats[si] = traj.steps.back().predictions(0);
                    std::string name = cfg.kind + "_" + cell_tag(cell) + "_seed" +
                                       std::to_string(cfg.seeds[si]) + ".csv";
                    write_seed_csv((fs::path(cfg.out_dir) / name).string(), cell.seeds[si]);
                    paths[si] = name;
                });
                for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
                    double yh = yhats[si];
                    scatter.push_back({g, static_cast<double>(p),
                                       static_cast<double>(cfg.seeds[si]), yh,
                                       2.0 * (g * g - yh * yh), 2.0 * (1.0 - yh * yh / (g * g)),
                                       cell.seeds[si].rate.back()});
                }
                json cf;
                cf["d"] = d;
                cf["m"] = 1;
                cf["p"] = p;
                cf["gamma"] = g;
                cf["seed_csvs"] = paths;
                cells_files.push_back(cf);
            }
        }
    }

    CsvWriter sw((fs::path(cfg.out_dir) / "scatter.csv").string());
    sw.header({"gamma", "p", "seed", "yhat_final", "x", "x_norm", "rate"});
    std::vector<double> xs, rates;
    for (const ScatterRow& r : scatter) {
        sw.row({r.gamma, r.p, r.seed, r.yhat, r.x, r.xnorm, r.rate});
        xs.push_back(r.x);
        rates.push_back(r.rate);
    }
    LinearFit fit = fit_line(xs, rates);

    json per_gamma = json::array();
    for (double g : cfg.gamma) {
        double minr = std::numeric_limits<double>::infinity();
        for (const ScatterRow& r : scatter) {
            if (r.gamma == g) minr = std::min(minr, r.rate);
        }
        per_gamma.push_back({{"gamma", g}, {"min_final_rate", minr}});
    }
    rec.aggregates["fit"] = {{"slope", fit.slope}, {"intercept", fit.intercept}, {"r2", fit.r2}};
    rec.aggregates["per_gamma"] = per_gamma;
    rec.files["cells"] = cells_files;
    rec.files["scatter_csv"] = "scatter.csv";

    PlotSeries pts{"final rates", {}, true};
    for (const ScatterRow& r : scatter) pts.points.emplace_back(r.x, r.rate);
    PlotSeries line{"fit", {}, false};
    double x0 = *std::min_element(xs.begin(), xs.end());
    double x1 = *std::max_element(xs.begin(), xs.end());
    line.points = {{x0, fit.intercept + fit.slope * x0}, {x1, fit.intercept + fit.slope * x1}};
    write_svg_chart((fs::path(cfg.out_dir) / "one-sample_scatter.svg").string(),
                    {"rate vs 2(gamma^2 - yhat^2)", "2(gamma^2 - yhat^2)", "-d ln L / dt", false,
                     false},
                    {pts, line});
    finish_record(rec, cfg, start);
    return rec;
}

RunRecord run_asym_lambda_sweep(const ExperimentConfig& cfg) {
    auto start = std::chrono::steady_clock::now();
    for (int d : cfg.d) {
        if (d > 128 && !cfg.allow_large) {
            throw ResourceCapError("asym-lambda-sweep d exceeds the default cap, pass allow_large",
                                   128);
        }
    }
    fs::create_directories(cfg.out_dir);
    RunRecord rec = make_record(cfg);
    json cells_files = json::array();
    json cells_stats = json::array();
    std::vector<PlotSeries> plot;

    for (int d : cfg.d) {
        for (int m : cfg.m) {
            TrainingSet ds = cell_dataset(cfg, d, m);
            for (double g : cfg.gamma) {
                std::string tag =
                    "d" + std::to_string(d) + "_m" + std::to_string(m) + "_g" + num_tag(g);
                std::vector<std::string> paths(cfg.seeds.size());
                std::vector<double> mins(cfg.seeds.size());
                std::vector<double> m1dev(cfg.seeds.size(), 0.0);
                PlotSeries curve{tag, {}, false};
                std::mutex plot_mutex;
                parallel_for(static_cast<int>(cfg.seeds.size()), cfg.threads, [&](int si) {
                    Matrix u = cell_direction(d, cfg.seeds[si]);
                    Matrix m0 =
                        g * (u * build_pauli_like_measurement(d) * u.adjoint());
                    AsymOptions opt;
                    opt.step = cfg.asym_step / (g * g);
                    opt.t_end = cfg.asym_t_end / (g * g);
                    opt.log_every = cfg.asym_log_every;
                    opt.spectrum_check_every = cfg.asym_log_every;
                    AsymTrajectory traj = integrate_asym_flow(m0, ds, opt);
                    auto series = lambda_min_series(traj, ds);
                    std::string name = cfg.kind + "_" + tag + "_seed" +
                                       std::to_string(cfg.seeds[si]) + ".csv";
                    CsvWriter w((fs::path(cfg.out_dir) / name).string());
                    w.header({"time", "tau", "lambda_min", "lambda_norm", "loss",
                              "residual_first"});
                    double lo = std::numeric_limits<double>::infinity();
                    double dev = 0.0;
                    for (std::size_t k = 0; k < series.size(); ++k) {
                        auto [t, lam] = series[k];
                        double r0 = traj.states[k].residuals(0);
                        w.row({t, g * g * t, lam, lam / (g * g), asym_loss(traj.states[k]), r0});
                        lo = std::min(lo, lam);
                        if (m == 1) {
                            double yh = ds.labels(0) - r0;
                            dev = std::max(dev, std::abs(lam - 2.0 * (g * g - yh * yh)));
                        }
                        if (si == 0) {
                            std::lock_guard<std::mutex> lock(plot_mutex);
                            curve.points.emplace_back(g * g * t, lam / (g * g));
                        }
                    }
                    paths[si] = name;
                    mins[si] = lo;
                    m1dev[si] = dev;
                });
                json stats;
                stats["d"] = d;
                stats["m"] = m;
                stats["gamma"] = g;
                stats["median_min_lambda"] = median_of(mins);
                stats["median_min_lambda_norm"] = median_of(mins) / (g * g);
                if (m == 1) {
                    stats["m1_closed_form_max_dev"] =
                        *std::max_element(m1dev.begin(), m1dev.end());
                }
                cells_stats.push_back(stats);
                json cf;
                cf["d"] = d;
                cf["m"] = m;
                cf["gamma"] = g;
                cf["seed_csvs"] = paths;
                cells_files.push_back(cf);
                plot.push_back(std::move(curve));
            }
        }
    }
    rec.files["cells"] = cells_files;
    rec.aggregates["cells"] = cells_stats;
    write_svg_chart((fs::path(cfg.out_dir) / "lambda_sweep.svg").string(),
                    {"normalized lambda_min along the flow", "tau = gamma^2 t",
                     "lambda_min / gamma^2", false, false},
                    plot);
    finish_record(rec, cfg, start);
    return rec;
}

RunRecord run_kernel_drift(const ExperimentConfig& cfg) {
    auto start = std::chrono::steady_clock::now();
    for (int d : cfg.d) {
        if (d > 128 && !cfg.allow_large) {
            throw ResourceCapError("kernel-drift d exceeds the default cap, pass allow_large",
                                   128);
        }
    }
    fs::create_directories(cfg.out_dir);
    RunRecord rec = make_record(cfg);
    json cells_files = json::array();
    json cells_stats = json::array();
    std::vector<PlotSeries> plot;
    std::vector<std::vector<double>> indep_rows;

    for (int d : cfg.d) {
        for (int m : cfg.m) {
            TrainingSet ds = cell_dataset(cfg, d, m);

            // γ-independence of K_asym(0)/γ² at a shared direction
            for (std::uint64_t seed : cfg.seeds) {
                Matrix u = cell_direction(d, seed);
                Matrix base = u * build_pauli_like_measurement(d) * u.adjoint();
                for (std::size_t gi = 0; gi + 1 < cfg.gamma.size(); ++gi) {
                    double ga = cfg.gamma[gi], gb = cfg.gamma[gi + 1];
                    RealMatrix ka = asym_kernel_scaled(ga * base, ds) / (ga * ga);
                    RealMatrix kb = asym_kernel_scaled(gb * base, ds) / (gb * gb);
                    indep_rows.push_back({static_cast<double>(d), static_cast<double>(m),
                                          static_cast<double>(seed), ga, gb,
                                          (ka - kb).cwiseAbs().maxCoeff()});
                }
            }

            for (double g : cfg.gamma) {
                std::string tag =
                    "d" + std::to_string(d) + "_m" + std::to_string(m) + "_g" + num_tag(g);
                std::vector<std::string> paths(cfg.seeds.size());
                std::vector<double> max_drifts(cfg.seeds.size());
                PlotSeries curve{tag, {}, false};
                std::mutex plot_mutex;
                parallel_for(static_cast<int>(cfg.seeds.size()), cfg.threads, [&](int si) {
                    Matrix u = cell_direction(d, cfg.seeds[si]);
                    Matrix m0 = g * (u * build_pauli_like_measurement(d) * u.adjoint());
                    AsymOptions opt;
                    opt.step = cfg.asym_step / (g * g);
                    opt.t_end = cfg.asym_t_end / (g * g);
                    opt.log_every = cfg.asym_log_every;
                    opt.spectrum_check_every = cfg.asym_log_every;
                    AsymTrajectory traj = integrate_asym_flow(m0, ds, opt);
                    RealMatrix k0 = asym_kernel_scaled(traj.states.front().measurement, ds);
                    double k0n = k0.norm();
                    std::string name = cfg.kind + "_" + tag + "_seed" +
                                       std::to_string(cfg.seeds[si]) + ".csv";
                    CsvWriter w((fs::path(cfg.out_dir) / name).string());
                    w.header({"time", "tau", "drift", "control_drift", "loss"});
                    double hi = 0.0;
                    for (const AsymState& st : traj.states) {
                        RealMatrix k = asym_kernel_scaled(st.measurement, ds);
                        double drift = (k - k0).norm() / k0n;
                        hi = std::max(hi, drift);
                        // a fixed-kernel regression control never moves
                        w.row({st.time, g * g * st.time, drift, 0.0, asym_loss(st)});
                        if (si == 0) {
                            std::lock_guard<std::mutex> lock(plot_mutex);
                            curve.points.emplace_back(g * g * st.time, drift);
                        }
                    }
                    paths[si] = name;
                    max_drifts[si] = hi;
                });
                json stats;
                stats["d"] = d;
                stats["m"] = m;
                stats["gamma"] = g;
                stats["mean_max_drift"] = vec_mean(max_drifts);
                stats["min_max_drift"] = *std::min_element(max_drifts.begin(), max_drifts.end());
                cells_stats.push_back(stats);
                json cf;
                cf["d"] = d;
                cf["m"] = m;
                cf["gamma"] = g;
                cf["seed_csvs"] = paths;
                cells_files.push_back(cf);
                plot.push_back(std::move(curve));
            }
        }
    }

    CsvWriter iw((fs::path(cfg.out_dir) / "gamma_independence.csv").string());
    iw.header({"d", "m", "seed", "gamma_a", "gamma_b", "max_entry_dev"});
    double worst = 0.0;
    for (const auto& r : indep_rows) {
        iw.row(r);
        worst = std::max(worst, r.back());
    }
    rec.files["cells"] = cells_files;
    rec.files["gamma_independence_csv"] = "gamma_independence.csv";
    rec.aggregates["cells"] = cells_stats;
    rec.aggregates["gamma_independence_max_dev"] = worst;
    write_svg_chart((fs::path(cfg.out_dir) / "kernel_drift.svg").string(),
                    {"relative change of K_asym along the flow", "tau = gamma^2 t",
                     "|K(t)-K(0)|_F / |K(0)|_F", false, false},
                    plot);
    finish_record(rec, cfg, start);
    return rec;
}

RunRecord run_y_concentration(const ExperimentConfig& cfg) {
    auto start = std::chrono::steady_clock::now();
    const int d = cfg.d.front();
    if (d > 16 && !cfg.allow_large) {
        throw ResourceCapError("y-concentration d exceeds the default cap, pass allow_large", 16);
    }
    const int m = cfg.m.front();
    const double g = cfg.gamma.front();
    fs::create_directories(cfg.out_dir);
    RunRecord rec = make_record(cfg);

    Matrix ystar = haar_second_moment(d);
    TrainingSet ds = cell_dataset(cfg, d, m);

    struct Row {
        double p, seed, y0_dev, y_drift, theta_disp_inf;
    };
    const int np = static_cast<int>(cfg.p.size());
    const int ns = static_cast<int>(cfg.seeds.size());
    std::vector<Row> rows(static_cast<std::size_t>(np) * ns);
    std::size_t cap = cfg.allow_large ? static_cast<std::size_t>(d) * d : kPairMomentDimSqCap;
    parallel_for(np * ns, cfg.threads, [&](int idx) {
        int pi = idx / ns, si = idx % ns;
        int p = cfg.p[pi];
        PeriodicAnsatz ansatz = cell_ansatz(d, p, cfg.seeds[si]);
        Matrix y0 = second_moment(ansatz, RealVector::Zero(p), cap);
        double dev0 = op_norm(y0 - ystar);

        Measurement meas{build_pauli_like_measurement(d), g};
        TrainConfig tc;
        tc.learning_rate = cfg.learning_rate_scale / p;
        tc.max_iters = cfg.max_iters;
        tc.log_every = std::max(cfg.max_iters, 1);
        tc.gamma = g;
        Trajectory traj = train_gd(ansatz, ds, meas, tc);
        Matrix yt = second_moment(ansatz, traj.theta_final, cap);
        rows[idx] = {static_cast<double>(p), static_cast<double>(cfg.seeds[si]), dev0,
                     op_norm(yt - y0),
                     traj.theta_final.size() ? traj.theta_final.cwiseAbs().maxCoeff() : 0.0};
    });

    CsvWriter w((fs::path(cfg.out_dir) / "concentration.csv").string());
    w.header({"p", "seed", "y0_dev", "y_drift", "theta_disp_inf"});
    for (const Row& r : rows) w.row({r.p, r.seed, r.y0_dev, r.y_drift, r.theta_disp_inf});

    std::vector<double> logp, log_dev, log_disp, med_devs, med_drifts;
    json per_p = json::array();
    for (int pi = 0; pi < np; ++pi) {
        std::vector<double> devs, drifts, disps;
        for (int si = 0; si < ns; ++si) {
            const Row& r = rows[static_cast<std::size_t>(pi) * ns + si];
            devs.push_back(r.y0_dev);
            drifts.push_back(r.y_drift);
            disps.push_back(r.theta_disp_inf);
        }
        double med_dev = median_of(devs), med_drift = median_of(drifts),
               med_disp = median_of(disps);
        per_p.push_back({{"p", cfg.p[pi]},
                         {"median_y0_dev", med_dev},
                         {"median_y_drift", med_drift},
                         {"median_theta_disp_inf", med_disp}});
        logp.push_back(std::log(static_cast<double>(cfg.p[pi])));
        log_dev.push_back(std::log(med_dev));
        log_disp.push_back(std::log(med_disp));
        med_devs.push_back(med_dev);
        med_drifts.push_back(med_drift);
    }
    bool drift_monotone = true;
    for (std::size_t i = 1; i < med_drifts.size(); ++i) {
        if (med_drifts[i] > med_drifts[i - 1]) drift_monotone = false;
    }
    rec.aggregates["per_p"] = per_p;
    rec.aggregates["slope_y0_dev"] = fit_line(logp, log_dev).slope;
    rec.aggregates["slope_theta_disp"] = fit_line(logp, log_disp).slope;
    rec.aggregates["y_drift_monotone_decreasing"] = drift_monotone;
    rec.files["concentration_csv"] = "concentration.csv";

    PlotSeries pts{"median y0 deviation", {}, false};
    for (std::size_t i = 0; i < med_devs.size(); ++i) {
        pts.points.emplace_back(static_cast<double>(cfg.p[i]), med_devs[i]);
    }
    write_svg_chart((fs::path(cfg.out_dir) / "y_concentration.svg").string(),
                    {"second-moment deviation from the Haar limit", "p", "op norm", true, true},
                    {pts});
    finish_record(rec, cfg, start);
    return rec;
}

RunRecord run_minima_sampling(const ExperimentConfig& cfg) {
    auto start = std::chrono::steady_clock::now();
    fs::create_directories(cfg.out_dir);
    RunRecord rec = make_record(cfg);
    json cells_stats = json::array();

    CsvWriter vw((fs::path(cfg.out_dir) / "values.csv").string());
    vw.header({"d", "m", "gamma", "sample", "lambda_min"});
    CsvWriter sw((fs::path(cfg.out_dir) / "summary.csv").string());
    sw.header({"d", "m", "gamma", "q05", "median", "q95", "mean", "threshold", "fraction_above"});

    std::map<std::pair<int, double>, PlotSeries> curves;
    std::uint64_t cell_index = 0;
    for (int d : cfg.d) {
        for (int m : cfg.m) {
            for (double g : cfg.gamma) {
                LambdaStats st =
                    minima_lambda_stats(d, m, g, cfg.num_samples, cfg.epsilon, cfg.seeds.front(),
                                        cell_index * static_cast<std::uint64_t>(cfg.num_samples));
                ++cell_index;
                for (int k = 0; k < st.num_samples; ++k) {
                    vw.row({static_cast<double>(d), static_cast<double>(m), g,
                            static_cast<double>(k), st.values[k]});
                }
                sw.row({static_cast<double>(d), static_cast<double>(m), g, st.q05, st.median,
                        st.q95, st.mean, st.threshold, st.fraction_above});
                cells_stats.push_back({{"d", d},
                                       {"m", m},
                                       {"gamma", g},
                                       {"q05", st.q05},
                                       {"median", st.median},
                                       {"q95", st.q95},
                                       {"mean", st.mean},
                                       {"threshold", st.threshold},
                                       {"fraction_above", st.fraction_above}});
                curves[{m, g}].points.emplace_back(static_cast<double>(d), st.median);
            }
        }
    }
    rec.aggregates["cells"] = cells_stats;
    rec.files["values_csv"] = "values.csv";
    rec.files["summary_csv"] = "summary.csv";

    std::vector<PlotSeries> plot;
    for (auto& [key, series] : curves) {
        series.name = "m" + std::to_string(key.first) + "_g" + num_tag(key.second);
        plot.push_back(series);
    }
    write_svg_chart((fs::path(cfg.out_dir) / "minima_lambda.svg").string(),
                    {"median lambda_min over sampled minima", "d", "lambda_min", true, false},
                    plot);
    finish_record(rec, cfg, start);
    return rec;
}

RunRecord run_experiment(const ExperimentConfig& cfg) {
    if (cfg.kind == "pauli-sublinear") return run_pauli_sublinear(cfg);
    if (cfg.kind == "one-sample") return run_one_sample(cfg);
    if (cfg.kind == "asym-lambda-sweep") return run_asym_lambda_sweep(cfg);
    if (cfg.kind == "scaled-fast") return run_scaled_fast(cfg);
    if (cfg.kind == "kernel-drift") return run_kernel_drift(cfg);
    if (cfg.kind == "y-concentration") return run_y_concentration(cfg);
    if (cfg.kind == "minima-sampling") return run_minima_sampling(cfg);
    throw ConfigError("unknown experiment kind: '" + cfg.kind + "'");
}

// ----------------------------------------------------------------- verify ---

namespace {

bool rel_close(double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

// numeric leaves compared with rel_close, everything else exactly
bool json_match(const json& want, const json& got) {
    if (want.is_number() && got.is_number()) {
        return rel_close(want.get<double>(), got.get<double>());
    }
    if (want.type() != got.type()) return false;
    if (want.is_object()) {
        if (want.size() != got.size()) return false;
        for (const auto& [key, value] : want.items()) {
            if (!got.contains(key) || !json_match(value, got.at(key))) return false;
        }
        return true;
    }
    if (want.is_array()) {
        if (want.size() != got.size()) return false;
        for (std::size_t i = 0; i < want.size(); ++i) {
            if (!json_match(want[i], got[i])) return false;
        }
        return true;
    }
    return want == got;
}

double interp_quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    double pos = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

bool verify_record(const std::string& record_path, std::ostream& out) {
    fs::path dir = fs::path(record_path).parent_path();
    std::ifstream in(record_path);
    if (!in) throw ConfigError("cannot open record: " + record_path);
    json rec;
    try {
        in >> rec;
    } catch (const json::exception& e) {
        throw ConfigError("record is not valid JSON: " + std::string(e.what()));
    }

    bool ok = true;
    auto check = [&](bool cond, const std::string& what) {
        out << (cond ? "  ok   " : "  FAIL ") << what << '\n';
        if (!cond) ok = false;
    };

    ExperimentConfig cfg = ExperimentConfig::from_json(rec.at("config"));
    check(rec.at("config_hash").get<std::string>() == cfg.hash(), "config hash");
    check(rec.at("tool_version").get<std::string>() == kToolVersion, "tool version");
    const json& agg = rec.at("aggregates");
    const json& files = rec.at("files");

    auto load_seeds = [&](const json& cell) {
        std::vector<SeedSeries> seeds;
        for (const auto& name : cell.at("seed_csvs")) {
            seeds.push_back(series_from_csv(read_csv((dir / name.get<std::string>()).string())));
        }
        return seeds;
    };
    auto rates_recompute = [&](const std::vector<SeedSeries>& seeds) {
        for (const SeedSeries& s : seeds) {
            std::vector<double> r = rate_estimate(s.time, s.loss, cfg.rate_window);
            for (std::size_t k = 0; k < r.size(); ++k) {
                if (!rel_close(r[k], s.rate[k])) return false;
            }
        }
        return true;
    };

    if (cfg.kind == "pauli-sublinear" || cfg.kind == "scaled-fast") {
        const json& cells = files.at("cells");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            TrainCell cell;
            cell.d = cells[i].at("d").get<int>();
            cell.m = cells[i].at("m").get<int>();
            cell.p = cells[i].at("p").get<int>();
            cell.gamma = cells[i].at("gamma").get<double>();
            cell.seeds = load_seeds(cells[i]);
            std::string tag = cell_tag(cell);
            check(rates_recompute(cell.seeds), tag + ": rate columns recompute from loss");
            AggTable want;
            json stats = aggregate_training_cell(cfg, cell, &want);
            check(json_match(agg.at("cells").at(i), stats), tag + ": cell aggregates recompute");
            CsvTable got = read_csv((dir / cells[i].at("agg_csv").get<std::string>()).string());
            bool agg_ok = got.columns == want.header && got.rows() == want.rows.size();
            for (std::size_t r = 0; agg_ok && r < want.rows.size(); ++r) {
                for (std::size_t c = 0; c < want.header.size(); ++c) {
                    if (!rel_close(want.rows[r][c], got.data[c][r])) agg_ok = false;
                }
            }
            check(agg_ok, tag + ": aggregate csv recomputes");
        }
    } else if (cfg.kind == "one-sample") {
        CsvTable sc = read_csv((dir / files.at("scatter_csv").get<std::string>()).string());
        const auto& g = sc.col("gamma");
        const auto& yh = sc.col("yhat_final");
        const auto& x = sc.col("x");
        const auto& xn = sc.col("x_norm");
        const auto& rate = sc.col("rate");
        bool cols_ok = true;
        for (std::size_t i = 0; i < sc.rows(); ++i) {
            if (!rel_close(x[i], 2.0 * (g[i] * g[i] - yh[i] * yh[i]))) cols_ok = false;
            if (!rel_close(xn[i], 2.0 * (1.0 - yh[i] * yh[i] / (g[i] * g[i])))) cols_ok = false;
        }
        check(cols_ok, "scatter x columns consistent with yhat");
        LinearFit fit = fit_line(x, rate);
        check(json_match(agg.at("fit"),
                         json{{"slope", fit.slope}, {"intercept", fit.intercept}, {"r2", fit.r2}}),
              "rate fit recomputes from scatter.csv");
        json per_gamma = json::array();
        for (double gv : cfg.gamma) {
            double minr = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < sc.rows(); ++i) {
                if (g[i] == gv) minr = std::min(minr, rate[i]);
            }
            per_gamma.push_back({{"gamma", gv}, {"min_final_rate", minr}});
        }
        check(json_match(agg.at("per_gamma"), per_gamma), "per-gamma minima recompute");
        std::size_t row = 0;
        bool link_ok = true;
        for (const auto& cell : files.at("cells")) {
            std::vector<SeedSeries> seeds = load_seeds(cell);
            if (!rates_recompute(seeds)) link_ok = false;
            for (const SeedSeries& s : seeds) {
                if (row >= sc.rows() || !rel_close(rate[row], s.rate.back())) link_ok = false;
                ++row;
            }
        }
        check(link_ok && row == sc.rows(), "scatter rates match per-seed series");
    } else if (cfg.kind == "asym-lambda-sweep") {
        const json& cells = files.at("cells");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            int d = cells[i].at("d").get<int>();
            int m = cells[i].at("m").get<int>();
            double g = cells[i].at("gamma").get<double>();
            std::string tag = "d" + std::to_string(d) + "_m" + std::to_string(m) + "_g" +
                              num_tag(g);
            std::vector<double> mins, m1dev;
            bool cols_ok = true;
            double y0 = m == 1 ? cell_dataset(cfg, d, 1).labels(0) : 0.0;
            for (const auto& name : cells[i].at("seed_csvs")) {
                CsvTable t = read_csv((dir / name.get<std::string>()).string());
                const auto& time = t.col("time");
                const auto& tau = t.col("tau");
                const auto& lam = t.col("lambda_min");
                const auto& lnorm = t.col("lambda_norm");
                const auto& rfirst = t.col("residual_first");
                double lo = std::numeric_limits<double>::infinity(), dev = 0.0;
                for (std::size_t k = 0; k < t.rows(); ++k) {
                    if (!rel_close(tau[k], g * g * time[k])) cols_ok = false;
                    if (!rel_close(lnorm[k], lam[k] / (g * g))) cols_ok = false;
                    lo = std::min(lo, lam[k]);
                    if (m == 1) {
                        double yhk = y0 - rfirst[k];
                        dev = std::max(dev, std::abs(lam[k] - 2.0 * (g * g - yhk * yhk)));
                    }
                }
                mins.push_back(lo);
                m1dev.push_back(dev);
            }
            check(cols_ok, tag + ": tau and lambda_norm columns consistent");
            json stats;
            stats["d"] = d;
            stats["m"] = m;
            stats["gamma"] = g;
            stats["median_min_lambda"] = median_of(mins);
            stats["median_min_lambda_norm"] = median_of(mins) / (g * g);
            if (m == 1) {
                stats["m1_closed_form_max_dev"] = *std::max_element(m1dev.begin(), m1dev.end());
            }
            check(json_match(agg.at("cells").at(i), stats), tag + ": aggregates recompute");
        }
    } else if (cfg.kind == "kernel-drift") {
        const json& cells = files.at("cells");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            int d = cells[i].at("d").get<int>();
            int m = cells[i].at("m").get<int>();
            double g = cells[i].at("gamma").get<double>();
            std::string tag = "d" + std::to_string(d) + "_m" + std::to_string(m) + "_g" +
                              num_tag(g);
            std::vector<double> max_drifts;
            for (const auto& name : cells[i].at("seed_csvs")) {
                CsvTable t = read_csv((dir / name.get<std::string>()).string());
                const auto& drift = t.col("drift");
                max_drifts.push_back(*std::max_element(drift.begin(), drift.end()));
            }
            json stats;
            stats["d"] = d;
            stats["m"] = m;
            stats["gamma"] = g;
            stats["mean_max_drift"] = vec_mean(max_drifts);
            stats["min_max_drift"] = *std::min_element(max_drifts.begin(), max_drifts.end());
            check(json_match(agg.at("cells").at(i), stats), tag + ": aggregates recompute");
        }
        CsvTable t =
            read_csv((dir / files.at("gamma_independence_csv").get<std::string>()).string());
        const auto& dev = t.col("max_entry_dev");
        double worst = dev.empty() ? 0.0 : *std::max_element(dev.begin(), dev.end());
        check(rel_close(agg.at("gamma_independence_max_dev").get<double>(), worst),
              "gamma independence worst case recomputes");
    } else if (cfg.kind == "y-concentration") {
        CsvTable t = read_csv((dir / files.at("concentration_csv").get<std::string>()).string());
        const auto& pcol = t.col("p");
        const auto& devc = t.col("y0_dev");
        const auto& driftc = t.col("y_drift");
        const auto& dispc = t.col("theta_disp_inf");
        std::vector<double> logp, log_dev, log_disp, med_drifts;
        json per_p = json::array();
        for (int p : cfg.p) {
            std::vector<double> devs, drifts, disps;
            for (std::size_t i = 0; i < t.rows(); ++i) {
                if (pcol[i] == static_cast<double>(p)) {
                    devs.push_back(devc[i]);
                    drifts.push_back(driftc[i]);
                    disps.push_back(dispc[i]);
                }
            }
            double md = median_of(devs), mdr = median_of(drifts), mdi = median_of(disps);
            per_p.push_back({{"p", p},
                             {"median_y0_dev", md},
                             {"median_y_drift", mdr},
                             {"median_theta_disp_inf", mdi}});
            logp.push_back(std::log(static_cast<double>(p)));
            log_dev.push_back(std::log(md));
            log_disp.push_back(std::log(mdi));
            med_drifts.push_back(mdr);
        }
        bool monotone = true;
        for (std::size_t i = 1; i < med_drifts.size(); ++i) {
            if (med_drifts[i] > med_drifts[i - 1]) monotone = false;
        }
        check(json_match(agg.at("per_p"), per_p), "per-p medians recompute");
        check(rel_close(agg.at("slope_y0_dev").get<double>(), fit_line(logp, log_dev).slope),
              "y0 deviation slope recomputes");
        check(rel_close(agg.at("slope_theta_disp").get<double>(), fit_line(logp, log_disp).slope),
              "theta displacement slope recomputes");
        check(agg.at("y_drift_monotone_decreasing").get<bool>() == monotone,
              "drift monotonicity flag recomputes");
    } else if (cfg.kind == "minima-sampling") {
        CsvTable vt = read_csv((dir / files.at("values_csv").get<std::string>()).string());
        CsvTable st = read_csv((dir / files.at("summary_csv").get<std::string>()).string());
        const auto& vals = vt.col("lambda_min");
        std::size_t cursor = 0, cell = 0;
        for (int d : cfg.d) {
            for (int m : cfg.m) {
                for (double g : cfg.gamma) {
                    std::vector<double> v(vals.begin() + cursor,
                                          vals.begin() + cursor + cfg.num_samples);
                    cursor += cfg.num_samples;
                    std::sort(v.begin(), v.end());
                    double g2 = g * g;
                    double threshold = (1.0 - cfg.epsilon) * 2.0 * g2 * (1.0 - 1.0 / g2);
                    double sum = 0.0;
                    int above = 0;
                    for (double x : v) {
                        sum += x;
                        if (x >= threshold) ++above;
                    }
                    json stats = {{"d", d},
                                  {"m", m},
                                  {"gamma", g},
                                  {"q05", interp_quantile(v, 0.05)},
                                  {"median", interp_quantile(v, 0.5)},
                                  {"q95", interp_quantile(v, 0.95)},
                                  {"mean", sum / cfg.num_samples},
                                  {"threshold", threshold},
                                  {"fraction_above",
                                   static_cast<double>(above) / cfg.num_samples}};
                    std::string tag = "d" + std::to_string(d) + "_m" + std::to_string(m) + "_g" +
                                      num_tag(g);
                    check(json_match(agg.at("cells").at(cell), stats),
                          tag + ": aggregates recompute");
                    bool row_ok = rel_close(st.col("median")[cell], stats["median"]) &&
                                  rel_close(st.col("q05")[cell], stats["q05"]) &&
                                  rel_close(st.col("q95")[cell], stats["q95"]) &&
                                  rel_close(st.col("fraction_above")[cell],
                                            stats["fraction_above"]);
                    check(row_ok, tag + ": summary csv matches");
                    ++cell;
                }
            }
        }
        check(cursor == vals.size(), "values csv covers every cell exactly");
    } else {
        check(false, "unknown kind in record: " + cfg.kind);
    }

    out << (ok ? "verify: OK" : "verify: MISMATCH") << '\n';
    return ok;
}

// --------------------------------------------------------------- selftest ---

int selftest(std::ostream& out) {
    int failures = 0;
    auto check = [&](bool cond, const std::string& what) {
        out << (cond ? "  ok   " : "  FAIL ") << what << '\n';
        if (!cond) ++failures;
    };

    {
        RngStream rng(7, 0);
        PeriodicAnsatz a = build_periodic_ansatz(4, 3, rng);
        TrainingSet ds = sample_orthogonal_dataset(4, 2, rng, true);
        Measurement meas{build_pauli_like_measurement(4), 1.0};
        RealVector theta = RealVector::Constant(3, 0.2);
        RealVector g = grad(a, theta, ds, meas);
        double eps = 1e-5;
        bool fd_ok = true;
        for (int l = 0; l < 3; ++l) {
            RealVector tp = theta, tm = theta;
            tp(l) += eps;
            tm(l) -= eps;
            double fd = (loss(a, tp, ds, meas) - loss(a, tm, ds, meas)) / (2 * eps);
            if (std::abs(fd - g(l)) > 1e-6) fd_ok = false;
        }
        check(fd_ok, "gradient matches finite differences");
    }
    {
        RngStream rng(11, 0);
        PeriodicAnsatz a = build_periodic_ansatz(4, 6, rng);
        TrainingSet ds = sample_orthogonal_dataset(4, 2, rng, true);
        Measurement meas{build_pauli_like_measurement(4), 2.0};
        RealVector theta(6);
        for (int l = 0; l < 6; ++l) theta(l) = 0.1 * (l + 1);
        double z = trace_square_ratio(a.generator);
        RealMatrix full = tangent_kernel(a, theta, ds, meas) / (6.0 * z);
        Matrix m_theta = parameterized_measurement(a, theta, meas);
        RealMatrix split = asym_kernel(m_theta, ds, meas.gamma) +
                           pert_kernel(a, theta, ds, meas.gamma, kPairMomentDimSqCap);
        check((full - split).cwiseAbs().maxCoeff() < 1e-9, "kernel splits into asym + pert");
    }
    {
        RngStream rng(13, 0);
        Matrix m0 = init_asym_measurement(8, 1.5, rng);
        TrainingSet ds = sample_orthogonal_dataset(8, 2, rng, true);
        Matrix rhs = asym_flow_rhs(m0, ds);
        Matrix want = Matrix::Zero(8, 8);
        for (int j = 0; j < 2; ++j) {
            const Vector& v = ds.states[j];
            double rj = ds.labels(j) - predict(m0, v, 1.0);
            Matrix rho = v * v.adjoint();
            Matrix inner = m0 * rho - rho * m0;
            want += rj * (m0 * inner - inner * m0);
        }
        check((rhs - want).cwiseAbs().maxCoeff() < 1e-10, "flow rhs matches double commutator");

        AsymOptions opt;
        opt.step = 1e-3;
        opt.t_end = 0.2;
        AsymTrajectory traj = integrate_asym_flow(m0, ds, opt);
        check(traj.spectrum_drift_max < 1e-8, "flow conserves the spectrum");
        check(asym_loss(traj.states.back()) < asym_loss(traj.states.front()),
              "flow decreases the loss");
    }
    {
        RngStream rng(17, 0);
        GlobalMinimumSample s = sample_global_minimum(32, 4, 2.0, rng);
        bool diag_ok = true;
        for (int i = 0; i < 4; ++i) {
            if (std::abs(s.k_asym(i, i) - 6.0) > 1e-10) diag_ok = false;
        }
        check(diag_ok, "minima kernel diagonal matches 2 gamma^2 (1 - 1/gamma^2)");
    }
    {
        std::vector<double> t, l;
        for (int k = 0; k <= 100; ++k) {
            t.push_back(0.01 * k);
            l.push_back(std::exp(-3.0 * 0.01 * k));
        }
        std::vector<double> r = rate_estimate(t, l, 10);
        bool rate_ok = true;
        for (double x : r) {
            if (std::abs(x - 3.0) > 1e-9) rate_ok = false;
        }
        check(rate_ok, "rate estimator recovers an exponential decay");

        LinearFit f = fit_line({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0});
        check(std::abs(f.slope - 2.0) < 1e-12 && std::abs(f.intercept - 1.0) < 1e-12 &&
                  std::abs(f.r2 - 1.0) < 1e-12,
              "linear fit is exact on a line");
    }
    {
        fs::path tmp = fs::temp_directory_path() / "qnndyn_selftest.csv";
        {
            CsvWriter w(tmp.string());
            w.header({"a", "b"});
            w.row({1.0 / 3.0, -2.5e-17});
            w.row({6.02214076e23, 0.0});
        }
        CsvTable t = read_csv(tmp.string());
        bool csv_ok = t.columns == std::vector<std::string>{"a", "b"} && t.rows() == 2 &&
                      t.col("a")[0] == 1.0 / 3.0 && t.col("b")[0] == -2.5e-17 &&
                      t.col("a")[1] == 6.02214076e23;
        fs::remove(tmp);
        check(csv_ok, "csv writer round-trips doubles exactly");
    }
    {
        json j = {{"kind", "pauli-sublinear"}, {"d", 4}, {"p", 2}, {"seeds", {1, 2}}};
        ExperimentConfig a = ExperimentConfig::from_json(j);
        ExperimentConfig b = ExperimentConfig::from_json(j);
        bool hash_ok = a.hash() == b.hash();
        b.out_dir = "elsewhere";
        hash_ok = hash_ok && a.hash() == b.hash();
        json bad = j;
        bad["w"] = 1;
        bool rejected = false;
        try {
            ExperimentConfig::from_json(bad);
        } catch (const ConfigError&) {
            rejected = true;
        }
        check(hash_ok && rejected, "config hashing and unknown-key rejection");
    }

    out << (failures == 0 ? "selftest: OK" : "selftest: FAILED") << '\n';
    return failures;
}

}  // namespace qnndyn
