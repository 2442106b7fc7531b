// harness.hpp - config-driven experiment drivers: deterministic seed
// derivation, trial-parallel execution with trial-ordered reduction, CSV and
// JSON sidecar emission.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "spheredyn/dynamics.hpp"
#include "spheredyn/kernel.hpp"
#include "spheredyn/observables.hpp"

#include <nlohmann/json_fwd.hpp>

namespace spheredyn {

struct KernelGridEntry {
    std::string activation;
    int dim = 2;
    double sigma_u = 0.0;
    double sigma_w = 0.0;
};

// One JSON document, versioned schema, unknown keys are a hard error.
struct ExperimentConfig {
    std::string experiment;
    int trials = 1;
    std::uint64_t master_seed = 0;
    int record_stride = 0;  // 0 = record only first/last layer
    std::string output_path = ".";

    bool has_model = false;
    std::string scheme = "transformer_discrete";
    int depth = 1;
    double horizon = 1.0;
    int dim = 2;
    int n_tokens = 1;
    int width = 0;
    std::string activation = "relu";
    double sigma_u = 0.0;
    double sigma_w = 0.0;
    double attention_scale = 0.0;
    double attention_beta = 1.0;
    bool ito_correction = true;

    std::vector<int> m_list;
    std::vector<int> l_list;
    std::vector<int> n_list;
    int n_ref = 0;
    double beta = 1.0;
    double delta0 = 1e-4;
    std::optional<std::pair<double, double>> fit_window;
    std::vector<KernelGridEntry> kernel_list;

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    nlohmann::json to_json() const;
    std::string canonical_text() const;
    std::string config_hash() const;  // 16 hex digits, FNV-1a of canonical text

    ModelConfig to_model() const;  // throws ConfigError when no model block
    KernelSpec to_kernel() const;
};

std::string fmt_real(double v);  // "%.17g", round-trip exact

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    void write(std::ostream& os, bool with_timestamp) const;
    void write_file(const std::string& path, bool with_timestamp) const;
};

struct RateFit {
    std::vector<double> x_values;
    std::vector<double> y_values;  // log-log pairs
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
};

// Least squares on (log x, log y); needs >= 3 points.
RateFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

// Runs fn(0..n_trials-1) on `workers` threads; results land in trial order so
// output is identical for any worker count. The first exception, if any, is
// rethrown after all workers finish.
template <typename T, typename Fn>
std::vector<T> map_trials(int n_trials, int workers, Fn&& fn) {
    std::vector<T> results(n_trials);
    if (n_trials == 0) return results;
    workers = std::max(1, std::min(workers, n_trials));
    if (workers == 1) {
        for (int t = 0; t < n_trials; ++t) results[t] = fn(t);
        return results;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int t = next.fetch_add(1); t < n_trials; t = next.fetch_add(1)) {
                    results[t] = fn(t);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

// ---- experiment drivers ------------------------------------------------

struct KernelTableResult {
    struct Row {
        std::string activation;
        int dim;
        double sigma;
        KernelValues values;
    };
    std::vector<Row> rows;
    CsvTable csv;
};
KernelTableResult run_kernel_table(const ExperimentConfig& config);

struct SimulateResult {
    // one entry per trial, aligned with recorded layers
    std::vector<std::vector<double>> energies;
    std::vector<std::vector<CosineStats>> cosines;
    std::vector<double> times;
    std::vector<int> layers;
    CsvTable csv;
};
SimulateResult run_simulate(const ExperimentConfig& config, int workers);

struct DeepRateResult {
    std::vector<int> l_grid;
    std::vector<std::vector<double>> gaps;  // per L, per completed trial
    std::vector<double> mean_gap;
    RateFit fit;
    int aborted_trials = 0;
    CsvTable csv;
};
DeepRateResult run_deep_rate(const ExperimentConfig& config, int workers);

struct WideRateResult {
    std::vector<int> m_grid;
    std::vector<double> static_gap;      // mean E|G^m - G|^2 per m
    RateFit static_fit;
    std::vector<double> trajectory_gap;  // mean sup-layer squared gap per m
    CsvTable csv;
};
WideRateResult run_wide_rate(const ExperimentConfig& config, int workers);

struct ChaosResult {
    std::vector<int> n_grid;
    std::vector<std::vector<double>> max_w2_sq;  // per N, per trial
    std::vector<double> mean_w2_sq;
    std::vector<double> median_w2_sq;
    RateFit fit;
    CsvTable csv;
};
ChaosResult run_chaos(const ExperimentConfig& config, int workers);

struct SyncResult {
    std::vector<double> times;
    std::vector<double> mean_energy;
    std::vector<CosineStats> mean_cosine;
    DecayFit decay;
    double lambda_bar = 0.0;
    bool dissipative = false;
    double lambda_bar_prime = 0.0;  // valid when dissipative
    double boundary_value = 0.0;    // valid when dissipative
    CsvTable csv;
};
SyncResult run_sync(const ExperimentConfig& config, int workers);

struct LyapunovResult {
    struct Row {
        KernelGridEntry entry;
        LyapunovEstimate estimate;
        double lambda_one_analytic;
        double rel_error;
    };
    std::vector<Row> rows;
    CsvTable csv;
};
LyapunovResult run_lyapunov(const ExperimentConfig& config, int workers);

// Dispatch + file emission (CSV plus JSON sidecar). Returns the CSV path.
std::string run_experiment_to_files(const ExperimentConfig& config, int workers,
                                    bool with_timestamp);

}  // namespace spheredyn
