// observables.hpp - interaction energy, exact W2 between empirical measures,
// cosine statistics, Lyapunov-exponent estimation, and decay-rate fits.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spheredyn/kernel.hpp"
#include "spheredyn/sphere.hpp"

namespace spheredyn {

struct EnergyTrace {
    double beta = 1.0;
    std::vector<double> times;
    std::vector<double> values;
    std::uint64_t trial_id = 0;
};

// E_beta(mu) = (1/(2N^2)) sum_{i,j} (e^beta - e^{beta <x_i, x_j>}), diagonal
// included (contributes 0), so E_beta(delta_x) = 0 exactly.
double interaction_energy(const SphericalCloud& cloud, double beta);

struct W2Result {
    double distance = 0.0;
    std::vector<int> assignment;  // index into the replicated larger cloud
    std::string method;           // "hungarian_exact" or "replicated_exact"
};

// Exact W2 between uniform empirical measures; requires one size to divide
// the other (the smaller cloud's atoms are replicated), larger size <= 4096.
W2Result w2_empirical(const SphericalCloud& a, const SphericalCloud& b);

struct CosineStats {
    double mean = 0.0;
    double median = 0.0;
    double min = 0.0;
};

CosineStats cosine_stats(const SphericalCloud& cloud);

struct LyapunovEstimate {
    double lambda_hat = 0.0;
    double stderr_ = 0.0;
    int trials_used = 0;
    int intervals = 0;
};

// One Benettin trial: accumulated log growth over the horizon plus the
// number of renormalization intervals used.
struct LyapunovTrial {
    double lambda = 0.0;
    int intervals = 0;
};
LyapunovTrial lyapunov_single_trial(const KernelSpec& spec, double horizon, int depth,
                                    double delta0, std::uint64_t master_seed,
                                    std::uint64_t trial);

// Two-particle Benettin estimate under the pure-noise dynamics: both
// particles see the same field draws (joint 2-point sampling); the gap is
// renormalized back to delta0 whenever it leaves [1e-9, 1e-1], accumulating
// log growth factors. WindowCollapse if fewer than 10 usable intervals.
// Aggregates lyapunov_single_trial over trials 0..n_trials-1.
LyapunovEstimate lyapunov_estimate(const KernelSpec& spec, double horizon, int depth,
                                   int n_trials, double delta0,
                                   std::uint64_t master_seed);

// Deterministic aggregation of per-trial results (shared by the serial and
// trial-parallel paths).
LyapunovEstimate aggregate_lyapunov(const std::vector<LyapunovTrial>& trials);

struct DecayFit {
    double rate = 0.0;
    double r_squared = 0.0;
    int points_used = 0;
};

// Least-squares slope of log(values) vs times over [window_lo, window_hi]
// (inclusive in time). NonPositiveEnergy if a value in the window is <= 0.
DecayFit decay_rate_fit(const std::vector<double>& times,
                        const std::vector<double>& values, double window_lo,
                        double window_hi);

}  // namespace spheredyn
