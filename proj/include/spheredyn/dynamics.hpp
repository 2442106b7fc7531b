// dynamics.hpp - the four integrators: exact discrete transformer, single-step
// Euler-Maruyama with regularized ambient coefficients, pure-noise sphere
// diffusion, and coupled coarse/fine refinement pairs.
#pragma once

#include <cstdint>
#include <vector>

#include "spheredyn/attention.hpp"
#include "spheredyn/field.hpp"
#include "spheredyn/kernel.hpp"
#include "spheredyn/mlp.hpp"
#include "spheredyn/sphere.hpp"

namespace spheredyn {

enum class Scheme { transformer_discrete, euler_ambient, euler_projected, pure_noise };

Scheme scheme_from_name(const std::string& name);
std::string scheme_name(Scheme s);

// Cutoff rho and truncation map T of the regularized ambient scheme.
// rho = 1 on |x| <= 3/2, 0 on |x| >= 2; T = id on B(0,2), 3x/|x| outside
// B(0,3); quintic (C^2, monotone) radial interpolation in between.
struct Regularization {
    static double rho(double r);
    static double truncate_radius(double r);
    static Vec truncate(const Vec& x);
    static Mat truncate_rows(const Mat& points);
};

struct ModelConfig {
    int depth = 1;          // L
    double horizon = 1.0;   // T, so dt = T / L
    int n_tokens = 1;
    AttentionParams attention;
    KernelSpec kernel;
    int width = 0;          // m; finite schemes only
    Scheme scheme = Scheme::transformer_discrete;
    bool ito_correction = true;

    double dt() const { return horizon / depth; }
    // Warns (returns a message) when dt (|scale| ||V||_op + k(1)(d-1)/2) > 0.1.
    std::string step_size_warning() const;
};

struct TrajectoryRecord {
    std::vector<Mat> states;
    std::vector<int> recorded_layers;
    Scheme scheme_tag = Scheme::transformer_discrete;
    std::uint64_t master_seed = 0;
    std::uint64_t trial = 0;

    const Mat& final_state() const { return states.back(); }
};

// One two-half-step transformer layer: Y = LN(X + dt Attn), X+ = LN(Y +
// sqrt(dt) G^m(Y)).
SphericalCloud transformer_step(const SphericalCloud& cloud,
                                const AttentionParams& params,
                                const MlpParams& mlp, double dt);

// L transformer layers with a fresh MLP per layer drawn from
// derive_stream(master, trial, layer, role::mlp).
TrajectoryRecord run_transformer(const ModelConfig& config, const SphericalCloud& init,
                                 std::uint64_t master_seed, std::uint64_t trial,
                                 int record_stride);

enum class EulerMode { ambient, projected };

// X+ = X + dt b^rho + sqrt(dt) rho(X) P_X G(X), with
// b^rho = rho P_X Attn(T(cloud), T(x)) - rho^2 K_amb(x,x)(d-1)/2 x.
// field_values must hold the field draw at exactly the current positions.
// Ambient mode applies the formula verbatim and throws OutOfDomain when a row
// leaves the annulus [1/2, 3]; projected mode renormalizes every row.
SphericalCloud euler_step(const SphericalCloud& cloud, const AttentionParams& params,
                          const KernelSpec& spec, const Mat& field_values, double dt,
                          EulerMode mode, bool ito_correction = true);

// Single-step scheme driven by exact limiting-field draws at the current
// positions, one joint draw per layer.
TrajectoryRecord run_euler(const ModelConfig& config, const SphericalCloud& init,
                           std::uint64_t master_seed, std::uint64_t trial,
                           int record_stride, EulerMode mode);

// Pure-noise sphere diffusion: projected Euler with attention disabled,
// joint field draw at the current positions each layer.
TrajectoryRecord run_pure_noise(const KernelSpec& spec, const SphericalCloud& init,
                                int depth, double horizon, std::uint64_t master_seed,
                                std::uint64_t trial, int record_stride);

// Transformer chain and Euler (ambient) chain advanced together under the
// layerwise Gaussian-OT coupling built on the union of their positions.
// error_series[l] = (1/N) sum_i |X_l^i - Xhat_l^i|^2, l = 0..L.
struct CoupledPairResult {
    TrajectoryRecord transformer;
    TrajectoryRecord euler;
    std::vector<double> error_series;
};
CoupledPairResult run_coupled_pair(const ModelConfig& config, const SphericalCloud& init,
                                   std::uint64_t master_seed, std::uint64_t trial,
                                   int record_stride);

// Coarse (step dt) vs fine (step dt/2) ambient Euler chains driven by
// consistent fields: per coarse layer two independent draws a, b are made on
// the unions of the coarse positions with the fine positions before each
// half-step; the fine chain consumes a then b, the coarse chain consumes
// (a+b)/sqrt(2) at its own points. Returns the sup-over-layers mean squared
// gap per refinement level; levels compare depth L 2^{j} with L 2^{j+1}.
std::vector<double> run_refinement_ladder(const ModelConfig& config, int k_levels,
                                          const SphericalCloud& init,
                                          std::uint64_t master_seed, std::uint64_t trial);

}  // namespace spheredyn
