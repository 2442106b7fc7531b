// kernel.hpp - the zonal NNGP kernel of a random one-hidden-layer MLP, its
// ambient extension, Gegenbauer expansion, and the synchronization constants
// lambda_1, lambda_bar, lambda_bar_prime derived from it.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "spheredyn/errors.hpp"

namespace spheredyn {

enum class Activation { relu, tanh_fn, sigmoid, silu, linear, zero, custom };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

// Activation + bias standard deviations + ambient dimension. The scalar map
// registered here is the single source of truth shared by the kernel and the
// finite-width network.
struct KernelSpec {
    Activation act = Activation::relu;
    double sigma_u = 0.0;  // input-bias std
    double sigma_w = 0.0;  // output-bias std
    int dim = 2;

    // Only consulted for Activation::custom.
    std::function<double(double)> custom_fn;
    std::function<double(double)> custom_deriv;  // may be empty
    double custom_lipschitz = 1.0;
    std::vector<double> custom_breakpoints;  // kink locations, if any

    double apply(double y) const;
    double apply_deriv(double y) const;  // throws MissingDerivative for custom w/o one
    bool has_deriv() const;

    static KernelSpec make(const std::string& act_name, double sigma_u,
                           double sigma_w, int dim);
};

// kappa(t) = E[act(Z(x)) act(Z(y))] + sigma_w^2 for <x,y> = t on the sphere.
// ReLU uses the order-1 arc-cosine closed form; linear and zero are analytic;
// the rest go through tensorized Gauss-Hermite quadrature (order 64).
double kappa(const KernelSpec& spec, double t);

// Ambient-space kernel: E[act(V1) act(V2)] + sigma_w^2 with (V1,V2) centered
// Gaussian, covariance [[|x|^2/d+su^2, <x,y>/d+su^2], [., |y|^2/d+su^2]].
// Requires |x|, |y| <= 3.
double kappa_ambient(const KernelSpec& spec, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& y);

// kappa'(1) = E[act'(X/sqrt(d) + sigma_u b)^2] / d.
double kappa_prime_one(const KernelSpec& spec);

// Numerical-integration route for kappa(1) and kappa'(1): composite
// Gauss-Legendre split at the activation's kinks. Independent of the closed
// forms; used for the build-time cross-checks.
double kappa_one_quadrature(const KernelSpec& spec);
double kappa_prime_one_quadrature(const KernelSpec& spec);

struct KernelValues {
    double kappa_one = 0.0;
    double kappa_prime_one = 0.0;
    double lambda_one = 0.0;   // (d-3)/2 k'(1) - (d-1)/2 k(1)
    double lambda_bar = 0.0;   // (d-1) k'(1) - (d-3) k(1)
};

// Computes the four values; for ReLU additionally cross-checks against the
// closed forms lambda_1 = -1/(2d) - (su^2+2sw^2)(d-1)/4 and
// lambda_bar = 1/d - (su^2+2sw^2)(d-3)/2 at 1e-10, throwing on disagreement.
KernelValues lyapunov_constants(const KernelSpec& spec);

// Normalized Gegenbauer polynomial, P_{n,d}(1) = 1. d = 2 is the Chebyshev
// case.
double gegenbauer_polynomial(int n, int d, double u);

struct GegenbauerExpansion {
    int order = 0;                     // n_max
    std::vector<double> coefficients;  // c_0 .. c_{n_max}
    std::vector<double> dims;          // N_{n,d}
};

// Dimension of the degree-n spherical-harmonic space in ambient dimension d.
double harmonic_dimension(int n, int d);

// c_n such that kappa(u) = sum c_n P_{n,d}(u), by Gauss-Jacobi quadrature with
// weight (1-u^2)^{(d-3)/2} on 2*n_max+32 nodes. Throws QuadratureUnstable if
// the quadrature norm of a P_{n,d} drifts from its analytic value by more
// than 1e-6 relative.
GegenbauerExpansion gegenbauer_expand(const KernelSpec& spec, int n_max);

struct DissipationRate {
    double beta = 0.0;
    double lambda_bar_prime = 0.0;  // -min F
    double minimizer_u = 0.0;
    double boundary_value = 0.0;    // lim_{u->1} F(u) = -lambda_bar
};

// F(u) = beta e^{beta u} G(u) / (e^beta - e^{beta u}) minimized over a
// 16384-point Chebyshev grid on [-1, 1-1e-6] (refined 4x near the minimizer)
// together with the analytic boundary value. Requires lambda_bar < 0
// (NotDissipative otherwise); NonPositiveF if F <= 0 anywhere on the grid.
DissipationRate dissipation_rate(const KernelSpec& spec, double beta);

// detail: the G of the dissipation functional, exposed for tests.
double dissipation_g(const KernelSpec& spec, double beta, double u);

}  // namespace spheredyn
