#include "spheredyn/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <unordered_map>

namespace spheredyn {

namespace {

constexpr double kPi = 3.141592653589793238462643383279503;

double logistic(double y) { return 1.0 / (1.0 + std::exp(-y)); }

struct Quadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Golub-Welsch: nodes/weights from the symmetric tridiagonal recurrence
// matrix. offdiag[k] = sqrt(b_{k+1}) for the monic three-term recurrence,
// mu0 = total weight mass.
Quadrature golub_welsch(const std::vector<double>& offdiag, double mu0) {
    const int n = static_cast<int>(offdiag.size()) + 1;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(n - 1);
    for (int i = 0; i < n - 1; ++i) sub[i] = offdiag[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    Quadrature q;
    q.nodes.resize(n);
    q.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        q.nodes[i] = es.eigenvalues()[i];
        const double v0 = es.eigenvectors()(0, i);
        q.weights[i] = mu0 * v0 * v0;
    }
    return q;
}

// Probabilists' Gauss-Hermite: weight exp(-x^2/2)/sqrt(2 pi), mass 1.
const Quadrature& gauss_hermite(int n) {
    static std::mutex mu;
    static std::unordered_map<int, Quadrature> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<double> off(n - 1);
    for (int k = 1; k < n; ++k) off[k - 1] = std::sqrt(static_cast<double>(k));
    return cache.emplace(n, golub_welsch(off, 1.0)).first->second;
}

// Gauss-Legendre on [-1, 1].
const Quadrature& gauss_legendre(int n) {
    static std::mutex mu;
    static std::unordered_map<int, Quadrature> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<double> off(n - 1);
    for (int k = 1; k < n; ++k) {
        off[k - 1] = std::sqrt(k * k / (4.0 * k * k - 1.0));
    }
    return cache.emplace(n, golub_welsch(off, 2.0)).first->second;
}

// Gauss-Jacobi for the symmetric weight (1-u^2)^a on [-1, 1], a > -1.
Quadrature gauss_jacobi_sym(int n, double a) {
    std::vector<double> off(n - 1);
    for (int k = 1; k < n; ++k) {
        double b;
        if (k == 1) {
            b = 1.0 / (3.0 + 2.0 * a);
        } else {
            b = k * (k + 2.0 * a) / ((2.0 * k + 2.0 * a + 1.0) * (2.0 * k + 2.0 * a - 1.0));
        }
        off[k - 1] = std::sqrt(b);
    }
    const double mu0 =
        std::exp((2.0 * a + 1.0) * std::log(2.0) + 2.0 * std::lgamma(a + 1.0) -
                 std::lgamma(2.0 * a + 2.0));
    return golub_welsch(off, mu0);
}

std::vector<double> activation_breakpoints(const KernelSpec& spec) {
    switch (spec.act) {
        case Activation::relu: return {0.0};
        case Activation::custom: return spec.custom_breakpoints;
        default: return {};
    }
}

// E[f(Z)] for Z ~ N(0, sd^2): composite 32-point Gauss-Legendre over
// [-10 sd, 10 sd], split at the integrand's kinks, panels no wider than sd.
double gaussian_expectation(const std::function<double(double)>& f, double sd,
                            const std::vector<double>& breakpoints) {
    if (!(sd > 1e-150)) return f(0.0);
    const double lo = -10.0 * sd, hi = 10.0 * sd;
    std::vector<double> cuts = {lo};
    for (double b : breakpoints) {
        if (b > lo && b < hi) cuts.push_back(b);
    }
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    const Quadrature& gl = gauss_legendre(32);
    const double inv_norm = 1.0 / (sd * std::sqrt(2.0 * kPi));
    double total = 0.0;
    for (size_t s = 0; s + 1 < cuts.size(); ++s) {
        const double seg_lo = cuts[s], seg_hi = cuts[s + 1];
        const int panels = std::max(1, static_cast<int>(std::ceil((seg_hi - seg_lo) / sd)));
        const double pw = (seg_hi - seg_lo) / panels;
        for (int p = 0; p < panels; ++p) {
            const double a = seg_lo + p * pw;
            const double mid = a + 0.5 * pw, half = 0.5 * pw;
            double acc = 0.0;
            for (size_t i = 0; i < gl.nodes.size(); ++i) {
                const double z = mid + half * gl.nodes[i];
                acc += gl.weights[i] * f(z) * std::exp(-0.5 * z * z / (sd * sd));
            }
            total += acc * half * inv_norm;
        }
    }
    return total;
}

// Linear-growth sanity check for custom activations before quadrature.
void check_custom_growth(const KernelSpec& spec, double max_arg) {
    if (spec.act != Activation::custom) return;
    const double at0 = std::abs(spec.custom_fn(0.0));
    for (double y : {max_arg, -max_arg}) {
        if (std::abs(spec.custom_fn(y)) >
            at0 + spec.custom_lipschitz * std::abs(y) * (1.0 + 1e-9) + 1e-9) {
            throw QuadratureUnstable(
                "custom activation grows faster than its declared Lipschitz constant");
        }
    }
}

// E[act(V1) act(V2)] for a centered Gaussian pair with variances v1, v2 and
// covariance c, by 64-point tensorized Gauss-Hermite. ReLU callers use the
// closed form instead.
double bivariate_expectation(const KernelSpec& spec, double v1, double v2, double c) {
    const double tiny = 1e-300;
    if (v1 <= tiny && v2 <= tiny) {
        const double a0 = spec.apply(0.0);
        return a0 * a0;
    }
    if (v1 <= tiny || v2 <= tiny) {
        const double a0 = spec.apply(0.0);
        const double sd = std::sqrt(std::max(v1, v2));
        return a0 * gaussian_expectation([&](double z) { return spec.apply(z); }, sd,
                                         activation_breakpoints(spec));
    }
    const double l11 = std::sqrt(v1);
    const double l21 = c / l11;
    const double l22 = std::sqrt(std::max(v2 - l21 * l21, 0.0));
    const Quadrature& gh = gauss_hermite(64);
    const int n = static_cast<int>(gh.nodes.size());
    check_custom_growth(spec, gh.nodes[n - 1] * (l11 + std::abs(l21) + l22));
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double xi = gh.nodes[i];
        const double a1 = spec.apply(l11 * xi);
        double inner = 0.0;
        for (int j = 0; j < n; ++j) {
            inner += gh.weights[j] * spec.apply(l21 * xi + l22 * gh.nodes[j]);
        }
        acc += gh.weights[i] * a1 * inner;
    }
    return acc;
}

// Order-1 arc-cosine kernel: E[relu(V1) relu(V2)] for variances v1, v2 and
// covariance c.
double relu_bivariate(double v1, double v2, double c) {
    const double s2 = std::sqrt(v1 * v2);
    if (!(s2 > 1e-300)) return 0.0;
    const double rho = std::clamp(c / s2, -1.0, 1.0);
    const double theta = std::acos(rho);
    return s2 / (2.0 * kPi) * (std::sqrt(std::max(1.0 - rho * rho, 0.0)) +
                               (kPi - theta) * rho);
}

}  // namespace

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh_fn;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "silu") return Activation::silu;
    if (name == "linear") return Activation::linear;
    if (name == "zero") return Activation::zero;
    throw ConfigError("unknown activation: " + name);
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh_fn: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::silu: return "silu";
        case Activation::linear: return "linear";
        case Activation::zero: return "zero";
        case Activation::custom: return "custom";
    }
    return "?";
}

double KernelSpec::apply(double y) const {
    switch (act) {
        case Activation::relu: return y > 0.0 ? y : 0.0;
        case Activation::tanh_fn: return std::tanh(y);
        case Activation::sigmoid: return logistic(y);
        case Activation::silu: return y * logistic(y);
        case Activation::linear: return y;
        case Activation::zero: return 0.0;
        case Activation::custom: return custom_fn(y);
    }
    return 0.0;
}

double KernelSpec::apply_deriv(double y) const {
    switch (act) {
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
        case Activation::tanh_fn: {
            const double t = std::tanh(y);
            return 1.0 - t * t;
        }
        case Activation::sigmoid: {
            const double s = logistic(y);
            return s * (1.0 - s);
        }
        case Activation::silu: {
            const double s = logistic(y);
            return s * (1.0 + y * (1.0 - s));
        }
        case Activation::linear: return 1.0;
        case Activation::zero: return 0.0;
        case Activation::custom:
            if (!custom_deriv) {
                throw MissingDerivative("custom activation has no registered derivative");
            }
            return custom_deriv(y);
    }
    return 0.0;
}

bool KernelSpec::has_deriv() const {
    return act != Activation::custom || static_cast<bool>(custom_deriv);
}

KernelSpec KernelSpec::make(const std::string& act_name, double sigma_u,
                            double sigma_w, int dim) {
    if (dim < 2) throw std::invalid_argument("KernelSpec: d >= 2 required");
    if (sigma_u < 0.0 || sigma_w < 0.0) {
        throw std::invalid_argument("KernelSpec: bias stds must be nonnegative");
    }
    KernelSpec s;
    s.act = activation_from_name(act_name);
    s.sigma_u = sigma_u;
    s.sigma_w = sigma_w;
    s.dim = dim;
    return s;
}

double kappa(const KernelSpec& spec, double t) {
    if (t < -1.0 - 1e-12 || t > 1.0 + 1e-12) {
        throw std::invalid_argument("kappa: t outside [-1, 1]");
    }
    t = std::clamp(t, -1.0, 1.0);
    const double d = spec.dim;
    const double su2 = spec.sigma_u * spec.sigma_u;
    const double sw2 = spec.sigma_w * spec.sigma_w;
    const double var = 1.0 / d + su2;
    const double cov = t / d + su2;
    switch (spec.act) {
        case Activation::relu: return relu_bivariate(var, var, cov) + sw2;
        case Activation::linear: return cov + sw2;
        case Activation::zero: return sw2;
        default: break;
    }
    // Exact reduction of the 3-variable expectation to two Gaussians: the
    // pre-activation pair has the law (aX + cY, aX - cY) with
    // a^2 = (var+cov)/2, c^2 = (var-cov)/2.
    const double a = std::sqrt(std::max((var + cov) * 0.5, 0.0));
    const double c = std::sqrt(std::max((var - cov) * 0.5, 0.0));
    const Quadrature& gh = gauss_hermite(64);
    const int n = static_cast<int>(gh.nodes.size());
    check_custom_growth(spec, gh.nodes[n - 1] * (a + c));
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double ax = a * gh.nodes[i];
        double inner = 0.0;
        for (int j = 0; j < n; ++j) {
            const double cy = c * gh.nodes[j];
            inner += gh.weights[j] * spec.apply(ax + cy) * spec.apply(ax - cy);
        }
        acc += gh.weights[i] * inner;
    }
    return acc + sw2;
}

double kappa_ambient(const KernelSpec& spec, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& y) {
    if (x.norm() > 3.0 + 1e-9 || y.norm() > 3.0 + 1e-9) {
        throw std::invalid_argument("kappa_ambient: points must lie in B(0,3)");
    }
    const double d = spec.dim;
    const double su2 = spec.sigma_u * spec.sigma_u;
    const double sw2 = spec.sigma_w * spec.sigma_w;
    const double v1 = x.squaredNorm() / d + su2;
    const double v2 = y.squaredNorm() / d + su2;
    const double c = x.dot(y) / d + su2;
    switch (spec.act) {
        case Activation::relu: return relu_bivariate(v1, v2, c) + sw2;
        case Activation::linear: return c + sw2;
        case Activation::zero: return sw2;
        default: return bivariate_expectation(spec, v1, v2, c) + sw2;
    }
}

double kappa_prime_one(const KernelSpec& spec) {
    const double d = spec.dim;
    switch (spec.act) {
        case Activation::relu: return 0.5 / d;  // P(Z > 0) = 1/2
        case Activation::linear: return 1.0 / d;
        case Activation::zero: return 0.0;
        default: break;
    }
    if (!spec.has_deriv()) {
        throw MissingDerivative("kappa_prime_one: activation derivative required");
    }
    const double sd = std::sqrt(1.0 / d + spec.sigma_u * spec.sigma_u);
    const double e = gaussian_expectation(
        [&](double z) {
            const double g = spec.apply_deriv(z);
            return g * g;
        },
        sd, activation_breakpoints(spec));
    return e / d;
}

double kappa_one_quadrature(const KernelSpec& spec) {
    const double sd = std::sqrt(1.0 / spec.dim + spec.sigma_u * spec.sigma_u);
    const double e = gaussian_expectation(
        [&](double z) {
            const double g = spec.apply(z);
            return g * g;
        },
        sd, activation_breakpoints(spec));
    return e + spec.sigma_w * spec.sigma_w;
}

double kappa_prime_one_quadrature(const KernelSpec& spec) {
    if (!spec.has_deriv()) {
        throw MissingDerivative("kappa_prime_one_quadrature: derivative required");
    }
    const double sd = std::sqrt(1.0 / spec.dim + spec.sigma_u * spec.sigma_u);
    const double e = gaussian_expectation(
        [&](double z) {
            const double g = spec.apply_deriv(z);
            return g * g;
        },
        sd, activation_breakpoints(spec));
    return e / spec.dim;
}

KernelValues lyapunov_constants(const KernelSpec& spec) {
    KernelValues kv;
    kv.kappa_one = kappa(spec, 1.0);
    kv.kappa_prime_one = kappa_prime_one(spec);
    const double d = spec.dim;
    kv.lambda_one = 0.5 * (d - 3.0) * kv.kappa_prime_one - 0.5 * (d - 1.0) * kv.kappa_one;
    kv.lambda_bar = (d - 1.0) * kv.kappa_prime_one - (d - 3.0) * kv.kappa_one;
    if (spec.act == Activation::relu) {
        const double su2 = spec.sigma_u * spec.sigma_u;
        const double sw2 = spec.sigma_w * spec.sigma_w;
        const double l1_closed = -0.5 / d - (su2 + 2.0 * sw2) * (d - 1.0) / 4.0;
        const double lb_closed = 1.0 / d - (su2 + 2.0 * sw2) * (d - 3.0) / 2.0;
        const double k1_quad = kappa_one_quadrature(spec);
        const double kp_quad = kappa_prime_one_quadrature(spec);
        const double l1_quad = 0.5 * (d - 3.0) * kp_quad - 0.5 * (d - 1.0) * k1_quad;
        const double lb_quad = (d - 1.0) * kp_quad - (d - 3.0) * k1_quad;
        if (std::abs(kv.lambda_one - l1_closed) > 1e-10 ||
            std::abs(kv.lambda_bar - lb_closed) > 1e-10 ||
            std::abs(l1_quad - l1_closed) > 1e-10 ||
            std::abs(lb_quad - lb_closed) > 1e-10) {
            throw Error("lyapunov_constants: ReLU closed forms and quadrature disagree");
        }
    }
    return kv;
}

double gegenbauer_polynomial(int n, int d, double u) {
    if (n < 0 || d < 2) {
        throw std::invalid_argument("gegenbauer_polynomial: need n >= 0, d >= 2");
    }
    if (n == 0) return 1.0;
    if (n == 1) return u;
    double pm1 = 1.0, p = u;
    for (int k = 1; k < n; ++k) {
        const double next = ((2.0 * k + d - 2.0) * u * p - k * pm1) / (k + d - 2.0);
        pm1 = p;
        p = next;
    }
    return p;
}

double harmonic_dimension(int n, int d) {
    auto binom = [](double a, double b) {
        if (b < 0.0 || b > a) return 0.0;
        return std::exp(std::lgamma(a + 1.0) - std::lgamma(b + 1.0) -
                        std::lgamma(a - b + 1.0));
    };
    double v = binom(n + d - 1.0, n);
    if (n >= 2) v -= binom(n + d - 3.0, n - 2.0);
    return v < 1e15 ? std::round(v) : v;
}

namespace {

// Weighted L2 norm of the normalized Gegenbauer P_{n,d} under
// (1-u^2)^{(d-3)/2}, in closed form.
double gegenbauer_norm_sq(int n, int d) {
    if (d == 2) return n == 0 ? kPi : kPi / 2.0;
    const double lam = (d - 2.0) / 2.0;
    return std::exp(std::log(kPi) + (1.0 - 2.0 * lam) * std::log(2.0) +
                    2.0 * std::lgamma(2.0 * lam) + std::lgamma(n + 1.0) -
                    std::log(n + lam) - 2.0 * std::lgamma(lam) -
                    std::lgamma(n + 2.0 * lam));
}

}  // namespace

GegenbauerExpansion gegenbauer_expand(const KernelSpec& spec, int n_max) {
    if (n_max < 0 || n_max > 512) {
        throw std::invalid_argument("gegenbauer_expand: n_max must be in [0, 512]");
    }
    const int d = spec.dim;
    const int m = 2 * n_max + 32;
    const Quadrature q = gauss_jacobi_sym(m, (d - 3.0) / 2.0);
    std::vector<double> kv(m);
    for (int k = 0; k < m; ++k) kv[k] = kappa(spec, q.nodes[k]);

    GegenbauerExpansion out;
    out.order = n_max;
    out.coefficients.resize(n_max + 1);
    out.dims.resize(n_max + 1);
    std::vector<double> pm1(m, 1.0), p(m), next(m);
    for (int k = 0; k < m; ++k) p[k] = q.nodes[k];
    for (int n = 0; n <= n_max; ++n) {
        const std::vector<double>& pn = (n == 0) ? pm1 : p;
        double s = 0.0, qn = 0.0;
        for (int k = 0; k < m; ++k) {
            s += q.weights[k] * kv[k] * pn[k];
            qn += q.weights[k] * pn[k] * pn[k];
        }
        const double hn = gegenbauer_norm_sq(n, d);
        if (std::abs(qn - hn) > 1e-6 * hn) {
            throw QuadratureUnstable("gegenbauer_expand: P_{n,d} norm error above 1e-6");
        }
        out.coefficients[n] = s / qn;
        out.dims[n] = harmonic_dimension(n, d);
        if (n >= 1) {
            for (int k = 0; k < m; ++k) {
                next[k] = ((2.0 * n + d - 2.0) * q.nodes[k] * p[k] - n * pm1[k]) /
                          (n + d - 2.0);
            }
            pm1.swap(p);
            p.swap(next);
        }
    }
    return out;
}

double dissipation_g(const KernelSpec& spec, double beta, double u) {
    const double d = spec.dim;
    const double k_u = kappa(spec, u);
    const double k_1 = kappa(spec, 1.0);
    return k_u * (d - 2.0 + u * u - beta * u * (1.0 - u * u)) +
           k_1 * (beta * (1.0 - u * u) - (d - 1.0) * u);
}

DissipationRate dissipation_rate(const KernelSpec& spec, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("dissipation_rate: beta > 0");
    const KernelValues kv = lyapunov_constants(spec);
    if (!(kv.lambda_bar < 0.0)) {
        throw NotDissipative("dissipation_rate: lambda_bar >= 0");
    }
    const double k_1 = kv.kappa_one;
    const double d = spec.dim;
    const double eb = std::exp(beta);
    auto F = [&](double u) {
        const double k_u = kappa(spec, u);
        const double g = k_u * (d - 2.0 + u * u - beta * u * (1.0 - u * u)) +
                         k_1 * (beta * (1.0 - u * u) - (d - 1.0) * u);
        return beta * std::exp(beta * u) * g / (eb - std::exp(beta * u));
    };

    const double lo = -1.0, hi = 1.0 - 1e-6;
    const int grid_n = 16384;
    double min_f = -kv.lambda_bar;  // boundary limit F(1) = -lambda_bar
    double min_u = 1.0;
    auto scan = [&](double a, double b, int n) {
        for (int j = 0; j < n; ++j) {
            // Chebyshev abscissae of [a, b]
            const double u = 0.5 * (a + b) +
                             0.5 * (b - a) * std::cos(kPi * j / (n - 1.0));
            const double f = F(u);
            if (!(f > 0.0)) {
                throw NonPositiveF("dissipation_rate: F <= 0 on the grid");
            }
            if (f < min_f) {
                min_f = f;
                min_u = u;
            }
        }
    };
    scan(lo, hi, grid_n);
    if (min_u < 1.0) {
        const double h = (hi - lo) / (grid_n - 1.0);
        scan(std::max(lo, min_u - 2.0 * h), std::min(hi, min_u + 2.0 * h), 4 * grid_n / 16);
    }

    DissipationRate out;
    out.beta = beta;
    out.lambda_bar_prime = -min_f;
    out.minimizer_u = min_u;
    out.boundary_value = -kv.lambda_bar;
    return out;
}

}  // namespace spheredyn
