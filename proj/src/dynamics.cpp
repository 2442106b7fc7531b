#include "spheredyn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spheredyn {

Scheme scheme_from_name(const std::string& name) {
    if (name == "transformer_discrete") return Scheme::transformer_discrete;
    if (name == "euler_ambient") return Scheme::euler_ambient;
    if (name == "euler_projected") return Scheme::euler_projected;
    if (name == "pure_noise") return Scheme::pure_noise;
    throw ConfigError("unknown scheme: " + name);
}

std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::transformer_discrete: return "transformer_discrete";
        case Scheme::euler_ambient: return "euler_ambient";
        case Scheme::euler_projected: return "euler_projected";
        case Scheme::pure_noise: return "pure_noise";
    }
    return "?";
}

namespace {

// quintic smoothstep, C^2 with flat ends
double smoothstep5(double y) {
    y = std::clamp(y, 0.0, 1.0);
    return y * y * y * (10.0 + y * (-15.0 + 6.0 * y));
}

}  // namespace

double Regularization::rho(double r) {
    if (r <= 1.5) return 1.0;
    if (r >= 2.0) return 0.0;
    return 1.0 - smoothstep5((r - 1.5) / 0.5);
}

// Radial profile of T: identity up to 2, clamped to 3 beyond 3, quintic
// Hermite interpolant (value/slope/curvature matched at both ends) between.
double Regularization::truncate_radius(double r) {
    if (r <= 2.0) return r;
    if (r >= 3.0) return 3.0;
    const double s = r - 2.0;
    return 2.0 + s + s * s * s * (4.0 + s * (-7.0 + 3.0 * s));
}

Vec Regularization::truncate(const Vec& x) {
    const double r = x.norm();
    if (r <= 2.0) return x;
    return (truncate_radius(r) / r) * x;
}

Mat Regularization::truncate_rows(const Mat& points) {
    Mat out = points;
    for (int i = 0; i < points.rows(); ++i) {
        const double r = points.row(i).norm();
        if (r > 2.0) out.row(i) *= truncate_radius(r) / r;
    }
    return out;
}

std::string ModelConfig::step_size_warning() const {
    const double v_norm = attention.v_matrix.size() > 0
                              ? attention.v_matrix.jacobiSvd().singularValues()[0]
                              : 0.0;
    const double k1 = kappa(kernel, 1.0);
    const double bound =
        dt() * (std::abs(attention.scale) * v_norm + k1 * (kernel.dim - 1) / 2.0);
    if (bound > 0.1) {
        std::ostringstream os;
        os << "dt guard exceeded: dt (|scale| ||V|| + k(1)(d-1)/2) = " << bound
           << " > 0.1; results may be outside the scheme's stability range";
        return os.str();
    }
    return {};
}

SphericalCloud transformer_step(const SphericalCloud& cloud,
                                const AttentionParams& params,
                                const MlpParams& mlp, double dt) {
    const int n = cloud.n_tokens();
    const Mat attn = attention_field(params, cloud);
    Mat y(n, cloud.dim());
    for (int i = 0; i < n; ++i) {
        y.row(i) =
            layer_normalize(cloud.points.row(i).transpose() + dt * attn.row(i).transpose())
                .transpose();
    }
    const Mat noise = mlp_forward(mlp, y);
    const double sq = std::sqrt(dt);
    Mat next(n, cloud.dim());
    for (int i = 0; i < n; ++i) {
        next.row(i) =
            layer_normalize(y.row(i).transpose() + sq * noise.row(i).transpose())
                .transpose();
    }
    return SphericalCloud(std::move(next));
}

namespace {

void maybe_record(TrajectoryRecord& rec, const Mat& state, int layer, int depth,
                  int stride) {
    if (layer == 0 || layer == depth || (stride > 0 && layer % stride == 0)) {
        rec.states.push_back(state);
        rec.recorded_layers.push_back(layer);
    }
}

}  // namespace

TrajectoryRecord run_transformer(const ModelConfig& config, const SphericalCloud& init,
                                 std::uint64_t master_seed, std::uint64_t trial,
                                 int record_stride) {
    init.validate();
    TrajectoryRecord rec;
    rec.scheme_tag = Scheme::transformer_discrete;
    rec.master_seed = master_seed;
    rec.trial = trial;
    SphericalCloud cloud = init;
    maybe_record(rec, cloud.points, 0, config.depth, record_stride);
    const double dt = config.dt();
    for (int l = 0; l < config.depth; ++l) {
        RngStream mlp_stream = derive_stream(master_seed, trial, l, role::mlp);
        const MlpParams mlp = sample_mlp(mlp_stream, config.kernel, config.width);
        cloud = transformer_step(cloud, config.attention, mlp, dt);
        maybe_record(rec, cloud.points, l + 1, config.depth, record_stride);
    }
    return rec;
}

SphericalCloud euler_step(const SphericalCloud& cloud, const AttentionParams& params,
                          const KernelSpec& spec, const Mat& field_values, double dt,
                          EulerMode mode, bool ito_correction) {
    const int n = cloud.n_tokens();
    const int d = cloud.dim();
    if (field_values.rows() != n || field_values.cols() != d) {
        throw std::invalid_argument("euler_step: field shape mismatch");
    }
    Mat attn;
    if (params.scale != 0.0) {
        attn = attention_field(params, SphericalCloud(Regularization::truncate_rows(cloud.points),
                                                      /*ambient=*/true));
    }
    const double sq = std::sqrt(dt);
    Mat next(n, d);
    for (int i = 0; i < n; ++i) {
        const Vec x = cloud.points.row(i).transpose();
        const double rho = Regularization::rho(x.norm());
        Vec drift = Vec::Zero(d);
        if (params.scale != 0.0) {
            drift = rho * tangent_project(x, attn.row(i).transpose());
        }
        if (ito_correction) {
            const double k_diag = kappa_ambient(spec, x, x);
            drift -= rho * rho * k_diag * (d - 1.0) / 2.0 * x;
        }
        Vec xp = x + dt * drift +
                 sq * rho * tangent_project(x, field_values.row(i).transpose());
        if (mode == EulerMode::projected) {
            xp = layer_normalize(xp);
        } else {
            const double r = xp.norm();
            if (r > 3.0 || r < 0.5) {
                throw OutOfDomain(
                    "euler_step: ambient position left the annulus [1/2, 3] "
                    "(step size too large for this configuration)");
            }
        }
        next.row(i) = xp.transpose();
    }
    return SphericalCloud(std::move(next), mode == EulerMode::ambient);
}

TrajectoryRecord run_euler(const ModelConfig& config, const SphericalCloud& init,
                           std::uint64_t master_seed, std::uint64_t trial,
                           int record_stride, EulerMode mode) {
    init.validate();
    TrajectoryRecord rec;
    rec.scheme_tag =
        mode == EulerMode::ambient ? Scheme::euler_ambient : Scheme::euler_projected;
    rec.master_seed = master_seed;
    rec.trial = trial;
    SphericalCloud cloud = init;
    cloud.ambient = (mode == EulerMode::ambient);
    maybe_record(rec, cloud.points, 0, config.depth, record_stride);
    const double dt = config.dt();
    for (int l = 0; l < config.depth; ++l) {
        RngStream stream = derive_stream(master_seed, trial, l, role::field);
        const FieldSample field = sample_field(stream, config.kernel, cloud.points);
        cloud = euler_step(cloud, config.attention, config.kernel, field.values, dt,
                           mode, config.ito_correction);
        maybe_record(rec, cloud.points, l + 1, config.depth, record_stride);
    }
    return rec;
}

TrajectoryRecord run_pure_noise(const KernelSpec& spec, const SphericalCloud& init,
                                int depth, double horizon, std::uint64_t master_seed,
                                std::uint64_t trial, int record_stride) {
    ModelConfig cfg;
    cfg.depth = depth;
    cfg.horizon = horizon;
    cfg.n_tokens = init.n_tokens();
    cfg.attention = AttentionParams::scaled_identity(spec.dim, 1.0, 0.0);
    cfg.kernel = spec;
    cfg.scheme = Scheme::pure_noise;
    TrajectoryRecord rec =
        run_euler(cfg, init, master_seed, trial, record_stride, EulerMode::projected);
    rec.scheme_tag = Scheme::pure_noise;
    return rec;
}

CoupledPairResult run_coupled_pair(const ModelConfig& config, const SphericalCloud& init,
                                   std::uint64_t master_seed, std::uint64_t trial,
                                   int record_stride) {
    init.validate();
    if (config.width < 1) {
        throw std::invalid_argument("run_coupled_pair: finite width required");
    }
    const int n = init.n_tokens();
    const int d = init.dim();
    const double dt = config.dt();

    CoupledPairResult out;
    out.transformer.scheme_tag = Scheme::transformer_discrete;
    out.euler.scheme_tag = Scheme::euler_ambient;
    out.transformer.master_seed = out.euler.master_seed = master_seed;
    out.transformer.trial = out.euler.trial = trial;

    SphericalCloud chain_t = init;
    SphericalCloud chain_e = init;
    chain_e.ambient = true;
    out.error_series.assign(config.depth + 1, 0.0);
    maybe_record(out.transformer, chain_t.points, 0, config.depth, record_stride);
    maybe_record(out.euler, chain_e.points, 0, config.depth, record_stride);

    Mat union_points(2 * n, d);
    for (int l = 0; l < config.depth; ++l) {
        RngStream mlp_stream = derive_stream(master_seed, trial, l, role::mlp);
        const MlpParams mlp = sample_mlp(mlp_stream, config.kernel, config.width);

        union_points.topRows(n) = chain_t.points;
        union_points.bottomRows(n) = chain_e.points;
        const CoupledFields fields =
            coupled_layer_fields(mlp, config.kernel, union_points);

        chain_t = transformer_step(chain_t, config.attention, mlp, dt);
        chain_e = euler_step(chain_e, config.attention, config.kernel,
                             fields.limit.bottomRows(n), dt, EulerMode::ambient,
                             config.ito_correction);

        out.error_series[l + 1] =
            (chain_t.points - chain_e.points).rowwise().squaredNorm().mean();
        maybe_record(out.transformer, chain_t.points, l + 1, config.depth, record_stride);
        maybe_record(out.euler, chain_e.points, l + 1, config.depth, record_stride);
    }
    return out;
}

std::vector<double> run_refinement_ladder(const ModelConfig& config, int k_levels,
                                          const SphericalCloud& init,
                                          std::uint64_t master_seed, std::uint64_t trial) {
    init.validate();
    if (k_levels < 1 || k_levels > 6) {
        throw std::invalid_argument("run_refinement_ladder: 1 <= k <= 6");
    }
    const int n = init.n_tokens();
    const int d = init.dim();
    std::vector<double> gaps;
    gaps.reserve(k_levels);

    for (int level = 0; level < k_levels; ++level) {
        const int depth_c = config.depth << level;
        const double dt_c = config.horizon / depth_c;
        const std::uint64_t level_master =
            derive_seed(master_seed, trial, static_cast<std::uint64_t>(level), role::scratch);

        SphericalCloud coarse = init;
        SphericalCloud fine = init;
        coarse.ambient = fine.ambient = true;
        double sup_gap = 0.0;

        Mat union_pts(2 * n, d);
        for (int l = 0; l < depth_c; ++l) {
            union_pts.topRows(n) = coarse.points;
            union_pts.bottomRows(n) = fine.points;
            RngStream stream_a = derive_stream(level_master, trial, l, role::field);
            const FieldSample fld_a = sample_field(stream_a, config.kernel, union_pts);
            const Mat coarse_a = fld_a.values.topRows(n);

            fine = euler_step(fine, config.attention, config.kernel,
                              fld_a.values.bottomRows(n), dt_c / 2.0, EulerMode::ambient,
                              config.ito_correction);

            union_pts.bottomRows(n) = fine.points;
            RngStream stream_b = derive_stream(level_master, trial, l, role::field_b);
            const FieldSample fld_b = sample_field(stream_b, config.kernel, union_pts);

            fine = euler_step(fine, config.attention, config.kernel,
                              fld_b.values.bottomRows(n), dt_c / 2.0, EulerMode::ambient,
                              config.ito_correction);

            const Mat coarse_field =
                (coarse_a + fld_b.values.topRows(n)) / std::sqrt(2.0);
            coarse = euler_step(coarse, config.attention, config.kernel, coarse_field,
                                dt_c, EulerMode::ambient, config.ito_correction);

            sup_gap = std::max(
                sup_gap, (coarse.points - fine.points).rowwise().squaredNorm().mean());
        }
        gaps.push_back(sup_gap);
    }
    return gaps;
}

}  // namespace spheredyn
