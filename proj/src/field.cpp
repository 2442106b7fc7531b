#include "spheredyn/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "spheredyn/attention.hpp"  // canonical_order

namespace spheredyn {

namespace {

// Symmetric PSD square root with negative eigenvalues clipped at 0.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) ev[i] = std::sqrt(std::max(ev[i], 0.0));
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Inverse square root with eigenvalue floor 1e-12 lambda_max.
Eigen::MatrixXd psd_inv_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues();
    const double lam_max = ev.maxCoeff();
    if (!(lam_max > 0.0)) {
        throw DegenerateCovariance("psd_inv_sqrt: no positive spectrum");
    }
    const double floor = 1e-12 * lam_max;
    for (int i = 0; i < ev.size(); ++i) {
        ev[i] = 1.0 / std::sqrt(std::max(ev[i], floor));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

struct CanonicalSet {
    Eigen::MatrixXd unique_points;  // Q x d in canonical order
    std::vector<int> map;           // request row -> unique row
};

// Sort rows canonically and merge duplicates (max coordinate gap <= 1e-12
// between sort-adjacent rows).
CanonicalSet canonicalize(const Eigen::MatrixXd& points) {
    const int p = static_cast<int>(points.rows());
    const int d = static_cast<int>(points.cols());
    if (!points.allFinite()) {
        throw std::invalid_argument("field points must be finite");
    }
    const std::vector<int> order = canonical_order(points);
    CanonicalSet cs;
    cs.map.assign(p, -1);
    std::vector<int> reps;
    for (int r = 0; r < p; ++r) {
        const int i = order[r];
        bool merged = false;
        if (!reps.empty()) {
            const int prev = reps.back();
            double gap = 0.0;
            for (int k = 0; k < d; ++k) {
                gap = std::max(gap, std::abs(points(i, k) - points(prev, k)));
            }
            if (gap <= 1e-12) {
                cs.map[i] = static_cast<int>(reps.size()) - 1;
                merged = true;
            }
        }
        if (!merged) {
            cs.map[i] = static_cast<int>(reps.size());
            reps.push_back(i);
        }
    }
    cs.unique_points.resize(static_cast<int>(reps.size()), d);
    for (size_t r = 0; r < reps.size(); ++r) {
        cs.unique_points.row(static_cast<int>(r)) = points.row(reps[r]);
    }
    return cs;
}

}  // namespace

FieldSample sample_field(RngStream& rng, const KernelSpec& spec,
                         const Eigen::MatrixXd& points) {
    const int p = static_cast<int>(points.rows());
    const int d = static_cast<int>(points.cols());
    if (p < 1) throw std::invalid_argument("sample_field: need P >= 1");

    CanonicalSet cs = canonicalize(points);
    const int q = static_cast<int>(cs.unique_points.rows());

    Eigen::MatrixXd gram(q, q);
    for (int i = 0; i < q; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double v = kappa_ambient(spec, cs.unique_points.row(i).transpose(),
                                           cs.unique_points.row(j).transpose());
            gram(i, j) = v;
            gram(j, i) = v;
        }
    }

    FieldSample out;
    out.points = points;
    out.unique_index = cs.map;

    const double tr_scale = gram.trace() / q;
    const double rungs[3] = {0.0, 1e-12 * tr_scale, 1e-9 * tr_scale};
    bool factored = false;
    for (double jit : rungs) {
        Eigen::LLT<Eigen::MatrixXd> llt(
            jit == 0.0 ? gram : Eigen::MatrixXd(gram + jit * Eigen::MatrixXd::Identity(q, q)));
        if (llt.info() == Eigen::Success) {
            out.gram_root = llt.matrixL();
            out.jitter_used = jit;
            factored = true;
            break;
        }
    }
    if (!factored) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        Eigen::VectorXd ev = es.eigenvalues();
        const double lam_max = std::max(ev.maxCoeff(), 0.0);
        if (ev.minCoeff() < -1e-6 * std::max(lam_max, 1.0)) {
            throw GramNotPSD("sample_field: Gram matrix substantially non-PSD");
        }
        for (int i = 0; i < q; ++i) ev[i] = std::sqrt(std::max(ev[i], 0.0));
        out.gram_root = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        out.jitter_used = rungs[2];
    }

    // Standard normal rows keyed to the point coordinates, so the draw is a
    // function of (stream, position), not of the request order.
    const std::uint64_t stream_key = rng.next_u64();
    Eigen::MatrixXd z(q, d);
    std::vector<double> coords(d);
    for (int i = 0; i < q; ++i) {
        for (int k = 0; k < d; ++k) coords[k] = cs.unique_points(i, k);
        RngStream point_stream(position_key(stream_key, coords.data(), d));
        for (int k = 0; k < d; ++k) z(i, k) = point_stream.next_normal();
    }
    const Eigen::MatrixXd unique_values = out.gram_root * z;
    out.values.resize(p, d);
    for (int i = 0; i < p; ++i) out.values.row(i) = unique_values.row(cs.map[i]);
    return out;
}

GaussianCoupling gaussian_ot_map(const Eigen::MatrixXd& sigma_one,
                                 const Eigen::MatrixXd& sigma_two) {
    if (sigma_one.rows() != sigma_one.cols() || sigma_two.rows() != sigma_two.cols() ||
        sigma_one.rows() != sigma_two.rows()) {
        throw std::invalid_argument("gaussian_ot_map: need matching square inputs");
    }
    if (sigma_one.rows() > 512) {
        throw std::invalid_argument("gaussian_ot_map: P <= 512");
    }
    GaussianCoupling out;
    out.sigma_one = 0.5 * (sigma_one + sigma_one.transpose());
    out.sigma_two = 0.5 * (sigma_two + sigma_two.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(out.sigma_one);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(out.sigma_two);
    if (!(es1.eigenvalues().maxCoeff() > 0.0) || !(es2.eigenvalues().maxCoeff() > 0.0)) {
        throw DegenerateCovariance("gaussian_ot_map: covariance has no positive spectrum");
    }

    const Eigen::MatrixXd s2 = psd_sqrt(out.sigma_two);
    const Eigen::MatrixXd mid = s2 * out.sigma_one * s2;
    out.transport_map = s2 * psd_inv_sqrt(0.5 * (mid + mid.transpose())) * s2;

    const Eigen::MatrixXd s1 = psd_sqrt(out.sigma_one);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esm(s1 * out.sigma_two * s1);
    double cross = 0.0;
    for (int i = 0; i < esm.eigenvalues().size(); ++i) {
        cross += std::sqrt(std::max(esm.eigenvalues()[i], 0.0));
    }
    out.w2_squared = out.sigma_one.trace() + out.sigma_two.trace() - 2.0 * cross;
    return out;
}

CoupledFields coupled_layer_fields(const MlpParams& mlp, const KernelSpec& spec,
                                   const Eigen::MatrixXd& points) {
    const int p = static_cast<int>(points.rows());
    const int d = static_cast<int>(points.cols());
    if (mlp.spec.dim != spec.dim) {
        throw std::invalid_argument("coupled_layer_fields: spec dimension mismatch");
    }
    CoupledFields out;
    out.finite_width = mlp_forward(mlp, points);

    const Eigen::MatrixXd hidden = mlp_hidden(mlp, points);
    const Eigen::MatrixXd sigma_one =
        hidden * hidden.transpose() / static_cast<double>(mlp.width);

    const double sw2 = spec.sigma_w * spec.sigma_w;
    Eigen::MatrixXd sigma_two(p, p);
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double v = kappa_ambient(spec, points.row(i).transpose(),
                                           points.row(j).transpose()) -
                             sw2;
            sigma_two(i, j) = v;
            sigma_two(j, i) = v;
        }
    }

    out.coupling = gaussian_ot_map(sigma_one, sigma_two);
    Eigen::MatrixXd centered = out.finite_width;
    centered.rowwise() -= mlp.bias_w.transpose();
    out.limit = out.coupling.transport_map * centered;
    out.limit.rowwise() += mlp.bias_w.transpose();
    (void)d;
    return out;
}

namespace {

bool rows_match(const Eigen::MatrixXd& a, int i, const Eigen::MatrixXd& b, int j) {
    return (a.row(i) - b.row(j)).cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

RefinedFieldPair refine_field_pair(RngStream& rng_a, RngStream& rng_b,
                                   const KernelSpec& spec,
                                   const Eigen::MatrixXd& coarse_points,
                                   const Eigen::MatrixXd& fine_points_a,
                                   const Eigen::MatrixXd& fine_points_b) {
    const int d = static_cast<int>(coarse_points.cols());
    Eigen::MatrixXd fine_union(fine_points_a.rows() + fine_points_b.rows(), d);
    fine_union << fine_points_a, fine_points_b;

    std::vector<int> where(coarse_points.rows(), -1);
    for (int i = 0; i < coarse_points.rows(); ++i) {
        for (int j = 0; j < fine_union.rows(); ++j) {
            if (rows_match(coarse_points, i, fine_union, j)) {
                where[i] = j;
                break;
            }
        }
        if (where[i] < 0) {
            throw PointMismatch("refine_field_pair: coarse point missing from fine union");
        }
    }

    RefinedFieldPair out;
    out.fine_a = sample_field(rng_a, spec, fine_union);
    out.fine_b = sample_field(rng_b, spec, fine_union);

    out.coarse.points = coarse_points;
    out.coarse.gram_root = out.fine_a.gram_root;
    out.coarse.jitter_used = out.fine_a.jitter_used;
    out.coarse.values.resize(coarse_points.rows(), d);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < coarse_points.rows(); ++i) {
        out.coarse.values.row(i) =
            (out.fine_a.values.row(where[i]) + out.fine_b.values.row(where[i])) * inv_sqrt2;
        out.coarse.unique_index.push_back(where[i]);
    }
    return out;
}

}  // namespace spheredyn
