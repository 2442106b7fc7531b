#include "spheredyn/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spheredyn {

void SphericalCloud::validate() const {
    if (n_tokens() < 1 || dim() < 2) {
        throw std::invalid_argument("SphericalCloud: need N >= 1 and d >= 2");
    }
    for (int i = 0; i < n_tokens(); ++i) {
        const double norm = points.row(i).norm();
        if (!std::isfinite(norm)) {
            throw std::invalid_argument("SphericalCloud: non-finite row");
        }
        if (ambient) {
            if (norm < 0.5 || norm > 3.0) {
                throw std::invalid_argument(
                    "SphericalCloud: ambient row norm outside [1/2, 3]");
            }
        } else if (std::abs(norm - 1.0) > kSphereTol) {
            throw std::invalid_argument(
                "SphericalCloud: row norm off the sphere by more than 1e-9");
        }
    }
}

Vec layer_normalize(const Vec& v) {
    const double norm = v.norm();
    if (!(norm > kDegenerateNorm)) {
        throw DegenerateVector("layer_normalize: |v| <= 1e-12");
    }
    return v / norm;
}

Vec tangent_project(const Vec& x, const Vec& w) {
    return w - x.dot(w) * x;
}

SphericalCloud sample_uniform_sphere(RngStream& rng, int n, int d) {
    if (n < 1 || d < 2) {
        throw std::invalid_argument("sample_uniform_sphere: need n >= 1, d >= 2");
    }
    Mat pts(n, d);
    Vec g(d);
    for (int i = 0; i < n; ++i) {
        for (int attempt = 0;; ++attempt) {
            for (int k = 0; k < d; ++k) g[k] = rng.next_normal();
            const double norm = g.norm();
            if (norm > kDegenerateNorm) {
                pts.row(i) = g.transpose() / norm;
                break;
            }
            if (attempt >= 1) {
                throw DegenerateVector("sample_uniform_sphere: degenerate draw twice");
            }
        }
    }
    return SphericalCloud(std::move(pts));
}

namespace {

// min_{t in [0,1]} |v + t w| from the quadratic in t, with a 64-point grid
// cross-check.
double segment_min_norm(const Vec& v, const Vec& w) {
    const double ww = w.squaredNorm();
    const double vw = v.dot(w);
    const double vv = v.squaredNorm();
    auto norm_at = [&](double t) {
        return std::sqrt(std::max(vv + 2.0 * t * vw + t * t * ww, 0.0));
    };
    double m = std::min(norm_at(0.0), norm_at(1.0));
    if (ww > 0.0) {
        const double t_star = std::clamp(-vw / ww, 0.0, 1.0);
        m = std::min(m, norm_at(t_star));
    }
    for (int k = 0; k <= 64; ++k) {
        m = std::min(m, norm_at(static_cast<double>(k) / 64.0));
    }
    return m;
}

}  // namespace

TaylorExpansionReport ln_taylor_expand(const Vec& v, const Vec& w) {
    const double seg_min = segment_min_norm(v, w);
    if (!(seg_min > kDegenerateNorm)) {
        throw DegenerateVector("ln_taylor_expand: segment passes within 1e-12 of 0");
    }
    TaylorExpansionReport rep;
    rep.segment_min = seg_min;
    const Vec pw = tangent_project(v, w);
    rep.first_order = pw;
    rep.second_order = -v.dot(w) * pw - 0.5 * pw.squaredNorm() * v;
    const Vec ln = layer_normalize(v + w);
    rep.remainder_r1 = ln - v - pw;
    rep.remainder_r2 = rep.remainder_r1 - rep.second_order;
    const double wn = w.norm();
    rep.bound_r1 = 3.0 * wn * wn / (seg_min * seg_min);
    rep.bound_r2 = 6.0 * wn * wn * wn / (seg_min * seg_min * seg_min);
    return rep;
}

Vec geodesic_step(const Vec& x, const Vec& u, double delta) {
    return std::cos(delta) * x + std::sin(delta) * u;
}

}  // namespace spheredyn
