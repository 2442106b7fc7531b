// sphere.hpp - unit-sphere point clouds, normalization, tangent projection,
// uniform sampling, and the layer-normalization Taylor expansion with its
// remainder bounds.
#pragma once

#include <Eigen/Dense>

#include "spheredyn/errors.hpp"
#include "spheredyn/rng.hpp"

namespace spheredyn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double kDegenerateNorm = 1e-12;
constexpr double kSphereTol = 1e-9;

// N tokens as rows of an N x d matrix. `ambient` marks clouds evolved by the
// unprojected Euler scheme, whose rows live in the annulus [1/2, 3] instead
// of on the sphere.
struct SphericalCloud {
    Mat points;
    bool ambient = false;

    SphericalCloud() = default;
    explicit SphericalCloud(Mat pts, bool amb = false)
        : points(std::move(pts)), ambient(amb) {}

    int n_tokens() const { return static_cast<int>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }

    // Throws std::invalid_argument when a row leaves the domain the flag
    // promises (unit norms ±1e-9, or the ambient annulus).
    void validate() const;
};

// v / |v|. Throws DegenerateVector when |v| <= 1e-12; the caller aborts the
// trial and records it (pathological noise draw).
Vec layer_normalize(const Vec& v);

// P_x w = w - <w,x> x. x is expected on the sphere; the formula itself is
// used verbatim on ambient points by the regularized scheme.
Vec tangent_project(const Vec& x, const Vec& w);

// iid uniform rows on S^{d-1}: Gaussian draw, then normalize. Deterministic
// given the stream. A zero draw is retried once, then DegenerateVector.
SphericalCloud sample_uniform_sphere(RngStream& rng, int n, int d);

struct TaylorExpansionReport {
    Vec first_order;    // P_v w
    Vec second_order;   // -<v,w> P_v w - |P_v w|^2 v / 2
    Vec remainder_r1;   // LN(v+w) - v - P_v w
    Vec remainder_r2;   // remainder_r1 - second_order
    double bound_r1 = 0.0;  // 3 |w|^2 / min^2
    double bound_r2 = 0.0;  // 6 |w|^3 / min^3
    double segment_min = 0.0;  // min_{t in [0,1]} |v + t w|
};

// Expansion of LN(v + w) around a unit vector v. The segment minimum is
// computed from the analytic minimizer of |v + t w|^2 clipped to [0,1],
// cross-checked on a 64-point grid. Throws DegenerateVector when the segment
// approaches the origin (min <= 1e-12).
TaylorExpansionReport ln_taylor_expand(const Vec& v, const Vec& w);

// Point at geodesic distance delta from x along the unit tangent u.
Vec geodesic_step(const Vec& x, const Vec& u, double delta);

}  // namespace spheredyn
