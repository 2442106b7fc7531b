// field.hpp - exact sampling of the limiting Gaussian field at finite point
// sets, Gaussian optimal-transport couplings with finite-width MLPs, and the
// coarse/fine field consistency used by refinement studies.
#pragma once

#include <Eigen/Dense>
#include <tuple>
#include <utility>
#include <vector>

#include "spheredyn/kernel.hpp"
#include "spheredyn/mlp.hpp"
#include "spheredyn/rng.hpp"

namespace spheredyn {

// One joint draw of the limiting field at a point set. Internally the points
// are put in a canonical sorted order and exact duplicates (within 1e-12)
// are merged before factorizing, so permuting the request permutes values
// bit-exactly and duplicated points receive identical values. gram_root is
// the factor of the deduplicated (jittered) Gram; unique_index maps each
// request row to its deduplicated row.
struct FieldSample {
    Eigen::MatrixXd points;     // P x d, as requested
    Eigen::MatrixXd values;     // P x d field values
    Eigen::MatrixXd gram_root;  // Q x Q factor actually used (Q <= P)
    std::vector<int> unique_index;
    double jitter_used = 0.0;

    Eigen::VectorXd value_at(int row) const { return values.row(row).transpose(); }
};

// Gram M_pq = K_amb(x_p, x_q); Cholesky with jitter escalation
// 0 -> 1e-12 tr(M)/Q -> 1e-9 tr(M)/Q, then a symmetric eigen square root
// with negative eigenvalues clipped at 0. GramNotPSD if the spectrum is
// substantially negative (kernel bug). Values are gram_root * Z with the
// rows of Z keyed to point coordinates (position-attached noise).
FieldSample sample_field(RngStream& rng, const KernelSpec& spec,
                         const Eigen::MatrixXd& points);

struct GaussianCoupling {
    Eigen::MatrixXd sigma_one;
    Eigen::MatrixXd sigma_two;
    Eigen::MatrixXd transport_map;  // A with A Sigma1 A^T = Sigma2
    double w2_squared = 0.0;        // Bures distance squared
};

// A = S2 (S2 Sigma1 S2)^{-1/2} S2 with S2 = Sigma2^{1/2}, eigenvalue floor
// 1e-12 lambda_max inside inverse square roots. DegenerateCovariance when an
// input has no positive spectrum.
GaussianCoupling gaussian_ot_map(const Eigen::MatrixXd& sigma_one,
                                 const Eigen::MatrixXd& sigma_two);

// Evaluates the finite-width network at the points and builds the coupled
// limiting-field draw: per output coordinate, limit = A (finite - b_W) + b_W
// where A transports the conditional activation Gram (1/m)<a_p, a_q> onto
// the bias-free limit Gram. The output bias is shared between both fields.
struct CoupledFields {
    Eigen::MatrixXd finite_width;  // P x d
    Eigen::MatrixXd limit;         // P x d
    GaussianCoupling coupling;
};
CoupledFields coupled_layer_fields(const MlpParams& mlp, const KernelSpec& spec,
                                   const Eigen::MatrixXd& points);

// Two independent field draws on the union of the fine point sets, plus the
// coarse field reconstructed as (fine_a + fine_b)/sqrt(2) at the coarse
// points. PointMismatch if a coarse point has no exact positional match in
// the fine union.
struct RefinedFieldPair {
    FieldSample coarse;
    FieldSample fine_a;
    FieldSample fine_b;
};
RefinedFieldPair refine_field_pair(RngStream& rng_a, RngStream& rng_b,
                                   const KernelSpec& spec,
                                   const Eigen::MatrixXd& coarse_points,
                                   const Eigen::MatrixXd& fine_points_a,
                                   const Eigen::MatrixXd& fine_points_b);

}  // namespace spheredyn
