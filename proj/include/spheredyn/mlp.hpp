// mlp.hpp - finite-width random MLP block G^m(x) = W act(U x / sqrt(d) + b_U)
// / sqrt(m) + b_W with iid Gaussian initialization.
#pragma once

#include <Eigen/Dense>

#include "spheredyn/kernel.hpp"
#include "spheredyn/rng.hpp"

namespace spheredyn {

struct MlpParams {
    Eigen::MatrixXd u_matrix;  // m x d, N(0,1) entries
    Eigen::MatrixXd w_matrix;  // d x m, N(0,1) entries
    Eigen::VectorXd bias_u;    // m, N(0, sigma_u^2)
    Eigen::VectorXd bias_w;    // d, N(0, sigma_w^2)
    int width = 0;
    KernelSpec spec;
};

// Draw order (fixed for reproducibility): u row-major, then w row-major,
// then bias_u, then bias_w.
MlpParams sample_mlp(RngStream& rng, const KernelSpec& spec, int width);

// Forward pass at a P x d point set; each output row depends only on its own
// input row.
Eigen::MatrixXd mlp_forward(const MlpParams& params, const Eigen::MatrixXd& points);

// Hidden activations act(U x / sqrt(d) + b_U) as a P x m array; the coupling
// module needs the conditional Gram (1/m) <a_i, a_j>.
Eigen::MatrixXd mlp_hidden(const MlpParams& params, const Eigen::MatrixXd& points);

}  // namespace spheredyn
