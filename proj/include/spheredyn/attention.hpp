// attention.hpp - softmax self-attention vector field on point clouds.
#pragma once

#include <Eigen/Dense>

#include "spheredyn/sphere.hpp"

namespace spheredyn {

struct AttentionParams {
    Mat q_matrix;
    Mat k_matrix;
    Mat v_matrix;
    double scale = 1.0;  // multiplier on the whole field; 0 disables attention
    double beta = 1.0;   // recorded when built via the Q^T K = beta Id path

    // Canonical parameterization Q^T K = beta Id, V = Id (Q = beta Id, K = Id).
    static AttentionParams scaled_identity(int d, double beta, double scale);
};

// Row i: scale * sum_j softmax_j(<Q x_i, K x_j>) V x_j, softmax stabilized by
// row-max subtraction. Accumulation runs in a canonical order of the tokens
// (sorted by coordinates) so the result is bit-exact under token permutation.
Mat attention_field(const AttentionParams& params, const SphericalCloud& cloud);

Vec attention(const AttentionParams& params, const SphericalCloud& cloud,
              int query_index);

// Canonical token order: indices sorted by lexicographic coordinate
// comparison (ties broken on bit patterns). Shared with the field sampler.
std::vector<int> canonical_order(const Mat& points);

}  // namespace spheredyn
