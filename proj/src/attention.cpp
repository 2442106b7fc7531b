#include "spheredyn/attention.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace spheredyn {

AttentionParams AttentionParams::scaled_identity(int d, double beta, double scale) {
    AttentionParams p;
    p.q_matrix = beta * Mat::Identity(d, d);
    p.k_matrix = Mat::Identity(d, d);
    p.v_matrix = Mat::Identity(d, d);
    p.scale = scale;
    p.beta = beta;
    return p;
}

namespace {

// Total order on doubles: value order, bit pattern as tie-break, so equal
// multisets of points always sort identically.
bool coord_less(double a, double b) {
    if (a < b) return true;
    if (b < a) return false;
    std::uint64_t ba, bb;
    std::memcpy(&ba, &a, 8);
    std::memcpy(&bb, &b, 8);
    return ba < bb;
}

}  // namespace

std::vector<int> canonical_order(const Mat& points) {
    std::vector<int> idx(points.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        for (int k = 0; k < points.cols(); ++k) {
            if (coord_less(points(a, k), points(b, k))) return true;
            if (coord_less(points(b, k), points(a, k))) return false;
        }
        return false;
    });
    return idx;
}

Mat attention_field(const AttentionParams& params, const SphericalCloud& cloud) {
    const int n = cloud.n_tokens();
    const int d = cloud.dim();
    if (params.q_matrix.rows() != d || params.k_matrix.rows() != d ||
        params.v_matrix.rows() != d) {
        throw std::invalid_argument("attention_field: parameter dims mismatch cloud");
    }
    if (params.scale == 0.0) return Mat::Zero(n, d);

    const Mat qx = cloud.points * params.q_matrix.transpose();
    const Mat kx = cloud.points * params.k_matrix.transpose();
    const Mat vx = cloud.points * params.v_matrix.transpose();
    const Mat logits = qx * kx.transpose();
    const std::vector<int> order = canonical_order(cloud.points);

    Mat out(n, d);
    Vec num(d);
    for (int i = 0; i < n; ++i) {
        double row_max = logits(i, order[0]);
        for (int j : order) row_max = std::max(row_max, logits(i, j));
        double den = 0.0;
        num.setZero();
        for (int j : order) {
            const double e = std::exp(logits(i, j) - row_max);
            den += e;
            num += e * vx.row(j).transpose();
        }
        out.row(i) = (params.scale / den) * num.transpose();
    }
    return out;
}

Vec attention(const AttentionParams& params, const SphericalCloud& cloud,
              int query_index) {
    if (query_index < 0 || query_index >= cloud.n_tokens()) {
        throw std::invalid_argument("attention: query index out of range");
    }
    return attention_field(params, cloud).row(query_index).transpose();
}

}  // namespace spheredyn
