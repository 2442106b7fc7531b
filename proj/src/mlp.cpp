#include "spheredyn/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace spheredyn {

MlpParams sample_mlp(RngStream& rng, const KernelSpec& spec, int width) {
    if (width < 1) throw std::invalid_argument("sample_mlp: width >= 1");
    const int d = spec.dim;
    MlpParams p;
    p.width = width;
    p.spec = spec;
    p.u_matrix.resize(width, d);
    for (int i = 0; i < width; ++i) {
        for (int j = 0; j < d; ++j) p.u_matrix(i, j) = rng.next_normal();
    }
    p.w_matrix.resize(d, width);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < width; ++j) p.w_matrix(i, j) = rng.next_normal();
    }
    p.bias_u.resize(width);
    for (int i = 0; i < width; ++i) p.bias_u[i] = spec.sigma_u * rng.next_normal();
    p.bias_w.resize(d);
    for (int i = 0; i < d; ++i) p.bias_w[i] = spec.sigma_w * rng.next_normal();
    return p;
}

Eigen::MatrixXd mlp_hidden(const MlpParams& params, const Eigen::MatrixXd& points) {
    const int p_count = static_cast<int>(points.rows());
    const int m = params.width;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.spec.dim));
    Eigen::MatrixXd hidden(p_count, m);
    Eigen::VectorXd pre(m);
    for (int p = 0; p < p_count; ++p) {
        pre.noalias() = params.u_matrix * points.row(p).transpose();
        for (int j = 0; j < m; ++j) {
            hidden(p, j) = params.spec.apply(pre[j] * inv_sqrt_d + params.bias_u[j]);
        }
    }
    return hidden;
}

Eigen::MatrixXd mlp_forward(const MlpParams& params, const Eigen::MatrixXd& points) {
    const int p_count = static_cast<int>(points.rows());
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(params.width));
    const Eigen::MatrixXd hidden = mlp_hidden(params, points);
    Eigen::MatrixXd out(p_count, params.spec.dim);
    for (int p = 0; p < p_count; ++p) {
        out.row(p) = (params.w_matrix * hidden.row(p).transpose() * inv_sqrt_m +
                      params.bias_w)
                         .transpose();
    }
    return out;
}

}  // namespace spheredyn
