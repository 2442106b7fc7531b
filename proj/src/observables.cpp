#include "spheredyn/observables.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spheredyn/dynamics.hpp"
#include "spheredyn/field.hpp"
#include "spheredyn/hungarian.hpp"
#include "spheredyn/rng.hpp"

namespace spheredyn {

double interaction_energy(const SphericalCloud& cloud, double beta) {
    const int n = cloud.n_tokens();
    const double eb = std::exp(beta);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            acc += eb - std::exp(beta * cloud.points.row(i).dot(cloud.points.row(j)));
        }
    }
    return acc / (2.0 * n * n);
}

W2Result w2_empirical(const SphericalCloud& a, const SphericalCloud& b) {
    const int na = a.n_tokens(), nb = b.n_tokens();
    if (a.dim() != b.dim()) throw SizeMismatch("w2_empirical: dimension mismatch");
    if (na % nb != 0 && nb % na != 0) {
        throw SizeMismatch("w2_empirical: neither cloud size divides the other");
    }
    const int n = std::max(na, nb);
    if (n > 4096) throw SizeMismatch("w2_empirical: sizes above 4096 unsupported");

    // Replicate the smaller cloud's atoms so both sides have n atoms of mass 1/n.
    auto replicate = [n](const Mat& pts) {
        const int k = n / static_cast<int>(pts.rows());
        Mat out(n, pts.cols());
        for (int i = 0; i < pts.rows(); ++i) {
            for (int r = 0; r < k; ++r) out.row(i * k + r) = pts.row(i);
        }
        return out;
    };
    const Mat pa = replicate(a.points);
    const Mat pb = replicate(b.points);

    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i) {
        cost.row(i) = (pb.rowwise() - pa.row(i)).rowwise().squaredNorm().transpose();
    }
    W2Result res;
    res.assignment = solve_assignment(cost);
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost(i, res.assignment[i]);
    res.distance = std::sqrt(total / n);
    res.method = (na == nb) ? "hungarian_exact" : "replicated_exact";
    return res;
}

CosineStats cosine_stats(const SphericalCloud& cloud) {
    const int n = cloud.n_tokens();
    if (n < 2) throw std::invalid_argument("cosine_stats: need at least two tokens");
    std::vector<double> vals;
    vals.reserve(n * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            vals.push_back(cloud.points.row(i).dot(cloud.points.row(j)));
        }
    }
    CosineStats s;
    s.min = *std::min_element(vals.begin(), vals.end());
    double sum = 0.0;
    for (double v : vals) sum += v;
    s.mean = sum / vals.size();
    std::sort(vals.begin(), vals.end());
    const size_t m = vals.size();
    s.median = (m % 2 == 1) ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
    return s;
}

LyapunovTrial lyapunov_single_trial(const KernelSpec& spec, double horizon, int depth,
                                    double delta0, std::uint64_t master_seed,
                                    std::uint64_t trial) {
    if (delta0 < 1e-6 || delta0 > 1e-3) {
        throw std::invalid_argument("lyapunov: delta0 must be in [1e-6, 1e-3]");
    }
    const int d = spec.dim;
    const double dt = horizon / depth;
    const double gap_lo = 1e-9, gap_hi = 1e-1;
    const AttentionParams off = AttentionParams::scaled_identity(d, 1.0, 0.0);

    RngStream init_stream = derive_stream(master_seed, trial, 0, role::init);
    SphericalCloud start = sample_uniform_sphere(init_stream, 1, d);
    Vec x = start.points.row(0).transpose();

    RngStream dir_stream = derive_stream(master_seed, trial, 0, role::direction);
    Vec g(d);
    for (int k = 0; k < d; ++k) g[k] = dir_stream.next_normal();
    Vec u = layer_normalize(tangent_project(x, g));
    Vec y = geodesic_step(x, u, delta0);

    // Segments partition [0, T]; each contributes log(r_end / r_start), so
    // the trial estimate is the total accumulated log growth over T.
    LyapunovTrial out;
    double acc_log = 0.0;
    double seg_start_gap = (x - y).norm();
    Mat pair(2, d);
    for (int l = 0; l < depth; ++l) {
        pair.row(0) = x.transpose();
        pair.row(1) = y.transpose();
        RngStream fs = derive_stream(master_seed, trial, l, role::field);
        const FieldSample field = sample_field(fs, spec, pair);
        const SphericalCloud stepped = euler_step(
            SphericalCloud(pair), off, spec, field.values, dt, EulerMode::projected);
        x = stepped.points.row(0).transpose();
        y = stepped.points.row(1).transpose();
        const double gap = (x - y).norm();
        const bool last = (l == depth - 1);
        if (gap < gap_lo || gap > gap_hi || last) {
            if (gap > 0.0 && seg_start_gap > 0.0) {
                acc_log += std::log(gap / seg_start_gap);
            }
            ++out.intervals;
            if (!last && gap > 0.0) {
                // Benettin renormalization: pull the companion back to
                // chordal distance delta0 along the current gap direction.
                y = layer_normalize(x + delta0 * (y - x) / gap);
                seg_start_gap = (x - y).norm();
            }
        }
    }
    out.lambda = acc_log / horizon;
    return out;
}

LyapunovEstimate aggregate_lyapunov(const std::vector<LyapunovTrial>& trials) {
    int total_intervals = 0;
    for (const auto& t : trials) total_intervals += t.intervals;
    if (total_intervals < 10) {
        throw WindowCollapse("lyapunov_estimate: fewer than 10 usable intervals");
    }
    LyapunovEstimate est;
    est.trials_used = static_cast<int>(trials.size());
    est.intervals = total_intervals;
    double mean = 0.0;
    for (const auto& t : trials) mean += t.lambda;
    mean /= trials.size();
    double var = 0.0;
    for (const auto& t : trials) var += (t.lambda - mean) * (t.lambda - mean);
    var = trials.size() > 1 ? var / (trials.size() - 1.0) : 0.0;
    est.lambda_hat = mean;
    est.stderr_ = std::sqrt(var / trials.size());
    return est;
}

LyapunovEstimate lyapunov_estimate(const KernelSpec& spec, double horizon, int depth,
                                   int n_trials, double delta0,
                                   std::uint64_t master_seed) {
    std::vector<LyapunovTrial> trials(n_trials);
    for (int t = 0; t < n_trials; ++t) {
        trials[t] = lyapunov_single_trial(spec, horizon, depth, delta0, master_seed, t);
    }
    return aggregate_lyapunov(trials);
}

DecayFit decay_rate_fit(const std::vector<double>& times,
                        const std::vector<double>& values, double window_lo,
                        double window_hi) {
    if (times.size() != values.size()) {
        throw std::invalid_argument("decay_rate_fit: times/values size mismatch");
    }
    std::vector<double> t, ly;
    for (size_t i = 0; i < times.size(); ++i) {
        if (times[i] < window_lo || times[i] > window_hi) continue;
        if (!(values[i] > 0.0)) {
            throw NonPositiveEnergy("decay_rate_fit: nonpositive energy in window");
        }
        t.push_back(times[i]);
        ly.push_back(std::log(values[i]));
    }
    if (t.size() < 2) {
        throw std::invalid_argument("decay_rate_fit: fewer than 2 points in window");
    }
    const size_t n = t.size();
    double mt = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mt += t[i];
        my += ly[i];
    }
    mt /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (t[i] - mt) * (t[i] - mt);
        sxy += (t[i] - mt) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    DecayFit fit;
    fit.points_used = static_cast<int>(n);
    fit.rate = sxy / sxx;
    fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

}  // namespace spheredyn
