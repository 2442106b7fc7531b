#include "spheredyn/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "spheredyn/field.hpp"

namespace spheredyn {

using nlohmann::json;

namespace {

const std::set<std::string> kExperiments = {
    "kernel_table", "simulate", "deep_rate", "wide_rate", "chaos", "sync", "lyapunov"};

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
        }
    }
}

template <typename T>
T require(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) {
        throw ConfigError("missing key \"" + key + "\" in " + where);
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key \"" + key + "\" in " + where + " has the wrong type");
    }
}

template <typename T>
T optional_or(const json& obj, const std::string& key, const std::string& where, T def) {
    if (!obj.contains(key)) return def;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key \"" + key + "\" in " + where + " has the wrong type");
    }
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(doc,
               {"schema_version", "experiment", "trials", "master_seed", "record_stride",
                "output_path", "model", "grids"},
               "config");
    if (require<int>(doc, "schema_version", "config") != 1) {
        throw ConfigError("unsupported schema_version (expected 1)");
    }

    ExperimentConfig c;
    c.experiment = require<std::string>(doc, "experiment", "config");
    if (!kExperiments.count(c.experiment)) {
        throw ConfigError("unknown experiment \"" + c.experiment + "\"");
    }
    c.trials = optional_or<int>(doc, "trials", "config", 1);
    if (c.trials < 1) throw ConfigError("trials must be >= 1");
    c.master_seed = optional_or<std::uint64_t>(doc, "master_seed", "config", 0);
    c.record_stride = optional_or<int>(doc, "record_stride", "config", 0);
    if (c.record_stride < 0) throw ConfigError("record_stride must be >= 0");
    c.output_path = optional_or<std::string>(doc, "output_path", "config", ".");

    if (doc.contains("model")) {
        const json& m = doc.at("model");
        check_keys(m,
                   {"scheme", "depth", "horizon", "dim", "n_tokens", "width",
                    "activation", "sigma_u", "sigma_w", "attention_scale",
                    "attention_beta", "ito_correction"},
                   "model");
        c.has_model = true;
        c.scheme = require<std::string>(m, "scheme", "model");
        scheme_from_name(c.scheme);  // validates
        c.depth = require<int>(m, "depth", "model");
        c.horizon = require<double>(m, "horizon", "model");
        c.dim = require<int>(m, "dim", "model");
        c.n_tokens = require<int>(m, "n_tokens", "model");
        c.width = optional_or<int>(m, "width", "model", 0);
        c.activation = require<std::string>(m, "activation", "model");
        activation_from_name(c.activation);  // validates
        c.sigma_u = require<double>(m, "sigma_u", "model");
        c.sigma_w = require<double>(m, "sigma_w", "model");
        c.attention_scale = optional_or<double>(m, "attention_scale", "model", 0.0);
        c.attention_beta = optional_or<double>(m, "attention_beta", "model", 1.0);
        c.ito_correction = optional_or<bool>(m, "ito_correction", "model", true);
        if (c.depth < 1 || c.horizon <= 0.0 || c.dim < 2 || c.n_tokens < 1) {
            throw ConfigError("model: need depth >= 1, horizon > 0, dim >= 2, n_tokens >= 1");
        }
    }

    if (doc.contains("grids")) {
        const json& g = doc.at("grids");
        check_keys(g,
                   {"m_list", "l_list", "n_list", "n_ref", "beta", "delta0",
                    "fit_window", "kernel_list"},
                   "grids");
        c.m_list = optional_or<std::vector<int>>(g, "m_list", "grids", {});
        c.l_list = optional_or<std::vector<int>>(g, "l_list", "grids", {});
        c.n_list = optional_or<std::vector<int>>(g, "n_list", "grids", {});
        c.n_ref = optional_or<int>(g, "n_ref", "grids", 0);
        c.beta = optional_or<double>(g, "beta", "grids", 1.0);
        c.delta0 = optional_or<double>(g, "delta0", "grids", 1e-4);
        if (g.contains("fit_window")) {
            auto w = require<std::vector<double>>(g, "fit_window", "grids");
            if (w.size() != 2) throw ConfigError("fit_window must be [lo, hi]");
            c.fit_window = std::make_pair(w[0], w[1]);
        }
        if (g.contains("kernel_list")) {
            for (const json& e : g.at("kernel_list")) {
                check_keys(e, {"activation", "dim", "sigma_u", "sigma_w"}, "kernel_list");
                KernelGridEntry k;
                k.activation = require<std::string>(e, "activation", "kernel_list");
                activation_from_name(k.activation);
                k.dim = require<int>(e, "dim", "kernel_list");
                k.sigma_u = require<double>(e, "sigma_u", "kernel_list");
                k.sigma_w = require<double>(e, "sigma_w", "kernel_list");
                c.kernel_list.push_back(k);
            }
        }
        for (int v : c.m_list) {
            if (v < 1) throw ConfigError("m_list entries must be positive");
        }
        for (int v : c.l_list) {
            if (v < 1) throw ConfigError("l_list entries must be positive");
        }
        for (int v : c.n_list) {
            if (v < 1) throw ConfigError("n_list entries must be positive");
        }
    }
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

json ExperimentConfig::to_json() const {
    json doc;
    doc["schema_version"] = 1;
    doc["experiment"] = experiment;
    doc["trials"] = trials;
    doc["master_seed"] = master_seed;
    doc["record_stride"] = record_stride;
    doc["output_path"] = output_path;
    if (has_model) {
        json m;
        m["scheme"] = scheme;
        m["depth"] = depth;
        m["horizon"] = horizon;
        m["dim"] = dim;
        m["n_tokens"] = n_tokens;
        m["width"] = width;
        m["activation"] = activation;
        m["sigma_u"] = sigma_u;
        m["sigma_w"] = sigma_w;
        m["attention_scale"] = attention_scale;
        m["attention_beta"] = attention_beta;
        m["ito_correction"] = ito_correction;
        doc["model"] = m;
    }
    json g;
    if (!m_list.empty()) g["m_list"] = m_list;
    if (!l_list.empty()) g["l_list"] = l_list;
    if (!n_list.empty()) g["n_list"] = n_list;
    if (n_ref > 0) g["n_ref"] = n_ref;
    g["beta"] = beta;
    g["delta0"] = delta0;
    if (fit_window) g["fit_window"] = {fit_window->first, fit_window->second};
    if (!kernel_list.empty()) {
        json list = json::array();
        for (const auto& k : kernel_list) {
            list.push_back({{"activation", k.activation},
                            {"dim", k.dim},
                            {"sigma_u", k.sigma_u},
                            {"sigma_w", k.sigma_w}});
        }
        g["kernel_list"] = list;
    }
    doc["grids"] = g;
    return doc;
}

std::string ExperimentConfig::canonical_text() const { return to_json().dump(); }

std::string ExperimentConfig::config_hash() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical_text())));
    return buf;
}

ModelConfig ExperimentConfig::to_model() const {
    if (!has_model) throw ConfigError("experiment \"" + experiment + "\" needs a model block");
    ModelConfig m;
    m.depth = depth;
    m.horizon = horizon;
    m.n_tokens = n_tokens;
    m.attention = AttentionParams::scaled_identity(dim, attention_beta, attention_scale);
    m.kernel = to_kernel();
    m.width = width;
    m.scheme = scheme_from_name(scheme);
    m.ito_correction = ito_correction;
    if (m.scheme == Scheme::transformer_discrete && width < 1) {
        throw ConfigError("transformer_discrete needs width >= 1");
    }
    return m;
}

KernelSpec ExperimentConfig::to_kernel() const {
    if (!has_model) throw ConfigError("experiment \"" + experiment + "\" needs a model block");
    return KernelSpec::make(activation, sigma_u, sigma_w, dim);
}

void CsvTable::add_row(std::vector<std::string> row) {
    if (row.size() != header.size()) {
        throw std::logic_error("CsvTable: row width mismatch");
    }
    rows.push_back(std::move(row));
}

void CsvTable::write(std::ostream& os, bool with_timestamp) const {
    if (with_timestamp) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[64];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        os << "# generated " << buf << "\n";
    }
    for (size_t i = 0; i < header.size(); ++i) {
        os << header[i] << (i + 1 < header.size() ? "," : "");
    }
    os << "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            os << row[i] << (i + 1 < row.size() ? "," : "");
        }
        os << "\n";
    }
}

void CsvTable::write_file(const std::string& path, bool with_timestamp) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    write(out, with_timestamp);
}

RateFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) {
        throw std::invalid_argument("fit_loglog: need >= 3 matching points");
    }
    RateFit fit;
    for (size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
            throw std::invalid_argument("fit_loglog: positive data required");
        }
        fit.x_values.push_back(std::log(x[i]));
        fit.y_values.push_back(std::log(y[i]));
    }
    const size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += fit.x_values[i];
        my += fit.y_values[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (fit.x_values[i] - mx) * (fit.x_values[i] - mx);
        sxy += (fit.x_values[i] - mx) * (fit.y_values[i] - my);
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssr = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double r = fit.y_values[i] - (fit.intercept + fit.slope * fit.x_values[i]);
        ssr += r * r;
    }
    fit.stderr_slope = n > 2 ? std::sqrt(ssr / (n - 2.0) / sxx) : 0.0;
    return fit;
}

namespace {

std::vector<std::string> provenance(const ExperimentConfig& c, long long trial) {
    return {c.experiment, std::to_string(c.master_seed), std::to_string(trial),
            c.config_hash()};
}

void warn_step_size(const ModelConfig& m) {
    const std::string w = m.step_size_warning();
    if (!w.empty()) std::cerr << "[spheredyn] warning: " << w << "\n";
}

TrajectoryRecord run_scheme(const ModelConfig& model, const SphericalCloud& init,
                            std::uint64_t master, std::uint64_t trial, int stride) {
    switch (model.scheme) {
        case Scheme::transformer_discrete:
            return run_transformer(model, init, master, trial, stride);
        case Scheme::euler_ambient:
            return run_euler(model, init, master, trial, stride, EulerMode::ambient);
        case Scheme::euler_projected:
            return run_euler(model, init, master, trial, stride, EulerMode::projected);
        case Scheme::pure_noise:
            return run_pure_noise(model.kernel, init, model.depth, model.horizon, master,
                                  trial, stride);
    }
    throw std::logic_error("run_scheme: unreachable");
}

}  // namespace

KernelTableResult run_kernel_table(const ExperimentConfig& config) {
    KernelTableResult res;
    res.csv.header = {"experiment", "master_seed",     "trial",
                      "config_hash", "activation",     "d",
                      "sigma",       "kappa_one",      "kappa_prime_one",
                      "lambda_one",  "lambda_bar"};
    const std::vector<std::string> acts = {"relu", "sigmoid", "tanh", "silu"};
    const std::vector<int> dims = {5, 64, 128};
    const std::vector<double> sigmas = {0.0, 0.1};
    for (const auto& act : acts) {
        for (int d : dims) {
            for (double s : sigmas) {
                const KernelSpec spec = KernelSpec::make(act, s, s, d);
                const KernelValues kv = lyapunov_constants(spec);
                res.rows.push_back({act, d, s, kv});
                auto row = provenance(config, -1);
                row.insert(row.end(),
                           {act, std::to_string(d), fmt_real(s), fmt_real(kv.kappa_one),
                            fmt_real(kv.kappa_prime_one), fmt_real(kv.lambda_one),
                            fmt_real(kv.lambda_bar)});
                res.csv.add_row(std::move(row));
            }
        }
    }
    return res;
}

SimulateResult run_simulate(const ExperimentConfig& config, int workers) {
    const ModelConfig model = config.to_model();
    warn_step_size(model);
    SimulateResult res;

    struct TrialOut {
        std::vector<double> energy;
        std::vector<CosineStats> cosine;
        std::vector<int> layers;
        bool aborted = false;
    };
    auto one = [&](int trial) -> TrialOut {
        TrialOut out;
        try {
            RngStream init_stream =
                derive_stream(config.master_seed, trial, 0, role::init);
            const SphericalCloud init =
                sample_uniform_sphere(init_stream, model.n_tokens, config.dim);
            const TrajectoryRecord rec = run_scheme(model, init, config.master_seed,
                                                    trial, config.record_stride);
            for (size_t s = 0; s < rec.states.size(); ++s) {
                SphericalCloud c(rec.states[s], model.scheme == Scheme::euler_ambient);
                out.energy.push_back(interaction_energy(c, config.beta));
                out.cosine.push_back(cosine_stats(c));
                out.layers.push_back(rec.recorded_layers[s]);
            }
        } catch (const Error& e) {
            out.aborted = true;
            std::cerr << "[spheredyn] trial " << trial << " aborted: " << e.what() << "\n";
        }
        return out;
    };
    const auto outs = map_trials<TrialOut>(config.trials, workers, one);

    res.csv.header = {"experiment", "master_seed", "trial",    "config_hash",
                      "layer",      "time",        "energy",   "cos_mean",
                      "cos_median", "cos_min"};
    const double dt = model.dt();
    for (int t = 0; t < config.trials; ++t) {
        const TrialOut& o = outs[t];
        if (o.aborted) continue;
        res.energies.push_back(o.energy);
        res.cosines.push_back(o.cosine);
        if (res.layers.empty()) {
            res.layers = o.layers;
            for (int l : o.layers) res.times.push_back(l * dt);
        }
        for (size_t s = 0; s < o.energy.size(); ++s) {
            auto row = provenance(config, t);
            row.insert(row.end(),
                       {std::to_string(o.layers[s]), fmt_real(o.layers[s] * dt),
                        fmt_real(o.energy[s]), fmt_real(o.cosine[s].mean),
                        fmt_real(o.cosine[s].median), fmt_real(o.cosine[s].min)});
            res.csv.add_row(std::move(row));
        }
    }
    return res;
}

DeepRateResult run_deep_rate(const ExperimentConfig& config, int workers) {
    if (config.l_list.size() < 3) {
        throw ConfigError("deep_rate needs l_list with >= 3 entries");
    }
    ModelConfig model = config.to_model();
    if (model.scheme != Scheme::euler_ambient) {
        throw ConfigError("deep_rate runs on the euler_ambient scheme");
    }
    DeepRateResult res;
    res.l_grid = config.l_list;
    res.csv.header = {"experiment", "master_seed", "trial", "config_hash", "record_type",
                      "L",          "gap",         "slope", "intercept",   "stderr_slope"};

    for (int L : config.l_list) {
        ModelConfig m = model;
        m.depth = L;
        warn_step_size(m);
        const std::uint64_t master_l =
            derive_seed(config.master_seed, static_cast<std::uint64_t>(L), 0, role::scratch);
        auto one = [&](int trial) -> double {
            try {
                RngStream init_stream = derive_stream(master_l, trial, 0, role::init);
                const SphericalCloud init =
                    sample_uniform_sphere(init_stream, m.n_tokens, config.dim);
                return run_refinement_ladder(m, 1, init, master_l, trial)[0];
            } catch (const Error& e) {
                std::cerr << "[spheredyn] deep_rate L=" << L << " trial " << trial
                          << " aborted: " << e.what() << "\n";
                return -1.0;
            }
        };
        const auto gaps_all = map_trials<double>(config.trials, workers, one);
        std::vector<double> gaps;
        for (int t = 0; t < config.trials; ++t) {
            if (gaps_all[t] >= 0.0) {
                gaps.push_back(gaps_all[t]);
                auto row = provenance(config, t);
                row.insert(row.end(), {"trial", std::to_string(L), fmt_real(gaps_all[t]),
                                       "", "", ""});
                res.csv.add_row(std::move(row));
            } else {
                ++res.aborted_trials;
            }
        }
        if (gaps.empty()) throw Error("deep_rate: every trial aborted at L=" + std::to_string(L));
        double mean = 0.0;
        for (double g : gaps) mean += g;
        mean /= gaps.size();
        res.gaps.push_back(gaps);
        res.mean_gap.push_back(mean);
        auto row = provenance(config, -1);
        row.insert(row.end(), {"level_mean", std::to_string(L), fmt_real(mean), "", "", ""});
        res.csv.add_row(std::move(row));
    }

    std::vector<double> lx(res.l_grid.begin(), res.l_grid.end());
    res.fit = fit_loglog(lx, res.mean_gap);
    auto row = provenance(config, -1);
    row.insert(row.end(), {"fit", "", "", fmt_real(res.fit.slope),
                           fmt_real(res.fit.intercept), fmt_real(res.fit.stderr_slope)});
    res.csv.add_row(std::move(row));
    return res;
}

WideRateResult run_wide_rate(const ExperimentConfig& config, int workers) {
    if (config.m_list.size() < 2) {
        throw ConfigError("wide_rate needs m_list with >= 2 entries");
    }
    const ModelConfig model = config.to_model();
    const KernelSpec spec = model.kernel;
    WideRateResult res;
    res.m_grid = config.m_list;
    res.csv.header = {"experiment", "master_seed", "trial", "config_hash", "curve",
                      "m",          "gap",         "slope", "intercept",   "stderr_slope"};

    RngStream frozen_stream = derive_stream(config.master_seed, 0, 0, role::init);
    const SphericalCloud frozen =
        sample_uniform_sphere(frozen_stream, model.n_tokens, config.dim);

    for (int m_width : config.m_list) {
        auto one = [&](int rep) -> double {
            RngStream s = derive_stream(config.master_seed, rep,
                                        static_cast<std::uint64_t>(m_width), role::mlp);
            const MlpParams mlp = sample_mlp(s, spec, m_width);
            const CoupledFields cf = coupled_layer_fields(mlp, spec, frozen.points);
            return (cf.finite_width - cf.limit).rowwise().squaredNorm().mean();
        };
        const auto gaps = map_trials<double>(config.trials, workers, one);
        double mean = 0.0;
        for (int t = 0; t < config.trials; ++t) {
            mean += gaps[t];
            auto row = provenance(config, t);
            row.insert(row.end(),
                       {"static", std::to_string(m_width), fmt_real(gaps[t]), "", "", ""});
            res.csv.add_row(std::move(row));
        }
        res.static_gap.push_back(mean / config.trials);
        auto row = provenance(config, -1);
        row.insert(row.end(), {"static_mean", std::to_string(m_width),
                               fmt_real(res.static_gap.back()), "", "", ""});
        res.csv.add_row(std::move(row));
    }
    std::vector<double> mx(res.m_grid.begin(), res.m_grid.end());
    res.static_fit = fit_loglog(mx, res.static_gap);
    {
        auto row = provenance(config, -1);
        row.insert(row.end(),
                   {"static_fit", "", "", fmt_real(res.static_fit.slope),
                    fmt_real(res.static_fit.intercept), fmt_real(res.static_fit.stderr_slope)});
        res.csv.add_row(std::move(row));
    }

    for (int m_width : config.m_list) {
        ModelConfig m = model;
        m.width = m_width;
        m.scheme = Scheme::transformer_discrete;
        const std::uint64_t master_m = derive_seed(
            config.master_seed, static_cast<std::uint64_t>(m_width), 1, role::scratch);
        auto one = [&](int trial) -> double {
            try {
                RngStream init_stream = derive_stream(master_m, trial, 0, role::init);
                const SphericalCloud init =
                    sample_uniform_sphere(init_stream, m.n_tokens, config.dim);
                const CoupledPairResult pair =
                    run_coupled_pair(m, init, master_m, trial, 0);
                double sup = 0.0;
                for (double e : pair.error_series) sup = std::max(sup, e);
                return sup;
            } catch (const Error& e) {
                std::cerr << "[spheredyn] wide_rate m=" << m_width << " trial " << trial
                          << " aborted: " << e.what() << "\n";
                return -1.0;
            }
        };
        const auto gaps_all = map_trials<double>(config.trials, workers, one);
        std::vector<double> gaps;
        for (int t = 0; t < config.trials; ++t) {
            if (gaps_all[t] >= 0.0) {
                gaps.push_back(gaps_all[t]);
                auto row = provenance(config, t);
                row.insert(row.end(), {"trajectory", std::to_string(m_width),
                                       fmt_real(gaps_all[t]), "", "", ""});
                res.csv.add_row(std::move(row));
            }
        }
        if (gaps.empty()) {
            throw Error("wide_rate: every trial aborted at m=" + std::to_string(m_width));
        }
        double mean = 0.0;
        for (double g : gaps) mean += g;
        res.trajectory_gap.push_back(mean / gaps.size());
        auto row = provenance(config, -1);
        row.insert(row.end(), {"trajectory_mean", std::to_string(m_width),
                               fmt_real(res.trajectory_gap.back()), "", "", ""});
        res.csv.add_row(std::move(row));
    }
    return res;
}

ChaosResult run_chaos(const ExperimentConfig& config, int workers) {
    if (config.n_list.size() < 3 || config.n_ref < 1) {
        throw ConfigError("chaos needs n_list (>= 3 entries) and n_ref");
    }
    long long total = config.n_ref;
    for (int n : config.n_list) {
        if (config.n_ref % n != 0) {
            throw ConfigError("chaos: every N in n_list must divide n_ref");
        }
        total += n;
    }
    if (total > 8192) throw ConfigError("chaos: union point count above the 8192 cap");
    const ModelConfig model = config.to_model();
    warn_step_size(model);
    if (model.scheme != Scheme::euler_projected) {
        throw ConfigError("chaos runs on the euler_projected scheme");
    }
    const int n_sys = static_cast<int>(config.n_list.size());
    const int d = config.dim;
    const double dt = model.dt();

    auto one = [&](int trial) -> std::vector<double> {
        RngStream init_stream = derive_stream(config.master_seed, trial, 0, role::init);
        const SphericalCloud ref_init =
            sample_uniform_sphere(init_stream, config.n_ref, d);
        std::vector<SphericalCloud> clouds;
        for (int n : config.n_list) {
            clouds.emplace_back(Mat(ref_init.points.topRows(n)));
        }
        clouds.push_back(ref_init);

        std::vector<double> max_w2(n_sys, 0.0);
        auto measure = [&]() {
            for (int s = 0; s < n_sys; ++s) {
                const W2Result w = w2_empirical(clouds[s], clouds.back());
                max_w2[s] = std::max(max_w2[s], w.distance * w.distance);
            }
        };
        measure();
        Mat union_pts(total, d);
        for (int l = 0; l < model.depth; ++l) {
            int off = 0;
            for (const auto& c : clouds) {
                union_pts.middleRows(off, c.n_tokens()) = c.points;
                off += c.n_tokens();
            }
            RngStream fs = derive_stream(config.master_seed, trial, l, role::field);
            const FieldSample field = sample_field(fs, model.kernel, union_pts);
            off = 0;
            for (auto& c : clouds) {
                c = euler_step(c, model.attention, model.kernel,
                               field.values.middleRows(off, c.n_tokens()), dt,
                               EulerMode::projected, model.ito_correction);
                off += c.n_tokens();
            }
            const int layer = l + 1;
            if (layer == model.depth ||
                (config.record_stride > 0 && layer % config.record_stride == 0)) {
                measure();
            }
        }
        return max_w2;
    };
    const auto per_trial = map_trials<std::vector<double>>(config.trials, workers, one);

    ChaosResult res;
    res.n_grid = config.n_list;
    res.csv.header = {"experiment", "master_seed", "trial",     "config_hash",
                      "record_type", "N",          "max_w2_sq", "slope",
                      "intercept",   "stderr_slope"};
    for (int s = 0; s < n_sys; ++s) {
        std::vector<double> vals;
        for (int t = 0; t < config.trials; ++t) {
            vals.push_back(per_trial[t][s]);
            auto row = provenance(config, t);
            row.insert(row.end(), {"trial", std::to_string(config.n_list[s]),
                                   fmt_real(per_trial[t][s]), "", "", ""});
            res.csv.add_row(std::move(row));
        }
        res.max_w2_sq.push_back(vals);
        double mean = 0.0;
        for (double v : vals) mean += v;
        res.mean_w2_sq.push_back(mean / vals.size());
        std::vector<double> sorted = vals;
        std::sort(sorted.begin(), sorted.end());
        const size_t m = sorted.size();
        res.median_w2_sq.push_back(
            m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]));
        auto row = provenance(config, -1);
        row.insert(row.end(), {"mean", std::to_string(config.n_list[s]),
                               fmt_real(res.mean_w2_sq.back()), "", "", ""});
        res.csv.add_row(std::move(row));
        auto row2 = provenance(config, -1);
        row2.insert(row2.end(), {"median", std::to_string(config.n_list[s]),
                                 fmt_real(res.median_w2_sq.back()), "", "", ""});
        res.csv.add_row(std::move(row2));
    }
    std::vector<double> nx(res.n_grid.begin(), res.n_grid.end());
    res.fit = fit_loglog(nx, res.mean_w2_sq);
    auto row = provenance(config, -1);
    row.insert(row.end(), {"fit", "", "", fmt_real(res.fit.slope),
                           fmt_real(res.fit.intercept), fmt_real(res.fit.stderr_slope)});
    res.csv.add_row(std::move(row));
    return res;
}

SyncResult run_sync(const ExperimentConfig& config, int workers) {
    const SimulateResult sim = run_simulate(config, workers);
    if (sim.energies.empty()) throw Error("sync: every trial aborted");

    SyncResult res;
    res.times = sim.times;
    const size_t n_rec = sim.times.size();
    res.mean_energy.assign(n_rec, 0.0);
    res.mean_cosine.assign(n_rec, CosineStats{});
    for (size_t t = 0; t < sim.energies.size(); ++t) {
        for (size_t s = 0; s < n_rec; ++s) {
            res.mean_energy[s] += sim.energies[t][s];
            res.mean_cosine[s].mean += sim.cosines[t][s].mean;
            res.mean_cosine[s].median += sim.cosines[t][s].median;
            res.mean_cosine[s].min += sim.cosines[t][s].min;
        }
    }
    const double inv = 1.0 / sim.energies.size();
    for (size_t s = 0; s < n_rec; ++s) {
        res.mean_energy[s] *= inv;
        res.mean_cosine[s].mean *= inv;
        res.mean_cosine[s].median *= inv;
        res.mean_cosine[s].min *= inv;
    }

    const double lo = config.fit_window ? config.fit_window->first : 0.0;
    const double hi = config.fit_window ? config.fit_window->second : config.horizon;
    res.decay = decay_rate_fit(res.times, res.mean_energy, lo, hi);

    const KernelSpec spec = config.to_kernel();
    res.lambda_bar = lyapunov_constants(spec).lambda_bar;
    try {
        const DissipationRate dr = dissipation_rate(spec, config.beta);
        res.dissipative = true;
        res.lambda_bar_prime = dr.lambda_bar_prime;
        res.boundary_value = dr.boundary_value;
    } catch (const NotDissipative&) {
        res.dissipative = false;
    }

    res.csv.header = {"experiment",  "master_seed", "trial",       "config_hash",
                      "record_type", "layer",       "time",        "mean_energy",
                      "cos_mean",    "cos_median",  "cos_min",     "decay_rate",
                      "r_squared",   "lambda_bar",  "lambda_bar_prime",
                      "boundary_value", "dissipative"};
    for (size_t s = 0; s < n_rec; ++s) {
        auto row = provenance(config, -1);
        row.insert(row.end(),
                   {"trace", std::to_string(sim.layers[s]), fmt_real(res.times[s]),
                    fmt_real(res.mean_energy[s]), fmt_real(res.mean_cosine[s].mean),
                    fmt_real(res.mean_cosine[s].median), fmt_real(res.mean_cosine[s].min),
                    "", "", "", "", "", ""});
        res.csv.add_row(std::move(row));
    }
    auto row = provenance(config, -1);
    row.insert(row.end(),
               {"summary", "", "", "", "", "", "", fmt_real(res.decay.rate),
                fmt_real(res.decay.r_squared), fmt_real(res.lambda_bar),
                res.dissipative ? fmt_real(res.lambda_bar_prime) : "not_dissipative",
                res.dissipative ? fmt_real(res.boundary_value) : "",
                res.dissipative ? "1" : "0"});
    res.csv.add_row(std::move(row));
    return res;
}

LyapunovResult run_lyapunov(const ExperimentConfig& config, int workers) {
    if (config.kernel_list.empty()) {
        throw ConfigError("lyapunov needs grids.kernel_list");
    }
    if (!config.has_model) throw ConfigError("lyapunov needs a model block (depth, horizon)");
    LyapunovResult res;
    res.csv.header = {"experiment", "master_seed", "trial",      "config_hash",
                      "activation", "d",           "sigma_u",    "sigma_w",
                      "lambda_hat", "stderr",      "lambda_one", "rel_error",
                      "intervals"};
    for (size_t e = 0; e < config.kernel_list.size(); ++e) {
        const KernelGridEntry& k = config.kernel_list[e];
        const KernelSpec spec = KernelSpec::make(k.activation, k.sigma_u, k.sigma_w, k.dim);
        const std::uint64_t master_e =
            derive_seed(config.master_seed, static_cast<std::uint64_t>(e), 0, role::scratch);
        const auto trials = map_trials<LyapunovTrial>(
            config.trials, workers, [&](int t) {
                return lyapunov_single_trial(spec, config.horizon, config.depth,
                                             config.delta0, master_e, t);
            });
        const LyapunovEstimate est = aggregate_lyapunov(trials);
        const double lambda_one = lyapunov_constants(spec).lambda_one;
        const double rel = std::abs(est.lambda_hat - lambda_one) /
                           std::max(std::abs(lambda_one), 1e-300);
        res.rows.push_back({k, est, lambda_one, rel});
        auto row = provenance(config, -1);
        row.insert(row.end(),
                   {k.activation, std::to_string(k.dim), fmt_real(k.sigma_u),
                    fmt_real(k.sigma_w), fmt_real(est.lambda_hat), fmt_real(est.stderr_),
                    fmt_real(lambda_one), fmt_real(rel), std::to_string(est.intervals)});
        res.csv.add_row(std::move(row));
    }
    return res;
}

std::string run_experiment_to_files(const ExperimentConfig& config, int workers,
                                    bool with_timestamp) {
    namespace fs = std::filesystem;
    fs::create_directories(config.output_path);
    const std::string csv_path =
        (fs::path(config.output_path) / (config.experiment + ".csv")).string();
    const std::string sidecar_path =
        (fs::path(config.output_path) / (config.experiment + ".config.json")).string();

    CsvTable csv;
    if (config.experiment == "kernel_table") {
        csv = run_kernel_table(config).csv;
    } else if (config.experiment == "simulate") {
        csv = run_simulate(config, workers).csv;
    } else if (config.experiment == "deep_rate") {
        csv = run_deep_rate(config, workers).csv;
    } else if (config.experiment == "wide_rate") {
        csv = run_wide_rate(config, workers).csv;
    } else if (config.experiment == "chaos") {
        csv = run_chaos(config, workers).csv;
    } else if (config.experiment == "sync") {
        csv = run_sync(config, workers).csv;
    } else if (config.experiment == "lyapunov") {
        csv = run_lyapunov(config, workers).csv;
    } else {
        throw ConfigError("unknown experiment \"" + config.experiment + "\"");
    }
    csv.write_file(csv_path, with_timestamp);

    json sidecar;
    sidecar["config"] = config.to_json();
    sidecar["config_hash"] = config.config_hash();
    std::ofstream out(sidecar_path, std::ios::binary);
    if (!out) throw Error("cannot write " + sidecar_path);
    out << sidecar.dump(2) << "\n";
    return csv_path;
}

}  // namespace spheredyn
