#include "ste/ergolab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ste {

namespace {

constexpr double kMergeThreshold = 1e-6;
// target operator-norm sum for the forget gate: sigmoid(0.2007) = 0.55
constexpr double kForgetTargetSum = 0.20067069546215124;

double inf_norm_rows(const TensorPtr& t) {
    if (t->shape.size() == 1) {
        double s = 0.0;
        for (double v : t->data) s = std::max(s, std::abs(v));
        return s; // vector: max |entry| (row sums of diag embedding)
    }
    const std::int64_t rows = t->shape[0];
    const std::int64_t cols = static_cast<std::int64_t>(t->data.size()) / rows;
    double best = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) s += std::abs(t->data[static_cast<std::size_t>(r * cols + c)]);
        best = std::max(best, s);
    }
    return best;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Random symmetric edge set, no self loops; every pair joined with prob 1/2.
std::vector<double> random_adjacency(std::int64_t n, Rng& rng) {
    std::vector<double> a(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = i + 1; j < n; ++j)
            if (rng.uniform(0.0, 1.0) < 0.5) a[static_cast<std::size_t>(i * n + j)] = a[static_cast<std::size_t>(j * n + i)] = 1.0;
    return a;
}

// Row-stochastic, zero diagonal: uniform positive entries normalized per row.
std::vector<double> random_row_stochastic(std::int64_t n, Rng& rng) {
    std::vector<double> w(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double u = rng.uniform(1e-3, 1.0);
            w[static_cast<std::size_t>(i * n + j)] = u;
            total += u;
        }
        for (std::int64_t j = 0; j < n; ++j) w[static_cast<std::size_t>(i * n + j)] /= total;
    }
    return w;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

} // namespace

double forget_gate_margin(const LstmParams& layer) {
    return sigmoid(inf_norm_rows(layer.W_fh) + inf_norm_rows(layer.W_fy) + inf_norm_rows(layer.b_f));
}

void rescale_forget_gate(LstmParams& layer, double target_sum) {
    const double s = inf_norm_rows(layer.W_fh) + inf_norm_rows(layer.W_fy) + inf_norm_rows(layer.b_f);
    if (s <= 0.0) return; // already zero: sigmoid(0) = 0.5 < 1
    const double k = target_sum / s;
    for (auto* t : {&layer.W_fh, &layer.W_fy, &layer.b_f})
        for (auto& v : (*t)->data) v *= k;
}

EngressionModel make_chain_model(const ChainConfig& cfg, Rng& rng) {
    if (cfg.n_nodes < 1) throw std::invalid_argument("make_chain_model: need at least one node");
    if (cfg.t_steps <= cfg.burn_in) throw std::invalid_argument("make_chain_model: t_steps must exceed burn_in");

    GraphSpec graph;
    graph.n = cfg.n_nodes;
    if (cfg.kind == ModelKind::gcen) {
        graph.A = random_adjacency(cfg.n_nodes, rng);
    } else if (cfg.kind == ModelKind::sten) {
        graph.W = random_row_stochastic(cfg.n_nodes, rng);
        graph.max_lag = 1;
        graph.W_powers = matrix_powers(graph.W, cfg.n_nodes, 1);
    }

    ModelDims dims;
    dims.p = 1;
    dims.q = 1;
    dims.n_nodes = cfg.n_nodes;
    dims.d = 1;
    dims.d_embed = cfg.d_embed;
    dims.d_hidden = cfg.d_hidden;
    dims.lstm_layers = 1;

    NoiseConfig noise; // additive standard normal
    GcnConfig gcn;
    auto model = make_model(cfg.kind, dims, noise, gcn, graph, rng);
    for (auto& layer : model.lstm.layers) rescale_forget_gate(layer, kForgetTargetSum);
    return model;
}

namespace {

// One closed-loop transition. Returns false when the state went non-finite.
bool chain_step(const EngressionModel& m, TensorPtr& y, std::vector<LstmState>& states, Rng& noise_rng,
                double hidden_sigma) {
    TensorPtr z;
    switch (m.kind) {
    case ModelKind::mven: z = y; break;
    case ModelKind::gcen: z = gcn_embed(m, y); break;
    case ModelKind::sten: z = star_embed(m, y); break;
    }
    auto x = inject_noise(z, m.noise, noise_rng);
    auto flat = reshape(x, {m.dims.n_nodes, x->shape[3]});
    auto h_top = lstm_run_step(m.lstm, flat, states);
    if (hidden_sigma > 0.0) {
        for (auto& st : states) {
            for (auto& v : st.h->data) v += hidden_sigma * noise_rng.normal();
            for (auto& v : st.c->data) v += hidden_sigma * noise_rng.normal();
        }
        h_top = states.back().h;
    }
    auto out = lstm_output(m.lstm.layers.back(), h_top); // [N, 1]
    y = reshape(out, {1, 1, m.dims.n_nodes, 1});
    if (!all_finite(y->data)) return false;
    for (const auto& st : states)
        if (!all_finite(st.h->data) || !all_finite(st.c->data)) return false;
    return true;
}

} // namespace

ChainRun run_chain_model(const EngressionModel& model, const ChainConfig& cfg, Rng& noise_rng) {
    if (model.dims.p != 1 || model.dims.q != 1 || model.dims.d != 1)
        throw std::invalid_argument("run_chain_model: chains need a p=q=1, D=1 model");
    NoGradGuard guard;
    ChainRun run;
    run.n_nodes = model.dims.n_nodes;
    run.t_kept = cfg.t_steps - cfg.burn_in;
    run.series.reserve(static_cast<std::size_t>(run.t_kept * run.n_nodes));

    TensorPtr y = zeros({1, 1, model.dims.n_nodes, 1});
    std::vector<LstmState> states;
    for (const auto& layer : model.lstm.layers)
        states.push_back(lstm_zero_state(model.dims.n_nodes, layer.hidden_dim()));

    for (std::int64_t t = 1; t <= cfg.t_steps; ++t) {
        if (!chain_step(model, y, states, noise_rng, cfg.hidden_noise_sigma)) {
            run.explosive = true;
            run.explode_step = t;
            return run;
        }
        run.max_abs_state = std::max(run.max_abs_state, max_abs(y->data));
        for (const auto& st : states)
            run.max_abs_state = std::max({run.max_abs_state, max_abs(st.h->data), max_abs(st.c->data)});
        if (t > cfg.burn_in) run.series.insert(run.series.end(), y->data.begin(), y->data.end());
    }
    return run;
}

ChainRun run_chain(const ChainConfig& cfg, std::uint64_t trial_seed) {
    Rng rng(trial_seed);
    auto model = make_chain_model(cfg, rng);
    Rng noise = rng.derive(0xC0FFEE);
    return run_chain_model(model, cfg, noise);
}

KpssResult kpss(const std::vector<double>& series) {
    const auto t = static_cast<std::int64_t>(series.size());
    if (t < 20) throw std::invalid_argument("kpss: need at least 20 observations");

    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(t);

    std::vector<double> e(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) e[i] = series[i] - mean;

    double s = 0.0, num = 0.0;
    for (double v : e) {
        s += v;
        num += s * s;
    }
    num /= static_cast<double>(t) * static_cast<double>(t);

    KpssResult res;
    res.lag = static_cast<int>(std::floor(12.0 * std::pow(static_cast<double>(t) / 100.0, 0.25)));

    double gamma0 = 0.0;
    for (double v : e) gamma0 += v * v;
    gamma0 /= static_cast<double>(t);
    double lrv = gamma0;
    for (int j = 1; j <= res.lag; ++j) {
        double gj = 0.0;
        for (std::int64_t i = j; i < t; ++i) gj += e[static_cast<std::size_t>(i)] * e[static_cast<std::size_t>(i - j)];
        gj /= static_cast<double>(t);
        lrv += 2.0 * (1.0 - static_cast<double>(j) / (res.lag + 1.0)) * gj;
    }

    if (lrv <= 0.0) {
        // constant (or degenerate) series: stationary by convention
        res.statistic = 0.0;
        res.p_value = 0.10;
        res.reject_at_5pct = false;
        return res;
    }

    res.statistic = num / lrv;

    // level-stationarity critical values and log-linear p interpolation
    static const double crit[4] = {0.347, 0.463, 0.574, 0.739};
    static const double pval[4] = {0.10, 0.05, 0.025, 0.01};
    if (res.statistic <= crit[0]) {
        res.p_value = 0.10;
    } else if (res.statistic >= crit[3]) {
        res.p_value = 0.01;
    } else {
        for (int i = 0; i < 3; ++i) {
            if (res.statistic <= crit[i + 1]) {
                const double frac = (res.statistic - crit[i]) / (crit[i + 1] - crit[i]);
                res.p_value = std::exp(std::log(pval[i]) + frac * (std::log(pval[i + 1]) - std::log(pval[i])));
                break;
            }
        }
    }
    res.reject_at_5pct = res.p_value < 0.05;
    return res;
}

double kpss_pass_fraction(const std::vector<double>& series, std::int64_t t, std::int64_t n) {
    if (t * n != static_cast<std::int64_t>(series.size()))
        throw std::invalid_argument("kpss_pass_fraction: series is not T*N");
    std::int64_t passed = 0;
    std::vector<double> col(static_cast<std::size_t>(t));
    for (std::int64_t j = 0; j < n; ++j) {
        for (std::int64_t i = 0; i < t; ++i) col[static_cast<std::size_t>(i)] = series[static_cast<std::size_t>(i * n + j)];
        if (kpss(col).p_value > 0.05) ++passed;
    }
    return static_cast<double>(passed) / static_cast<double>(n);
}

StabilityReport stability_pass_rate(const ChainConfig& cfg) {
    if (cfg.trials < 1) throw std::invalid_argument("stability_pass_rate: trials must be positive");
    StabilityReport rep;
    Rng master(cfg.seed);
    std::int64_t passed = 0, total = 0;
    for (int trial = 0; trial < cfg.trials; ++trial) {
        Rng trial_rng = master.derive(static_cast<std::uint64_t>(trial));
        auto model = make_chain_model(cfg, trial_rng);
        Rng noise = trial_rng.derive(0xC0FFEE);
        auto run = run_chain_model(model, cfg, noise);
        rep.max_abs_state = std::max(rep.max_abs_state, run.max_abs_state);
        if (run.explosive) {
            ++rep.explosive_trials;
            rep.per_trial_pass.push_back(0.0);
            total += cfg.n_nodes;
            continue;
        }
        const double frac = kpss_pass_fraction(run.series, run.t_kept, run.n_nodes);
        rep.per_trial_pass.push_back(frac);
        passed += static_cast<std::int64_t>(std::llround(frac * static_cast<double>(cfg.n_nodes)));
        total += cfg.n_nodes;
    }
    rep.pass_rate = static_cast<double>(passed) / static_cast<double>(total);
    return rep;
}

CouplingTrial fit_coupling(const std::vector<double>& d) {
    CouplingTrial trial;
    if (d.empty() || d[0] <= kMergeThreshold) {
        trial.skipped = true;
        trial.note = "chains merged at t=0";
        trial.merged = true;
        return trial;
    }
    std::vector<double> xs, ys;
    for (std::size_t t = 0; t < d.size(); ++t) {
        if (d[t] > kMergeThreshold) {
            xs.push_back(static_cast<double>(t));
            ys.push_back(std::log(d[t]));
        }
        if (d[t] < kMergeThreshold) trial.merged = true;
    }
    trial.window_len = static_cast<std::int64_t>(xs.size());
    if (xs.size() < 2) {
        trial.skipped = true;
        trial.note = "fit window shorter than two points";
        return trial;
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    trial.gamma = sxy / sxx;
    trial.kappa = my - trial.gamma * mx;
    return trial;
}

CouplingTrial couple_generic(const CoupleStep& step, const CoupleDist& dist, const std::vector<double>& s0,
                             const std::vector<double>& s0_prime, std::int64_t t_steps, const Rng& noise_root) {
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(t_steps) + 1);
    d.push_back(dist(s0, s0_prime));
    if (d[0] <= kMergeThreshold) return fit_coupling(d); // skipped with note

    std::vector<double> a = s0, b = s0_prime;
    for (std::int64_t t = 0; t < t_steps; ++t) {
        // identical noise streams: both chains get a copy of the same child rng
        Rng na = noise_root.derive(static_cast<std::uint64_t>(t));
        Rng nb = noise_root.derive(static_cast<std::uint64_t>(t));
        a = step(a, na);
        b = step(b, nb);
        if (!all_finite(a) || !all_finite(b)) {
            CouplingTrial trial;
            trial.skipped = true;
            trial.note = "state went non-finite at step " + std::to_string(t + 1);
            return trial;
        }
        d.push_back(dist(a, b));
    }
    return fit_coupling(d);
}

CouplingResult coupling(const ChainConfig& cfg) {
    if (cfg.trials < 1) throw std::invalid_argument("coupling: trials must be positive");
    CouplingResult result;
    Rng master(cfg.seed);

    const std::int64_t n = cfg.n_nodes, h = cfg.d_hidden;
    const std::size_t y_len = static_cast<std::size_t>(n);
    const std::size_t h_len = static_cast<std::size_t>(n * h);
    const std::size_t state_len = y_len + 2 * h_len; // [Y | h | c], single layer

    for (int trial = 0; trial < cfg.trials; ++trial) {
        Rng trial_rng = master.derive(static_cast<std::uint64_t>(trial));
        auto model = make_chain_model(cfg, trial_rng);

        std::vector<double> s0(state_len, 0.0), s0p(state_len);
        for (auto& v : s0p) v = trial_rng.uniform(-1.0, 1.0);

        auto step = [&model, &cfg, n, h, y_len, h_len](const std::vector<double>& s, Rng& rng) {
            NoGradGuard guard;
            auto y = make_tensor({1, 1, n, 1}, std::vector<double>(s.begin(), s.begin() + y_len));
            std::vector<LstmState> states(1);
            states[0].h = make_tensor({n, h}, std::vector<double>(s.begin() + y_len, s.begin() + y_len + h_len));
            states[0].c = make_tensor({n, h}, std::vector<double>(s.begin() + y_len + h_len, s.end()));
            chain_step(model, y, states, rng, cfg.hidden_noise_sigma);
            std::vector<double> out;
            out.reserve(s.size());
            out.insert(out.end(), y->data.begin(), y->data.end());
            out.insert(out.end(), states[0].h->data.begin(), states[0].h->data.end());
            out.insert(out.end(), states[0].c->data.begin(), states[0].c->data.end());
            return out;
        };
        auto dist = [y_len, h_len](const std::vector<double>& a, const std::vector<double>& b) {
            auto seg = [&](std::size_t lo, std::size_t hi) {
                double ss = 0.0;
                for (std::size_t i = lo; i < hi; ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
                return std::sqrt(ss);
            };
            return seg(0, y_len) + seg(y_len, y_len + h_len) + seg(y_len + h_len, y_len + 2 * h_len);
        };

        Rng noise_root = trial_rng.derive(0xC0FFEE);
        result.trials.push_back(couple_generic(step, dist, s0, s0p, cfg.t_steps, noise_root));
    }

    double gamma_sum = 0.0;
    int fitted = 0, negative = 0, merged = 0, considered = 0;
    for (const auto& t : result.trials) {
        if (!t.skipped) {
            ++considered;
            if (t.merged) ++merged;
        }
        if (t.skipped || t.window_len < 2) continue;
        ++fitted;
        gamma_sum += t.gamma;
        if (t.gamma < 0.0) ++negative;
    }
    result.fitted_trials = fitted;
    result.mean_gamma = fitted > 0 ? gamma_sum / fitted : 0.0;
    result.frac_negative = fitted > 0 ? static_cast<double>(negative) / fitted : 0.0;
    result.frac_merged = considered > 0 ? static_cast<double>(merged) / considered : 0.0;
    return result;
}

} // namespace ste
