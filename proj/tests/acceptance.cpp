// Acceptance gate: end-to-end checks of the trained forecasters, the
// simulation lab, the metric layer, and the CLI. Each criterion prints one
// PASS/FAIL line; the process exits nonzero if any criterion fails.
//
// Usage: acceptance [criterion-number ...]  (no arguments = run all)

#include "ste/cli.hpp"
#include "ste/ergolab.hpp"
#include "ste/explain.hpp"
#include "ste/io.hpp"
#include "ste/metrics.hpp"
#include "ste/models.hpp"
#include "ste/nn.hpp"
#include "ste/rng.hpp"
#include "ste/spatial.hpp"
#include "ste/tensor.hpp"
#include "ste/training.hpp"
#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace ste;
using ste::testing::max_grad_rel_err;
using ste::testing::random_tensor;

namespace {

// ---------------------------------------------------------------- tolerances
constexpr double kKpssLo = 0.85;        // per-configuration KPSS pass-rate band
constexpr double kKpssHi = 1.0;
constexpr double kGammaMax = -0.1;      // mean coupling slope must sit below this
constexpr double kNegFracMin = 0.95;    // fraction of individually negative slopes
constexpr double kMergedFracMin = 0.90; // coupled pairs merged within the horizon
constexpr double kGradTol = 1e-4;       // finite-difference relative error
constexpr double kGradH = 1e-5;         // central-difference step
constexpr double kOracleTol = 1e-9;     // metric-vs-oracle agreement
constexpr double kConstMaeMax = 1e-2;   // constant-target median MAE
constexpr double kLossHalfRatio = 0.5;  // final/first epoch-mean loss bound
constexpr double kCovLo = 0.6, kCovHi = 1.0; // 95% PI empirical coverage band
constexpr double kLagSumTol = 1e-9;     // lag percentages must sum to 100

struct CheckFail : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& why) {
    if (!ok) throw CheckFail(why);
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// ------------------------------------------------------------ shared fixtures

// Ring-mixed tanh autoregression: y_{t,i} = tanh(0.8 * mix_i(y_{t-1}) + noise),
// mix = (0.5, 0.25, 0.25) over (self, left, right). Returns T*N row-major data.
std::vector<double> ring_tanh_series(std::int64_t t_total, std::int64_t n, std::uint64_t seed, double noise_sd) {
    Rng rng(seed);
    std::vector<double> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = rng.uniform(-1.0, 1.0);
    std::vector<double> raw;
    raw.reserve(static_cast<std::size_t>(t_total * n));
    for (std::int64_t t = 0; t < t_total; ++t) {
        std::vector<double> next(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            const double mix = 0.5 * y[static_cast<std::size_t>(i)] +
                               0.25 * y[static_cast<std::size_t>((i + 1) % n)] +
                               0.25 * y[static_cast<std::size_t>((i + n - 1) % n)];
            next[static_cast<std::size_t>(i)] = std::tanh(0.8 * mix + noise_sd * rng.normal());
        }
        y = next;
        raw.insert(raw.end(), y.begin(), y.end());
    }
    return raw;
}

std::vector<std::string> labels(std::int64_t n, const std::string& prefix) {
    std::vector<std::string> out;
    for (std::int64_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

EngressionModel small_mven(std::int64_t p, std::int64_t q, std::int64_t n, std::int64_t hidden, double noise_scale,
                           std::uint64_t seed) {
    ModelDims dims;
    dims.p = p;
    dims.q = q;
    dims.n_nodes = n;
    dims.d = 1;
    dims.d_hidden = hidden;
    NoiseConfig noise;
    noise.scale = noise_scale;
    GcnConfig gcn;
    GraphSpec graph;
    Rng rng(seed);
    return make_model(ModelKind::mven, dims, noise, gcn, graph, rng);
}

// ------------------------------------------------- criterion 1: KPSS band

std::string criterion_stability() {
    std::ostringstream detail;
    int combo = 0;
    for (ModelKind kind : {ModelKind::mven, ModelKind::gcen, ModelKind::sten}) {
        for (std::int64_t hidden : {16, 32, 64}) {
            ChainConfig cfg;
            cfg.kind = kind;
            cfg.n_nodes = 20;
            cfg.d_hidden = hidden;
            cfg.d_embed = 8;
            cfg.t_steps = 500;
            cfg.burn_in = 50;
            cfg.trials = 50;
            cfg.seed = 1000 + 17 * static_cast<std::uint64_t>(combo++);
            auto rep = stability_pass_rate(cfg);
            require(rep.explosive_trials == 0, kind_name(kind) + "/H" + std::to_string(hidden) + ": " +
                                                   std::to_string(rep.explosive_trials) + " explosive trials");
            require(rep.pass_rate >= kKpssLo && rep.pass_rate <= kKpssHi,
                    kind_name(kind) + "/H" + std::to_string(hidden) + ": KPSS pass rate " + num(rep.pass_rate) +
                        " outside [" + num(kKpssLo) + ", " + num(kKpssHi) + "]");
            if (combo > 1) detail << " ";
            detail << kind_name(kind) << "/H" << hidden << "=" << num(rep.pass_rate);
        }
    }
    return "pass rates " + detail.str();
}

// -------------------------------------------- criterion 2: coupling slopes

std::string criterion_coupling() {
    std::ostringstream detail;
    int idx = 0;
    for (ModelKind kind : {ModelKind::mven, ModelKind::gcen, ModelKind::sten}) {
        ChainConfig cfg;
        cfg.kind = kind;
        cfg.n_nodes = 20;
        cfg.d_hidden = 32;
        cfg.d_embed = 8;
        cfg.t_steps = 500;
        cfg.burn_in = 50;
        cfg.trials = 50;
        cfg.seed = 2000 + 31 * static_cast<std::uint64_t>(idx++);
        auto res = coupling(cfg);
        require(res.fitted_trials > 0, kind_name(kind) + ": no fitted coupling trials");
        require(res.mean_gamma < kGammaMax, kind_name(kind) + ": mean slope " + num(res.mean_gamma) +
                                                " not below " + num(kGammaMax));
        require(res.frac_negative >= kNegFracMin, kind_name(kind) + ": only " + num(100.0 * res.frac_negative) +
                                                      "% of slopes negative");
        require(res.frac_merged >= kMergedFracMin, kind_name(kind) + ": only " + num(100.0 * res.frac_merged) +
                                                       "% of pairs merged within " +
                                                       std::to_string(cfg.t_steps) + " steps");
        if (idx > 1) detail << " ";
        detail << kind_name(kind) << ": mean_gamma=" << num(res.mean_gamma)
               << " neg=" << num(100.0 * res.frac_negative) << "% merged=" << num(100.0 * res.frac_merged) << "%";
    }
    return detail.str();
}

// --------------------------------------------- criterion 3: gradient suite

std::string criterion_gradients() {
    double worst = 0.0;
    auto check = [&](const std::string& name, double err) {
        require(std::isfinite(err) && err < kGradTol,
                name + ": finite-difference relative error " + num(err) + " >= " + num(kGradTol));
        worst = std::max(worst, err);
    };

    // linear layer: y = x W^T + b
    for (int t = 0; t < 10; ++t) {
        Rng rng(300 + static_cast<std::uint64_t>(t));
        auto x = random_tensor({2, 3}, rng);
        auto W = random_tensor({4, 3}, rng);
        auto b = random_tensor({4}, rng);
        std::vector<TensorPtr> params{x, W, b};
        check("linear", max_grad_rel_err(params, [&] {
                  auto y = linear(x, W, b);
                  return reduce_sum(mul(y, y));
              }, kGradH));
    }

    // one LSTM step from a random state
    for (int t = 0; t < 10; ++t) {
        Rng rng(320 + static_cast<std::uint64_t>(t));
        auto p = make_lstm_params(2, 3, 0, rng, "g");
        auto x = random_tensor({2, 2}, rng);
        auto h0 = random_tensor({2, 3}, rng);
        auto c0 = random_tensor({2, 3}, rng);
        std::vector<TensorPtr> params{x, h0, c0};
        collect_params(p, params);
        check("lstm_step", max_grad_rel_err(params, [&] {
                  LstmState s{h0, c0};
                  auto nxt = lstm_step(x, s, p);
                  return add(reduce_sum(mul(nxt.h, nxt.h)), reduce_sum(mul(nxt.c, nxt.c)));
              }, kGradH));
    }

    // GCN embedding on a 4-node ring
    for (int t = 0; t < 10; ++t) {
        Rng rng(340 + static_cast<std::uint64_t>(t));
        GraphSpec g;
        g.n = 4;
        g.A = {0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0};
        ModelDims dims;
        dims.p = 2;
        dims.n_nodes = 4;
        dims.d = 2;
        dims.d_embed = 3;
        NoiseConfig noise;
        GcnConfig gcn;
        Rng mk(800 + static_cast<std::uint64_t>(t));
        auto m = make_model(ModelKind::gcen, dims, noise, gcn, g, mk);
        auto y = random_tensor({1, 2, 4, 2}, rng);
        std::vector<TensorPtr> params{y};
        for (auto& th : m.gcn_theta) params.push_back(th);
        for (auto& sf : m.gcn_self) params.push_back(sf);
        for (auto& bi : m.gcn_bias) params.push_back(bi);
        params.push_back(m.gcn_proj_W);
        params.push_back(m.gcn_proj_b);
        check("gcn_embed", max_grad_rel_err(params, [&] {
                  auto z = gcn_embed(m, y);
                  return reduce_sum(mul(z, z));
              }, kGradH));
    }

    // STAR embedding with a random weights matrix (seeds keep the random
    // preactivations away from the ReLU kink at the FD step size)
    for (int t = 0; t < 10; ++t) {
        Rng rng(360 + static_cast<std::uint64_t>(t));
        const std::int64_t n = 4;
        std::vector<double> w(static_cast<std::size_t>(n * n), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j)
                if (i != j) w[static_cast<std::size_t>(i * n + j)] = rng.uniform(0.1, 1.0);
        GraphSpec g;
        g.n = n;
        g.max_lag = 2;
        g.W = w;
        g.W_powers = matrix_powers(w, n, 2);
        ModelDims dims;
        dims.p = 2;
        dims.n_nodes = n;
        dims.d = 2;
        dims.d_embed = 3;
        NoiseConfig noise;
        GcnConfig gcn;
        Rng mk(860 + static_cast<std::uint64_t>(t));
        auto m = make_model(ModelKind::sten, dims, noise, gcn, g, mk);
        auto y = random_tensor({1, 2, n, 2}, rng);
        std::vector<TensorPtr> params{y};
        for (auto& phi : m.star_phi) params.push_back(phi);
        check("star_embed", max_grad_rel_err(params, [&] {
                  auto z = star_embed(m, y);
                  return reduce_sum(mul(z, z));
              }, kGradH));
    }

    // dense output head: z = W_zh h + b_z
    for (int t = 0; t < 10; ++t) {
        Rng rng(380 + static_cast<std::uint64_t>(t));
        auto p = make_lstm_params(2, 3, 4, rng, "h");
        auto h = random_tensor({2, 3}, rng);
        std::vector<TensorPtr> params{h, p.W_zh, p.b_z};
        check("dense_head", max_grad_rel_err(params, [&] {
                  auto z = lstm_output(p, h);
                  return reduce_sum(mul(z, z));
              }, kGradH));
    }

    // full energy loss over three members
    for (int t = 0; t < 10; ++t) {
        Rng rng(400 + static_cast<std::uint64_t>(t));
        const double beta = 0.5 + 0.15 * t; // covers (0.5, 1.85) inside the legal (0,2)
        auto target = random_tensor({2, 2, 3, 1}, rng, -1.0, 1.0, false);
        std::vector<TensorPtr> members;
        for (int j = 0; j < 3; ++j) members.push_back(random_tensor({2, 2, 3, 1}, rng));
        check("energy_loss", max_grad_rel_err(members, [&] { return energy_loss(target, members, beta); }, kGradH));
    }

    return "6 components x 10 random points, worst relative error " + num(worst);
}

// --------------------------------------------- criterion 4: metric oracles

// Exact integral of (F_M(z) - 1{z >= y})^2 dz for the empirical step CDF.
double crps_step_cdf_integral(double y, const std::vector<double>& members) {
    std::vector<double> pts = members;
    pts.push_back(y);
    std::sort(pts.begin(), pts.end());
    const double m = static_cast<double>(members.size());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double a = pts[i], b = pts[i + 1];
        if (b <= a) continue;
        const double mid = 0.5 * (a + b);
        double cdf = 0.0;
        for (double x : members) cdf += (x <= mid) ? 1.0 : 0.0;
        cdf /= m;
        const double heav = (mid >= y) ? 1.0 : 0.0;
        total += (cdf - heav) * (cdf - heav) * (b - a);
    }
    return total;
}

// Rank by counting: 1 + #{strictly smaller} + half the number of equal others.
std::vector<double> counting_ranks(const std::vector<double>& scores) {
    std::vector<double> r(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        double below = 0.0, tied = 0.0;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (j == i) continue;
            if (scores[j] < scores[i]) below += 1.0;
            else if (scores[j] == scores[i]) tied += 1.0;
        }
        r[i] = 1.0 + below + 0.5 * tied;
    }
    return r;
}

std::string criterion_metric_oracles() {
    double worst = 0.0;
    auto check = [&](const std::string& name, double got, double want) {
        const double err = std::abs(got - want);
        require(std::isfinite(err) && err < kOracleTol,
                name + ": |" + num(got) + " - " + num(want) + "| = " + num(err) + " >= " + num(kOracleTol));
        worst = std::max(worst, err);
    };

    // CRPS against the step-CDF integral on 100 random ensembles, M <= 8
    {
        Rng rng(41);
        for (int c = 0; c < 100; ++c) {
            const std::size_t m = 1 + rng.index(8);
            std::vector<double> members(m);
            for (auto& v : members) v = rng.uniform(-3.0, 3.0);
            const double y = rng.uniform(-3.5, 3.5);
            check("crps", crps_ensemble(y, members), crps_step_cdf_integral(y, members));
        }
    }

    // Winkler score: width plus 2/alpha times the overshoot on either side
    {
        Rng rng(42);
        for (int c = 0; c < 200; ++c) {
            const double lo = rng.uniform(-2.0, 0.5);
            const double hi = lo + rng.uniform(0.0, 3.0);
            const double y = rng.uniform(-3.0, 3.0);
            const double alpha = rng.uniform(0.02, 0.5);
            double want = hi - lo;
            if (y < lo) want += 2.0 / alpha * (lo - y);
            if (y > hi) want += 2.0 / alpha * (y - hi);
            check("winkler", winkler(y, lo, hi, alpha), want);
        }
    }

    // pinball loss: elementwise max{tau e, (tau-1) e} averaged by hand
    {
        Rng rng(43);
        for (int c = 0; c < 50; ++c) {
            const std::size_t n = 1 + rng.index(12);
            const double tau = rng.uniform(0.05, 0.95);
            std::vector<double> y(n), f(n);
            for (auto& v : y) v = rng.uniform(-2.0, 2.0);
            for (auto& v : f) v = rng.uniform(-2.0, 2.0);
            double want = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = y[i] - f[i];
                want += std::max(tau * e, (tau - 1.0) * e);
            }
            want /= static_cast<double>(n);
            check("pinball", pinball(y, f, tau), want);
        }
    }

    // PIT: strict count of members below the observation over M + 1
    {
        Rng rng(44);
        for (int c = 0; c < 100; ++c) {
            const std::size_t m = 1 + rng.index(9);
            std::vector<double> members(m);
            for (auto& v : members) v = rng.uniform(-1.0, 1.0);
            const double y = (c % 5 == 0) ? members[rng.index(m)] : rng.uniform(-1.2, 1.2);
            double below = 0.0;
            for (double v : members) below += (v < y) ? 1.0 : 0.0;
            check("pit", pit_value(y, members), below / (static_cast<double>(m) + 1.0));
        }
    }

    // empirical coverage with inclusive interval endpoints
    {
        Rng rng(45);
        for (int c = 0; c < 50; ++c) {
            const std::size_t n = 1 + rng.index(20);
            std::vector<double> y(n), lo(n), hi(n);
            for (std::size_t i = 0; i < n; ++i) {
                lo[i] = rng.uniform(-1.0, 0.0);
                hi[i] = lo[i] + rng.uniform(0.0, 1.5);
                y[i] = (i % 7 == 0) ? lo[i] : rng.uniform(-1.5, 1.5);
            }
            double covered = 0.0;
            for (std::size_t i = 0; i < n; ++i) covered += (y[i] >= lo[i] && y[i] <= hi[i]) ? 1.0 : 0.0;
            check("coverage", empirical_coverage(y, lo, hi), covered / static_cast<double>(n));
        }
    }

    // Moran's I: n/S0 times the cross-product ratio, summed by brute force
    {
        Rng rng(46);
        for (int c = 0; c < 50; ++c) {
            const std::int64_t n = 3 + static_cast<std::int64_t>(rng.index(8));
            std::vector<double> w(static_cast<std::size_t>(n * n), 0.0);
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < n; ++j)
                    if (i != j) w[static_cast<std::size_t>(i * n + j)] = rng.uniform(0.0, 1.0);
            std::vector<double> y(static_cast<std::size_t>(n));
            for (auto& v : y) v = rng.normal();
            double mean = 0.0;
            for (double v : y) mean += v;
            mean /= static_cast<double>(n);
            double s0 = 0.0, cross = 0.0, ss = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                ss += (y[static_cast<std::size_t>(i)] - mean) * (y[static_cast<std::size_t>(i)] - mean);
                for (std::int64_t j = 0; j < n; ++j) {
                    if (i == j) continue;
                    s0 += w[static_cast<std::size_t>(i * n + j)];
                    cross += w[static_cast<std::size_t>(i * n + j)] * (y[static_cast<std::size_t>(i)] - mean) *
                             (y[static_cast<std::size_t>(j)] - mean);
                }
            }
            check("moran", morans_i(y, w, n), static_cast<double>(n) * cross / (s0 * ss));
        }
    }

    // MCB mean ranks against per-case counting ranks, ties averaged
    {
        Rng rng(47);
        const std::size_t k = 6, n_cases = 40;
        std::vector<std::vector<double>> scores(k, std::vector<double>(n_cases));
        for (std::size_t c = 0; c < n_cases; ++c) {
            for (std::size_t m = 0; m < k; ++m) scores[m][c] = rng.uniform(0.0, 4.0);
            if (c % 3 == 0) scores[1][c] = scores[4][c];
            if (c % 5 == 0) scores[0][c] = scores[2][c] = scores[3][c];
        }
        auto res = mcb(scores);
        std::vector<double> want(k, 0.0);
        for (std::size_t c = 0; c < n_cases; ++c) {
            std::vector<double> col(k);
            for (std::size_t m = 0; m < k; ++m) col[m] = scores[m][c];
            auto r = counting_ranks(col);
            for (std::size_t m = 0; m < k; ++m) want[m] += r[m];
        }
        for (std::size_t m = 0; m < k; ++m) check("mcb_rank", res.mean_ranks[m], want[m] / static_cast<double>(n_cases));
    }

    return "crps/winkler/pinball/pit/coverage/moran/mcb all within " + num(kOracleTol) + ", worst gap " + num(worst);
}

// ------------------------------------------ criterion 5: synthetic recovery

std::string criterion_recovery() {
    const std::int64_t n = 10, t_total = 300, train_end = 240;
    auto raw = ring_tanh_series(t_total, n, 71, 0.4);
    auto panel = make_panel(std::move(raw), labels(t_total, "t"), labels(n, "node"), 1, train_end, t_total);
    auto windows = make_windows(panel, 1, 1);

    auto model = small_mven(1, 1, n, 32, 1.0, 5);
    TrainConfig cfg; // defaults: 100 epochs, batch 32, lr 1e-3, M_train 2, beta 1
    cfg.seed = 9;
    auto res = train(model, windows, cfg);
    require(res.epochs_run == cfg.epochs, "training stopped early at epoch " + std::to_string(res.epochs_run));
    model.node_mean = panel.node_mean;
    model.node_std = panel.node_std;

    const std::int64_t m_ens = 100;
    SampleOptions opt;
    opt.lower_q = 0.025;
    opt.upper_q = 0.975;
    Rng eval_root(501);
    Rng clim_root(502);

    double model_crps = 0.0, clim_crps = 0.0, covered = 0.0;
    std::int64_t cells = 0;
    for (std::int64_t t = train_end; t < t_total; ++t) {
        // one-step forecast from the standardized previous row
        std::vector<double> prev(static_cast<std::size_t>(n));
        for (std::int64_t j = 0; j < n; ++j) prev[static_cast<std::size_t>(j)] = panel.value(t - 1, j);
        auto z = standardize(prev, panel.node_mean, panel.node_std);
        auto window = make_tensor({1, 1, n, 1}, z);
        auto ens = sample_ensemble(model, window, m_ens, eval_root.derive(static_cast<std::uint64_t>(t)), opt);

        Rng clim_rng = clim_root.derive(static_cast<std::uint64_t>(t));
        for (std::int64_t j = 0; j < n; ++j) {
            const double actual = panel.value(t, j);
            std::vector<double> members(static_cast<std::size_t>(m_ens));
            for (std::int64_t m = 0; m < m_ens; ++m)
                members[static_cast<std::size_t>(m)] = ens.trajectories[static_cast<std::size_t>(m * n + j)];
            model_crps += crps_ensemble(actual, members);

            // climatology: resample the node's training marginal
            std::vector<double> clim(static_cast<std::size_t>(m_ens));
            for (auto& v : clim)
                v = panel.value(static_cast<std::int64_t>(clim_rng.index(static_cast<std::size_t>(train_end))), j);
            clim_crps += crps_ensemble(actual, clim);

            const std::size_t sj = static_cast<std::size_t>(j);
            covered += (actual >= ens.lower[sj] && actual <= ens.upper[sj]) ? 1.0 : 0.0;
            ++cells;
        }
    }
    model_crps /= static_cast<double>(cells);
    clim_crps /= static_cast<double>(cells);
    covered /= static_cast<double>(cells);

    require(model_crps < clim_crps, "test CRPS " + num(model_crps) + " not below climatology " + num(clim_crps));
    require(covered >= kCovLo && covered <= kCovHi,
            "95% PI coverage " + num(covered) + " outside [" + num(kCovLo) + ", " + num(kCovHi) + "]");
    return "test CRPS " + num(model_crps) + " < climatology " + num(clim_crps) + ", 95% PI coverage " + num(covered);
}

// ------------------------------------------- criterion 6: training sanity

std::string criterion_training_sanity() {
    // Constant-target panel: after two seed rows every row equals the node
    // constant, so each window's target is exactly that constant.
    const std::int64_t n = 2, t_total = 36, p = 2;
    const double c[2] = {0.8, -0.4};
    std::vector<double> raw;
    for (std::int64_t t = 0; t < t_total; ++t)
        for (std::int64_t j = 0; j < n; ++j) {
            const double base = c[static_cast<std::size_t>(j)];
            raw.push_back(t < p ? base + (t == 0 ? 0.6 : -0.6) * (1.0 + 0.3 * static_cast<double>(j)) : base);
        }
    auto panel = make_panel(std::move(raw), labels(t_total, "t"), labels(n, "node"), 1, t_total, t_total);
    auto windows = make_windows(panel, p, 1);
    for (const auto& w : windows.pairs)
        for (std::int64_t j = 0; j < n; ++j) {
            const double back = w.target[static_cast<std::size_t>(j)] * panel.node_std[static_cast<std::size_t>(j)] +
                                panel.node_mean[static_cast<std::size_t>(j)];
            require(std::abs(back - c[static_cast<std::size_t>(j)]) < 1e-12, "fixture target is not constant");
        }

    auto model = small_mven(p, 1, n, 8, 0.0, 11); // zero-noise hook: deterministic sampler
    TrainConfig cfg;
    cfg.p = p;
    cfg.q = 1;
    cfg.epochs = 100;
    cfg.batch_size = 16;
    cfg.lr = 1e-2;
    cfg.seed = 3;
    auto res = train(model, windows, cfg);
    require(static_cast<int>(res.loss_trace.size()) == cfg.epochs, "loss trace length mismatch");
    model.node_mean = panel.node_mean;
    model.node_std = panel.node_std;

    double mae = 0.0;
    std::int64_t cells = 0;
    for (std::size_t i = 0; i < windows.pairs.size(); ++i) {
        auto [input, target] = batch_windows(windows, {i});
        (void)target;
        auto ens = sample_ensemble(model, input, 5, Rng(50).derive(i));
        for (std::int64_t j = 0; j < n; ++j) {
            mae += std::abs(ens.median[static_cast<std::size_t>(j)] - c[static_cast<std::size_t>(j)]);
            ++cells;
        }
    }
    mae /= static_cast<double>(cells);
    require(mae < kConstMaeMax,
            "constant-target median MAE " + num(mae) + " >= " + num(kConstMaeMax) + " after 100 epochs");

    // AR(1)-mixing fixture: the epoch-mean loss must at least halve. High
    // persistence keeps the one-step noise small against the marginal spread,
    // the mixing is self-dominant so the spatial-free kind's per-node temporal
    // core can reach the conditional mean, and the injected-noise scale sits
    // near the process's conditional spread so a well-fit sampler can reach a
    // loss far below the start.
    const std::int64_t an = 5, at = 160;
    Rng gen(23);
    std::vector<double> y(static_cast<std::size_t>(an));
    for (auto& v : y) v = gen.uniform(-0.5, 0.5);
    std::vector<double> ar_raw;
    for (std::int64_t t = 0; t < at; ++t) {
        std::vector<double> next(static_cast<std::size_t>(an));
        for (std::int64_t i = 0; i < an; ++i) {
            const double mix = 0.9 * y[static_cast<std::size_t>(i)] +
                               0.05 * y[static_cast<std::size_t>((i + 1) % an)] +
                               0.05 * y[static_cast<std::size_t>((i + an - 1) % an)];
            next[static_cast<std::size_t>(i)] = 0.995 * mix + 0.1 * gen.normal();
        }
        y = next;
        ar_raw.insert(ar_raw.end(), y.begin(), y.end());
    }
    auto ar_panel = make_panel(std::move(ar_raw), labels(at, "t"), labels(an, "node"), 1, at, at);
    auto ar_windows = make_windows(ar_panel, 1, 1);
    auto ar_model = small_mven(1, 1, an, 16, 0.25, 31);
    TrainConfig ar_cfg;
    ar_cfg.epochs = 300;
    ar_cfg.batch_size = 32;
    ar_cfg.lr = 1e-2;
    ar_cfg.seed = 17;
    auto ar_res = train(ar_model, ar_windows, ar_cfg);
    const double ratio = ar_res.loss_trace.back() / ar_res.loss_trace.front();
    require(ratio <= kLossHalfRatio, "AR fixture loss ratio " + num(ratio) + " (first " +
                                         num(ar_res.loss_trace.front()) + ", last " +
                                         num(ar_res.loss_trace.back()) + ") above " + num(kLossHalfRatio));

    return "constant-target median MAE " + num(mae) + ", AR loss ratio " + num(ratio) + " (epoch 1 " +
           num(ar_res.loss_trace.front()) + " -> final " + num(ar_res.loss_trace.back()) + ")";
}

// ---------------------------------------------- criterion 7: determinism

std::string criterion_determinism() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path("acceptance_tmp") / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // panel file in the pinned CSV dialect
    const std::int64_t n = 3, t_total = 60;
    auto raw = ring_tanh_series(t_total, n, 13, 0.4);
    std::ostringstream csv;
    csv << "timestamp";
    for (std::int64_t j = 0; j < n; ++j) csv << ",n" << j;
    csv << "\n";
    for (std::int64_t t = 0; t < t_total; ++t) {
        csv << "t" << t;
        for (std::int64_t j = 0; j < n; ++j) csv << "," << format_double(raw[static_cast<std::size_t>(t * n + j)]);
        csv << "\n";
    }
    const fs::path panel = dir / "panel.csv";
    {
        std::ofstream f(panel, std::ios::binary);
        f << csv.str();
    }

    auto cli = [&](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        require(code == kExitOk, "command failed (" + std::to_string(code) + "): " + err.str());
    };
    cli({"train", "--panel", panel.string(), "--kind", "mven", "--p", "2", "--horizon", "2", "--train-end", "48",
         "--epochs", "5", "--d-hidden", "8", "--out", (dir / "run").string(), "--seed", "21", "--threads", "1"});
    const std::string model = (dir / "run" / "model.json").string();
    for (const char* sub : {"a", "b"})
        cli({"evaluate", "--panel", panel.string(), "--model", model, "--out", (dir / sub).string(), "--ensemble",
             "9", "--repeats", "3", "--seed", "5", "--threads", "1"});

    auto slurp = [&](const fs::path& path) {
        std::ifstream f(path, std::ios::binary);
        require(f.good(), "missing artifact " + path.string());
        std::ostringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    const std::string report_a = slurp(dir / "a" / "metric_report.json");
    require(report_a == slurp(dir / "b" / "metric_report.json"), "metric_report.json differs between reruns");
    require(slurp(dir / "a" / "runs.csv") == slurp(dir / "b" / "runs.csv"), "runs.csv differs between reruns");
    return "repeated evaluate at --threads 1 reproduced metric_report.json and runs.csv byte-for-byte (" +
           std::to_string(report_a.size()) + " bytes)";
}

// ------------------------------------- criterion 8: explainability algebra

std::string criterion_explainability() {
    // percentages sum to 100 on random spatiotemporal models
    double worst_gap = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(600 + static_cast<std::uint64_t>(trial));
        const std::int64_t n = 3 + static_cast<std::int64_t>(rng.index(6));
        const std::int64_t max_lag = 1 + static_cast<std::int64_t>(rng.index(3));
        std::vector<double> w(static_cast<std::size_t>(n * n), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j)
                if (i != j) w[static_cast<std::size_t>(i * n + j)] = rng.uniform(0.0, 1.0);
        GraphSpec g;
        g.n = n;
        g.max_lag = max_lag;
        g.W = w;
        g.W_powers = matrix_powers(w, n, max_lag);
        ModelDims dims;
        dims.p = 1;
        dims.q = 1;
        dims.n_nodes = n;
        dims.d = 1;
        dims.d_embed = 2 + static_cast<std::int64_t>(rng.index(4));
        dims.d_hidden = 8;
        NoiseConfig noise;
        GcnConfig gcn;
        Rng mk(700 + static_cast<std::uint64_t>(trial));
        auto m = make_model(ModelKind::sten, dims, noise, gcn, g, mk);
        auto imp = lag_importance(m);
        require(static_cast<std::int64_t>(imp.pct.size()) == max_lag + 1, "lag percentage count mismatch");
        double sum = 0.0;
        for (double v : imp.pct) {
            require(v >= 0.0, "negative lag percentage");
            sum += v;
        }
        const double gap = std::abs(sum - 100.0);
        require(gap < kLagSumTol, "lag percentages sum to " + num(sum));
        worst_gap = std::max(worst_gap, gap);
    }

    // diffusion-dominant fixture: each node copies 0.8 x the mean of its ring
    // neighbours plus noise, so the signal lives in spatial lag 1
    const std::int64_t n = 6, t_total = 140;
    std::vector<double> w(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        w[static_cast<std::size_t>(i * n + (i + 1) % n)] = 0.5;
        w[static_cast<std::size_t>(i * n + (i + n - 1) % n)] = 0.5;
    }
    Rng gen(77);
    std::vector<double> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = gen.uniform(-1.0, 1.0);
    std::vector<double> raw;
    for (std::int64_t t = 0; t < t_total; ++t) {
        std::vector<double> next(static_cast<std::size_t>(n), 0.0);
        for (std::int64_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::int64_t j = 0; j < n; ++j)
                acc += w[static_cast<std::size_t>(i * n + j)] * y[static_cast<std::size_t>(j)];
            next[static_cast<std::size_t>(i)] = 0.8 * acc + 0.1 * gen.normal();
        }
        y = next;
        raw.insert(raw.end(), y.begin(), y.end());
    }
    auto panel = make_panel(std::move(raw), labels(t_total, "t"), labels(n, "node"), 1, t_total, t_total);
    auto windows = make_windows(panel, 1, 1);
    GraphSpec g;
    g.n = n;
    g.max_lag = 1;
    g.W = w;
    g.W_powers = matrix_powers(w, n, 1);
    ModelDims dims;
    dims.p = 1;
    dims.q = 1;
    dims.n_nodes = n;
    dims.d = 1;
    dims.d_embed = 4;
    dims.d_hidden = 8;
    NoiseConfig noise;
    GcnConfig gcn;
    Rng mk(3);
    auto model = make_model(ModelKind::sten, dims, noise, gcn, g, mk);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 16;
    cfg.lr = 1e-2;
    cfg.seed = 12;
    train(model, windows, cfg);
    auto imp = lag_importance(model);
    require(imp.pct.size() == 2, "diffusion fixture lag count mismatch");
    require(std::abs(imp.pct[0] + imp.pct[1] - 100.0) < kLagSumTol, "diffusion fixture percentages do not sum to 100");
    require(imp.pct[1] > imp.pct[0], "neighbour lag P_1=" + num(imp.pct[1]) + " does not dominate P_0=" +
                                         num(imp.pct[0]) + " on the diffusion fixture");
    return "20 random models sum to 100 (worst gap " + num(worst_gap) + "); diffusion fixture P_1=" +
           num(imp.pct[1]) + " > P_0=" + num(imp.pct[0]);
}

struct Criterion {
    int id;
    const char* name;
    double budget_s; // 0 = no stated runtime target
    std::function<std::string()> fn;
};

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "ergodic stability band", 600.0, criterion_stability},
        {2, "coupling contraction", 300.0, criterion_coupling},
        {3, "gradient suite", 60.0, criterion_gradients},
        {4, "metric oracles", 30.0, criterion_metric_oracles},
        {5, "synthetic recovery", 300.0, criterion_recovery},
        {6, "training sanity", 0.0, criterion_training_sanity},
        {7, "determinism", 0.0, criterion_determinism},
        {8, "explainability algebra", 0.0, criterion_explainability},
    };

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0, ran = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        std::string verdict, detail;
        try {
            detail = c.fn();
            verdict = "PASS";
        } catch (const std::exception& e) {
            detail = e.what();
            verdict = "FAIL";
        }
        const double elapsed =
            std::chrono::duration_cast<std::chrono::duration<double>>(std::chrono::steady_clock::now() - t0).count();
        if (verdict == "PASS" && c.budget_s > 0.0 && elapsed > c.budget_s) {
            verdict = "FAIL";
            detail = "runtime " + num(elapsed) + " s exceeds the " + num(c.budget_s) + " s target (" + detail + ")";
        }
        if (verdict == "FAIL") ++failures;
        std::printf("criterion %d (%s): %s — %s [%.1f s]\n", c.id, c.name, verdict.c_str(), detail.c_str(), elapsed);
        std::fflush(stdout);
    }
    std::printf("acceptance: %d/%d criteria passed\n", ran - failures, ran);
    return failures == 0 ? 0 : 1;
}
