#pragma once

#include "ste/models.hpp"
#include "ste/nn.hpp"
#include "ste/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ste {

// Closed-loop simulation setup: a one-step (p=q=1, D=1) recurrent model run
// autonomously from zero initial conditions with fresh standard-normal noise
// every step.
struct ChainConfig {
    ModelKind kind = ModelKind::gcen;
    std::int64_t n_nodes = 20;  // N in [10, 60]
    std::int64_t d_hidden = 32; // {16, 32, 64}
    std::int64_t d_embed = 8;
    std::int64_t t_steps = 500;
    std::int64_t burn_in = 50;
    int trials = 200; // reducible (e.g. 50) for CI without moving the bands
    std::uint64_t seed = 0;
    double hidden_noise_sigma = 0.0; // optional small hidden/cell perturbation
};

// Random parameters that satisfy the contraction assumption by construction:
// Xavier weights with the forget-gate block rescaled so that
// sigmoid(||W_fh||_inf + ||W_fy||_inf + ||b_f||_inf) < 1 with margin.
EngressionModel make_chain_model(const ChainConfig& cfg, Rng& rng);

// sigmoid of the forget-gate operator-norm sum for one layer; < 1 satisfies
// the stability assumption.
double forget_gate_margin(const LstmParams& layer);

// Rescales W_fh, W_fy, b_f so their infinity-norm sum hits `target_sum`.
void rescale_forget_gate(LstmParams& layer, double target_sum);

struct ChainRun {
    std::vector<double> series; // (t_steps - burn_in) x N, time-major
    std::int64_t t_kept = 0;
    std::int64_t n_nodes = 0;
    bool explosive = false;     // non-finite state encountered
    std::int64_t explode_step = -1;
    double max_abs_state = 0.0; // sup over time of max |Y|,|h|,|c|
};

// Iterates the chain from Y0 = h0 = c0 = 0, discarding the burn-in.
ChainRun run_chain_model(const EngressionModel& model, const ChainConfig& cfg, Rng& noise_rng);
ChainRun run_chain(const ChainConfig& cfg, std::uint64_t trial_seed);

// Level-stationarity KPSS with a Bartlett-kernel long-run variance at
// l = floor(12 (T/100)^{1/4}) and a log-linear p-value interpolation of the
// standard critical table, clamped to [0.01, 0.10].
struct KpssResult {
    double statistic = 0.0;
    double p_value = 0.10;
    bool reject_at_5pct = false;
    int lag = 0;
};
KpssResult kpss(const std::vector<double>& series);

// Fraction of the node series in a time-major block with KPSS p > 0.05.
double kpss_pass_fraction(const std::vector<double>& series, std::int64_t t, std::int64_t n);

struct StabilityReport {
    double pass_rate = 0.0; // over all trials x nodes
    int explosive_trials = 0;
    double max_abs_state = 0.0;
    std::vector<double> per_trial_pass; // per trial fraction of passing nodes
};

// Runs cfg.trials independent chains (per-trial derived seeds) and aggregates
// the KPSS pass rate; explosive trials count every node as failing.
StabilityReport stability_pass_rate(const ChainConfig& cfg);

struct CouplingTrial {
    double gamma = 0.0, kappa = 0.0; // ln d_t ~ gamma t + kappa
    std::int64_t window_len = 0;     // points with d_t > 1e-6 in the fit
    bool merged = false;             // distance dropped below 1e-6
    bool skipped = false;            // e.g. identical initial states
    std::string note;
};

struct CouplingResult {
    std::vector<CouplingTrial> trials;
    double mean_gamma = 0.0;    // over fitted trials
    double frac_negative = 0.0; // fitted trials with gamma < 0
    double frac_merged = 0.0;   // non-skipped trials that merged
    int fitted_trials = 0;
};

// OLS fit of ln d_t against t over the window where d_t > 1e-6; d[0] is the
// initial distance. Trials merged before any window forms are left unfitted.
CouplingTrial fit_coupling(const std::vector<double>& d);

// Generic synchronous coupling: both chains receive identical per-step noise
// streams. `step` maps (state, rng) -> next state; `dist` measures the gap.
using CoupleStep = std::function<std::vector<double>(const std::vector<double>&, Rng&)>;
using CoupleDist = std::function<double(const std::vector<double>&, const std::vector<double>&)>;
CouplingTrial couple_generic(const CoupleStep& step, const CoupleDist& dist, const std::vector<double>& s0,
                             const std::vector<double>& s0_prime, std::int64_t t_steps, const Rng& noise_root);

// Model-based coupling per cfg: S0 = 0, S0' ~ U(-1,1) entrywise, distance
// ||dY||_2 + ||dh||_2 + ||dc||_2.
CouplingResult coupling(const ChainConfig& cfg);

} // namespace ste
