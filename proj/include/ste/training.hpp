#pragma once

#include "ste/models.hpp"
#include "ste/rng.hpp"
#include "ste/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ste {

// Panel of T observations over N nodes with D features each, plus the
// standardization statistics fitted on the training slice alone.
struct PanelDataset {
    std::vector<double> raw; // T*N*D, time-major: raw[(t*N + j)*D + f]
    std::vector<std::string> timestamps;
    std::vector<std::string> node_ids;
    std::int64_t t_total = 0;
    std::int64_t n_nodes = 0;
    std::int64_t d = 1;
    std::int64_t train_end = 0; // rows [0, train_end) are trainable
    std::int64_t val_end = 0;   // rows [train_end, val_end) are validation

    double value(std::int64_t t, std::int64_t node, std::int64_t f = 0) const {
        return raw[static_cast<std::size_t>((t * n_nodes + node) * d + f)];
    }

    std::vector<double> node_mean, node_std; // N*D, fitted on [0, train_end)
};

// Validates the splits, fits per-node statistics on the training slice, and
// rejects zero-variance or non-finite training columns. Values at or beyond
// train_end are never inspected.
PanelDataset make_panel(std::vector<double> raw, std::vector<std::string> timestamps,
                        std::vector<std::string> node_ids, std::int64_t d, std::int64_t train_end,
                        std::int64_t val_end);

// (x - mean) / std per node/feature column; `values` is any whole number of
// rows laid out like PanelDataset::raw.
std::vector<double> standardize(const std::vector<double>& values, const std::vector<double>& node_mean,
                                const std::vector<double>& node_std);
std::vector<double> unstandardize(const std::vector<double>& values, const std::vector<double>& node_mean,
                                  const std::vector<double>& node_std);

struct Window {
    std::vector<double> input;  // p*N*D, standardized
    std::vector<double> target; // q*N*D, standardized
    std::int64_t origin = 0;    // first forecast row
};

struct WindowSet {
    std::vector<Window> pairs;
    std::int64_t p = 0, q = 0, n_nodes = 0, d = 1;
};

// Overlapping (lookback, horizon) pairs drawn from the standardized training
// slice: inputs rows [t-p, t), targets rows [t, t+q) for t = p .. train_end-q.
WindowSet make_windows(const PanelDataset& panel, std::int64_t p, std::int64_t q);

// Stack the selected windows into batch tensors [B,p,N,D] / [B,q,N,D].
std::pair<TensorPtr, TensorPtr> batch_windows(const WindowSet& windows, const std::vector<std::size_t>& indices);

struct TrainConfig {
    std::int64_t p = 1, q = 1;
    int m_train = 2;      // forward passes per batch
    double beta = 1.0;    // energy-score exponent, in (0,2)
    int epochs = 100;
    std::int64_t batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    int patience = 0; // early stop after this many epochs without improvement; 0 = off
};

// Empirical energy score (accuracy minus sharpness), averaged over the batch.
// Norms are L2 over each window's flattened (q,N,D) block raised to beta.
TensorPtr energy_loss(const TensorPtr& target, const std::vector<TensorPtr>& members, double beta);

struct TrainResult {
    std::vector<double> loss_trace; // per-epoch mean batch loss
    int epochs_run = 0;
};

// Algorithm: per epoch, a seed-derived shuffle of the window set; per batch,
// m_train forward passes with independent noise, the energy loss, one Adam
// step. Non-finite losses abort with the epoch/batch context.
TrainResult train(EngressionModel& model, const WindowSet& windows, const TrainConfig& cfg);

// One hyperparameter candidate for the sweep.
struct Candidate {
    std::string label;
    ModelKind kind = ModelKind::mven;
    ModelDims dims;
    NoiseConfig noise;
    GcnConfig gcn;
    TrainConfig train_cfg;
};

struct SweepOutcome {
    std::size_t best_index = 0;
    std::vector<double> val_crps;      // NaN for candidates that failed
    std::vector<std::string> failures; // empty string = trained cleanly
    std::vector<std::int64_t> param_counts;
};

// Trains every candidate on the panel's training windows and scores the
// sample CRPS of an m_eval-member ensemble against the validation rows in
// original units. Ties go to the smaller parameter count, then listed order.
// Candidates that diverge are excluded with the failure recorded.
SweepOutcome grid_sweep(const std::vector<Candidate>& candidates, const PanelDataset& panel, const GraphSpec& graph,
                        std::int64_t m_eval, std::uint64_t eval_seed);

} // namespace ste
