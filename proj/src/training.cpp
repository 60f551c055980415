#include "ste/training.hpp"

#include "ste/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ste {

PanelDataset make_panel(std::vector<double> raw, std::vector<std::string> timestamps,
                        std::vector<std::string> node_ids, std::int64_t d, std::int64_t train_end,
                        std::int64_t val_end) {
    PanelDataset p;
    p.n_nodes = static_cast<std::int64_t>(node_ids.size());
    p.d = d;
    if (p.n_nodes < 1 || d < 1) throw std::invalid_argument("make_panel: need at least one node and one feature");
    const std::int64_t row = p.n_nodes * d;
    if (row == 0 || static_cast<std::int64_t>(raw.size()) % row != 0)
        throw std::invalid_argument("make_panel: raw size is not a whole number of rows");
    p.t_total = static_cast<std::int64_t>(raw.size()) / row;
    if (static_cast<std::int64_t>(timestamps.size()) != p.t_total)
        throw std::invalid_argument("make_panel: timestamp count does not match row count");
    if (!(0 < train_end && train_end <= val_end && val_end <= p.t_total))
        throw std::invalid_argument("make_panel: splits must satisfy 0 < train_end <= val_end <= T");
    p.raw = std::move(raw);
    p.timestamps = std::move(timestamps);
    p.node_ids = std::move(node_ids);
    p.train_end = train_end;
    p.val_end = val_end;

    p.node_mean.assign(static_cast<std::size_t>(row), 0.0);
    p.node_std.assign(static_cast<std::size_t>(row), 0.0);
    for (std::int64_t c = 0; c < row; ++c) {
        double mean = 0.0;
        for (std::int64_t t = 0; t < train_end; ++t) {
            const double v = p.raw[static_cast<std::size_t>(t * row + c)];
            if (!std::isfinite(v))
                throw std::invalid_argument("make_panel: non-finite training value for node '" +
                                            p.node_ids[static_cast<std::size_t>(c / d)] + "' at row " +
                                            std::to_string(t));
            mean += v;
        }
        mean /= static_cast<double>(train_end);
        double var = 0.0;
        for (std::int64_t t = 0; t < train_end; ++t) {
            const double e = p.raw[static_cast<std::size_t>(t * row + c)] - mean;
            var += e * e;
        }
        var /= static_cast<double>(train_end);
        const double sd = std::sqrt(var);
        if (sd <= 0.0)
            throw std::invalid_argument("make_panel: node '" + p.node_ids[static_cast<std::size_t>(c / d)] +
                                        "' is constant over the training slice; standardization is undefined");
        p.node_mean[static_cast<std::size_t>(c)] = mean;
        p.node_std[static_cast<std::size_t>(c)] = sd;
    }
    return p;
}

namespace {

void check_stats(const std::vector<double>& values, const std::vector<double>& node_mean,
                 const std::vector<double>& node_std, const char* who) {
    if (node_mean.size() != node_std.size() || node_mean.empty())
        throw std::invalid_argument(std::string(who) + ": malformed statistics");
    if (values.size() % node_mean.size() != 0)
        throw std::invalid_argument(std::string(who) + ": values are not a whole number of rows");
}

} // namespace

std::vector<double> standardize(const std::vector<double>& values, const std::vector<double>& node_mean,
                                const std::vector<double>& node_std) {
    check_stats(values, node_mean, node_std, "standardize");
    std::vector<double> out(values.size());
    const std::size_t row = node_mean.size();
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = (values[i] - node_mean[i % row]) / node_std[i % row];
    return out;
}

std::vector<double> unstandardize(const std::vector<double>& values, const std::vector<double>& node_mean,
                                  const std::vector<double>& node_std) {
    check_stats(values, node_mean, node_std, "unstandardize");
    std::vector<double> out(values.size());
    const std::size_t row = node_mean.size();
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * node_std[i % row] + node_mean[i % row];
    return out;
}

WindowSet make_windows(const PanelDataset& panel, std::int64_t p, std::int64_t q) {
    if (p < 1 || q < 1) throw std::invalid_argument("make_windows: p and q must be positive");
    if (panel.train_end < p + q)
        throw std::invalid_argument("make_windows: training slice has " + std::to_string(panel.train_end) +
                                    " rows but lookback+horizon needs at least " + std::to_string(p + q));
    WindowSet ws;
    ws.p = p;
    ws.q = q;
    ws.n_nodes = panel.n_nodes;
    ws.d = panel.d;
    const std::int64_t row = panel.n_nodes * panel.d;

    // standardize the training slice only; rows at or past train_end are never read
    std::vector<double> train_rows(panel.raw.begin(), panel.raw.begin() + panel.train_end * row);
    auto z = standardize(train_rows, panel.node_mean, panel.node_std);

    for (std::int64_t t = p; t <= panel.train_end - q; ++t) {
        Window w;
        w.origin = t;
        w.input.assign(z.begin() + (t - p) * row, z.begin() + t * row);
        w.target.assign(z.begin() + t * row, z.begin() + (t + q) * row);
        ws.pairs.push_back(std::move(w));
    }
    return ws;
}

std::pair<TensorPtr, TensorPtr> batch_windows(const WindowSet& windows, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("batch_windows: empty index list");
    const std::int64_t b = static_cast<std::int64_t>(indices.size());
    const std::int64_t in_block = windows.p * windows.n_nodes * windows.d;
    const std::int64_t out_block = windows.q * windows.n_nodes * windows.d;
    std::vector<double> in(static_cast<std::size_t>(b * in_block)), out(static_cast<std::size_t>(b * out_block));
    for (std::int64_t i = 0; i < b; ++i) {
        const auto& w = windows.pairs.at(indices[static_cast<std::size_t>(i)]);
        std::copy(w.input.begin(), w.input.end(), in.begin() + i * in_block);
        std::copy(w.target.begin(), w.target.end(), out.begin() + i * out_block);
    }
    return {make_tensor({b, windows.p, windows.n_nodes, windows.d}, std::move(in)),
            make_tensor({b, windows.q, windows.n_nodes, windows.d}, std::move(out))};
}

TensorPtr energy_loss(const TensorPtr& target, const std::vector<TensorPtr>& members, double beta) {
    if (members.size() < 2) throw std::invalid_argument("energy_loss: need at least two ensemble members");
    if (!(beta > 0.0 && beta < 2.0)) throw std::invalid_argument("energy_loss: beta must lie in (0,2)");
    if (target->shape.size() != 4) throw std::invalid_argument("energy_loss: target must be [B,q,N,D]");
    for (const auto& mem : members)
        if (mem->shape != target->shape)
            throw std::invalid_argument("energy_loss: member shape " + shape_str(mem->shape) +
                                        " does not match target " + shape_str(target->shape));

    const std::int64_t b = target->shape[0];
    const std::int64_t block = target->shape[1] * target->shape[2] * target->shape[3];
    const double m = static_cast<double>(members.size());

    auto flat_target = reshape(target, {b, block});
    std::vector<TensorPtr> flat;
    flat.reserve(members.size());
    for (const auto& mem : members) flat.push_back(reshape(mem, {b, block}));

    TensorPtr accuracy; // (1/M) sum_j ||Y - Yhat_j||^beta, per batch row
    for (const auto& f : flat) {
        auto term = rowwise_norm_pow(sub(flat_target, f), beta);
        accuracy = accuracy ? add(accuracy, term) : term;
    }
    accuracy = scale(accuracy, 1.0 / m);

    // The double sum over ordered pairs divided by 2M(M-1) equals the j<k sum
    // divided by M(M-1).
    TensorPtr sharpness;
    for (std::size_t j = 0; j < flat.size(); ++j)
        for (std::size_t k = j + 1; k < flat.size(); ++k) {
            auto term = rowwise_norm_pow(sub(flat[j], flat[k]), beta);
            sharpness = sharpness ? add(sharpness, term) : term;
        }
    sharpness = scale(sharpness, 1.0 / (m * (m - 1.0)));

    return reduce_mean(sub(accuracy, sharpness));
}

TrainResult train(EngressionModel& model, const WindowSet& windows, const TrainConfig& cfg) {
    if (windows.pairs.empty()) throw std::invalid_argument("train: empty window set");
    if (windows.p != model.dims.p || windows.q != model.dims.q || windows.n_nodes != model.dims.n_nodes ||
        windows.d != model.dims.d)
        throw std::invalid_argument("train: window dimensions do not match the model");
    if (cfg.m_train < 2) throw std::invalid_argument("train: m_train must be at least 2");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be positive");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    Adam opt(model.parameters(), adam_cfg);
    Rng root(cfg.seed);

    std::vector<std::size_t> order(windows.pairs.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng epoch_rng = root.derive(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[epoch_rng.index(i)]); // Fisher-Yates with the epoch stream

        double epoch_loss = 0.0;
        std::int64_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
            auto [input, target] = batch_windows(windows, idx);

            Rng batch_rng = epoch_rng.derive(static_cast<std::uint64_t>(batches));
            double loss_value = std::numeric_limits<double>::quiet_NaN();
            try {
                std::vector<TensorPtr> members;
                members.reserve(static_cast<std::size_t>(cfg.m_train));
                for (int j = 0; j < cfg.m_train; ++j) members.push_back(forward(model, input, batch_rng, true));
                auto loss = energy_loss(target, members, cfg.beta);
                loss_value = loss->data[0];
                if (!std::isfinite(loss_value)) throw std::runtime_error("non-finite loss value");
                opt.zero_grad();
                backward(loss);
                opt.step();
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                                         std::to_string(batches + 1) + ": " + e.what());
            }
            epoch_loss += loss_value;
            ++batches;
        }
        epoch_loss /= static_cast<double>(batches);
        result.loss_trace.push_back(epoch_loss);
        result.epochs_run = epoch + 1;

        if (cfg.patience > 0) {
            if (epoch_loss < best) {
                best = epoch_loss;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    }
    return result;
}

SweepOutcome grid_sweep(const std::vector<Candidate>& candidates, const PanelDataset& panel, const GraphSpec& graph,
                        std::int64_t m_eval, std::uint64_t eval_seed) {
    if (candidates.empty()) throw std::invalid_argument("grid_sweep: no candidates");
    if (panel.val_end <= panel.train_end) throw std::invalid_argument("grid_sweep: empty validation slice");
    if (m_eval < 1) throw std::invalid_argument("grid_sweep: m_eval must be positive");

    SweepOutcome out;
    out.val_crps.assign(candidates.size(), std::numeric_limits<double>::quiet_NaN());
    out.failures.assign(candidates.size(), "");
    out.param_counts.assign(candidates.size(), 0);

    const std::int64_t row = panel.n_nodes * panel.d;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto& cand = candidates[c];
        try {
            auto windows = make_windows(panel, cand.train_cfg.p, cand.train_cfg.q);
            Rng init(cand.train_cfg.seed);
            auto model = make_model(cand.kind, cand.dims, cand.noise, cand.gcn, graph, init);
            model.node_mean = panel.node_mean;
            model.node_std = panel.node_std;
            std::int64_t count = 0;
            for (const auto& p : model.parameters()) count += static_cast<std::int64_t>(p->data.size());
            out.param_counts[c] = count;

            train(model, windows, cand.train_cfg);

            // score every validation origin whose horizon fits the slice
            const std::int64_t p = cand.train_cfg.p, q = cand.train_cfg.q;
            double crps_acc = 0.0;
            std::int64_t n_scored = 0;
            for (std::int64_t t = panel.train_end; t + q <= panel.val_end; ++t) {
                if (t - p < 0) continue;
                std::vector<double> in_rows(panel.raw.begin() + (t - p) * row, panel.raw.begin() + t * row);
                auto z = standardize(in_rows, panel.node_mean, panel.node_std);
                auto input = make_tensor({1, p, panel.n_nodes, panel.d}, std::move(z));
                auto ens = sample_ensemble(model, input, m_eval, Rng(eval_seed).derive(static_cast<std::uint64_t>(t)));
                std::vector<double> actual(panel.raw.begin() + t * row, panel.raw.begin() + (t + q) * row);
                crps_acc += crps_mean(actual, ens.trajectories, m_eval);
                ++n_scored;
            }
            if (n_scored == 0) throw std::runtime_error("validation slice shorter than the horizon");
            out.val_crps[c] = crps_acc / static_cast<double>(n_scored);
        } catch (const std::exception& e) {
            out.failures[c] = e.what();
            out.val_crps[c] = std::numeric_limits<double>::quiet_NaN();
        }
    }

    bool any = false;
    std::size_t best = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (!out.failures[c].empty()) continue;
        if (!any) {
            best = c;
            any = true;
            continue;
        }
        const double a = out.val_crps[c], b = out.val_crps[best];
        if (a < b || (a == b && out.param_counts[c] < out.param_counts[best])) best = c;
    }
    if (!any) throw std::runtime_error("grid_sweep: every candidate failed");
    out.best_index = best;
    return out;
}

} // namespace ste
