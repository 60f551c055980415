#include "ste/cli.hpp"

#include "ste/ergolab.hpp"
#include "ste/explain.hpp"
#include "ste/metrics.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace ste {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string single_line(std::string s) {
    for (auto& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

const char* code_name(int code) {
    switch (code) {
    case kExitUsage: return "usage";
    case kExitData: return "data";
    case kExitNumeric: return "numeric";
    default: return "error";
    }
}

void require(bool ok, int code, const std::string& msg) {
    if (!ok) throw CliError(code, msg);
}

// Re-categorize library exceptions raised inside `fn`.
template <class F> auto stage(int code, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const CliError&) {
        throw;
    } catch (const std::exception& e) {
        throw CliError(code, e.what());
    }
}

std::string model_file(const RunConfig& cfg) {
    return cfg.model_path.empty() ? cfg.out_dir + "/model.json" : cfg.model_path;
}

void ensure_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw CliError(kExitData, "cannot create output directory '" + cfg.out_dir + "': " + ec.message());
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CliError(kExitData, "cannot open '" + path + "' for writing");
    return f;
}

void finish_file(std::ofstream& f, const std::string& path) {
    f.flush();
    if (!f) throw CliError(kExitData, "write to '" + path + "' failed");
}

GraphOptions graph_options(const RunConfig& cfg, bool adjacency, bool weights) {
    GraphOptions g;
    g.sigma_sq = cfg.sigma_sq;
    g.epsilon = cfg.epsilon;
    g.alpha = cfg.alpha;
    g.max_lag = cfg.max_lag;
    g.need_adjacency = adjacency;
    g.need_weights = weights;
    return g;
}

// Reads the panel, resolves 0-valued splits, matches the coordinates when a
// file is configured, and fits the standardized dataset.
IngestResult prepare_dataset(RunConfig& cfg, bool need_adjacency, bool need_weights) {
    auto raw = read_panel_csv(cfg.panel_csv);
    resolve_splits(cfg, raw.t_total);
    IngestResult out;
    if (!cfg.coords_csv.empty()) {
        auto coords = match_coords(read_coords_csv(cfg.coords_csv), raw.node_ids);
        out.graph = make_graph_spec(coords, graph_options(cfg, need_adjacency, need_weights));
    }
    out.panel = make_panel(std::move(raw.values), std::move(raw.timestamps), std::move(raw.node_ids), 1,
                           cfg.train_end, cfg.val_end);
    return out;
}

EngressionModel load_model_checked(const RunConfig& cfg, const PanelCsv& raw) {
    auto m = stage(kExitData, [&] { return load_model(model_file(cfg)); });
    require(m.dims.d == 1, kExitData,
            "model at '" + model_file(cfg) + "' expects " + std::to_string(m.dims.d) +
                " features per node; panel files carry exactly one");
    require(m.dims.n_nodes == raw.n_nodes, kExitData,
            "panel has " + std::to_string(raw.n_nodes) + " nodes but the model expects " +
                std::to_string(m.dims.n_nodes));
    return m;
}

// Standardized [1,p,N,1] input window whose first forecast row is `origin`.
TensorPtr window_at(const PanelCsv& raw, const EngressionModel& model, std::int64_t origin) {
    const std::int64_t p = model.dims.p, n = model.dims.n_nodes;
    require(origin >= p, kExitData,
            "forecast origin " + std::to_string(origin) + " needs at least p=" + std::to_string(p) +
                " panel rows before it");
    std::vector<double> rows(raw.values.begin() + static_cast<std::ptrdiff_t>((origin - p) * n),
                             raw.values.begin() + static_cast<std::ptrdiff_t>(origin * n));
    auto z = model.node_mean.empty() ? rows : standardize(rows, model.node_mean, model.node_std);
    return make_tensor({1, p, n, 1}, std::move(z), false);
}

void write_ensemble_csv(const std::string& path, const ForecastEnsemble& ens,
                        const std::vector<std::string>& node_ids) {
    auto f = open_out(path);
    f << "trajectory,step,node,value\n";
    const std::int64_t cells = ens.q * ens.n_nodes;
    for (std::int64_t j = 0; j < ens.m_members; ++j)
        for (std::int64_t t = 0; t < ens.q; ++t)
            for (std::int64_t i = 0; i < ens.n_nodes; ++i)
                f << j << ',' << (t + 1) << ',' << node_ids[static_cast<std::size_t>(i)] << ','
                  << format_double(ens.trajectories[static_cast<std::size_t>(j * cells + t * ens.n_nodes + i)])
                  << '\n';
    finish_file(f, path);
}

void write_summary_csv(const std::string& path, const ForecastEnsemble& ens,
                       const std::vector<std::string>& node_ids) {
    auto f = open_out(path);
    f << "step,node,median,lo,hi\n";
    for (std::int64_t t = 0; t < ens.q; ++t)
        for (std::int64_t i = 0; i < ens.n_nodes; ++i) {
            const auto c = static_cast<std::size_t>(t * ens.n_nodes + i);
            f << (t + 1) << ',' << node_ids[static_cast<std::size_t>(i)] << ',' << format_double(ens.median[c])
              << ',' << format_double(ens.lower[c]) << ',' << format_double(ens.upper[c]) << '\n';
        }
    finish_file(f, path);
}

// Per-cell tau-quantile of the ensemble trajectories.
std::vector<double> ensemble_quantile(const ForecastEnsemble& ens, double tau) {
    const std::int64_t cells = ens.q * ens.n_nodes * ens.d;
    std::vector<double> out(static_cast<std::size_t>(cells));
    std::vector<double> members(static_cast<std::size_t>(ens.m_members));
    for (std::int64_t c = 0; c < cells; ++c) {
        for (std::int64_t j = 0; j < ens.m_members; ++j)
            members[static_cast<std::size_t>(j)] = ens.trajectories[static_cast<std::size_t>(j * cells + c)];
        out[static_cast<std::size_t>(c)] = quantile_midpoint(members, tau);
    }
    return out;
}

void validate_protocol(const RunConfig& cfg) {
    require(cfg.m_ensemble >= 1, kExitUsage, "ensemble size must be at least 1");
    require(cfg.repeats >= 1, kExitUsage, "evaluation repeats must be at least 1");
    require(cfg.lower_q > 0.0 && cfg.lower_q < cfg.upper_q && cfg.upper_q < 1.0, kExitUsage,
            "interval quantiles must satisfy 0 < lower_q < upper_q < 1");
}

} // namespace

void cmd_train(const RunConfig& cfg0, std::ostream& out) {
    RunConfig cfg = cfg0;
    require(!cfg.panel_csv.empty(), kExitUsage, "train needs a panel CSV (--panel or panel_csv)");
    require(cfg.kind == ModelKind::mven || !cfg.coords_csv.empty(), kExitUsage,
            "train needs a coordinates CSV (--coords) for graph-based models");
    ensure_out_dir(cfg);
    auto ing = stage(kExitData, [&] {
        return prepare_dataset(cfg, cfg.kind == ModelKind::gcen, cfg.kind == ModelKind::sten);
    });
    auto windows = stage(kExitData, [&] { return make_windows(ing.panel, cfg.train.p, cfg.train.q); });

    ModelDims dims;
    dims.p = cfg.train.p;
    dims.q = cfg.train.q;
    dims.n_nodes = ing.panel.n_nodes;
    dims.d = 1;
    dims.d_embed = cfg.d_embed;
    dims.d_hidden = cfg.d_hidden;
    dims.lstm_layers = cfg.lstm_layers;
    auto model = stage(kExitData, [&] {
        Rng init(cfg.seed);
        auto m = make_model(cfg.kind, dims, cfg.noise, cfg.gcn, ing.graph, init);
        m.node_mean = ing.panel.node_mean;
        m.node_std = ing.panel.node_std;
        return m;
    });

    TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.seed;
    auto result = stage(kExitNumeric, [&] { return train(model, windows, tcfg); });

    const std::string mpath = model_file(cfg);
    stage(kExitData, [&] {
        save_model(model, mpath);
        return 0;
    });
    const std::string tpath = cfg.out_dir + "/loss_trace.csv";
    auto trace = open_out(tpath);
    trace << "epoch,loss\n";
    for (int e = 0; e < result.epochs_run; ++e)
        trace << (e + 1) << ',' << format_double(result.loss_trace[static_cast<std::size_t>(e)]) << '\n';
    finish_file(trace, tpath);
    out << "wrote " << mpath << "\n";
    out << "wrote " << tpath << "\n";
    out << "final_epoch_loss=" << format_double(result.loss_trace.back()) << " epochs_run=" << result.epochs_run
        << "\n";
}

void cmd_forecast(const RunConfig& cfg0, std::ostream& out) {
    RunConfig cfg = cfg0;
    require(!cfg.panel_csv.empty(), kExitUsage, "forecast needs a panel CSV (--panel or panel_csv)");
    validate_protocol(cfg);
    ensure_out_dir(cfg);
    auto raw = stage(kExitData, [&] { return read_panel_csv(cfg.panel_csv); });
    stage(kExitData, [&] {
        resolve_splits(cfg, raw.t_total);
        return 0;
    });
    auto model = load_model_checked(cfg, raw);
    auto win = window_at(raw, model, cfg.train_end);
    SampleOptions opt;
    opt.lower_q = cfg.lower_q;
    opt.upper_q = cfg.upper_q;
    auto ens = stage(kExitNumeric, [&] { return sample_ensemble(model, win, cfg.m_ensemble, Rng(cfg.seed), opt); });
    write_ensemble_csv(cfg.out_dir + "/ensemble.csv", ens, raw.node_ids);
    write_summary_csv(cfg.out_dir + "/summary.csv", ens, raw.node_ids);
    out << "wrote " << cfg.out_dir << "/ensemble.csv\n";
    out << "wrote " << cfg.out_dir << "/summary.csv\n";
}

void cmd_evaluate(const RunConfig& cfg0, std::ostream& out) {
    RunConfig cfg = cfg0;
    require(!cfg.panel_csv.empty(), kExitUsage, "evaluate needs a panel CSV (--panel or panel_csv)");
    validate_protocol(cfg);
    ensure_out_dir(cfg);
    auto raw = stage(kExitData, [&] { return read_panel_csv(cfg.panel_csv); });
    stage(kExitData, [&] {
        resolve_splits(cfg, raw.t_total);
        return 0;
    });
    auto model = load_model_checked(cfg, raw);
    const std::int64_t q = model.dims.q, n = model.dims.n_nodes;
    const std::int64_t test_len = raw.t_total - cfg.train_end;
    require(q <= test_len, kExitData,
            "horizon q=" + std::to_string(q) + " exceeds the " + std::to_string(test_len) +
                " test rows after train_end=" + std::to_string(cfg.train_end));
    auto win = window_at(raw, model, cfg.train_end);

    const std::vector<double> actual(raw.values.begin() + static_cast<std::ptrdiff_t>(cfg.train_end * n),
                                     raw.values.begin() + static_cast<std::ptrdiff_t>((cfg.train_end + q) * n));
    const std::vector<double> history(raw.values.begin(),
                                      raw.values.begin() + static_cast<std::ptrdiff_t>(cfg.train_end * n));
    const double alpha = 1.0 - (cfg.upper_q - cfg.lower_q);
    SampleOptions opt;
    opt.lower_q = cfg.lower_q;
    opt.upper_q = cfg.upper_q;

    static constexpr std::array<double, 2> kPinballTaus = {0.80, 0.95};
    static constexpr std::array<double, 2> kRiskTaus = {0.5, 0.9};
    std::vector<std::string> names;
    std::vector<std::vector<double>> per_run; // [run][metric]
    std::vector<double> node_mae(static_cast<std::size_t>(n), 0.0), node_se(static_cast<std::size_t>(n), 0.0),
        node_crps(static_cast<std::size_t>(n), 0.0), node_cov(static_cast<std::size_t>(n), 0.0);

    for (std::int64_t r = 0; r < cfg.repeats; ++r) {
        auto ens = stage(kExitNumeric,
                         [&] { return sample_ensemble(model, win, cfg.m_ensemble, Rng(cfg.seed).derive(static_cast<std::uint64_t>(r)), opt); });
        std::vector<std::string> run_names;
        std::vector<double> vals;
        auto push = [&](const std::string& name, double v) {
            run_names.push_back(name);
            vals.push_back(v);
        };
        const auto pm = stage(kExitNumeric,
                              [&] { return point_metrics(actual, ens.median, q, n, history, cfg.train_end); });
        push("smape", pm.smape);
        push("mae", pm.mae);
        push("rmse", pm.rmse);
        push("mase", pm.mase ? *pm.mase : std::nan(""));
        push("rmsse", pm.rmsse ? *pm.rmsse : std::nan(""));
        for (double tau : kPinballTaus) {
            auto qf = ensemble_quantile(ens, tau);
            push("pinball_" + std::to_string(static_cast<int>(std::lround(tau * 100))), pinball(actual, qf, tau));
        }
        for (double tau : kRiskTaus) {
            auto qf = ensemble_quantile(ens, tau);
            auto rr = rho_risk(actual, qf, tau);
            push("rho_risk_" + std::to_string(static_cast<int>(std::lround(tau * 100))),
                 rr ? *rr : std::nan(""));
        }
        push("crps", crps_mean(actual, ens.trajectories, ens.m_members));
        push("winkler", winkler_mean(actual, ens.lower, ens.upper, alpha));
        push("coverage", empirical_coverage(actual, ens.lower, ens.upper));
        if (names.empty()) names = run_names;
        per_run.push_back(std::move(vals));

        const std::int64_t cells = q * n;
        std::vector<double> members(static_cast<std::size_t>(ens.m_members));
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t t = 0; t < q; ++t) {
                const auto c = static_cast<std::size_t>(t * n + i);
                const double e = ens.median[c] - actual[c];
                node_mae[static_cast<std::size_t>(i)] += std::abs(e);
                node_se[static_cast<std::size_t>(i)] += e * e;
                for (std::int64_t j = 0; j < ens.m_members; ++j)
                    members[static_cast<std::size_t>(j)] =
                        ens.trajectories[static_cast<std::size_t>(j * cells) + c];
                node_crps[static_cast<std::size_t>(i)] += crps_ensemble(actual[c], members);
                node_cov[static_cast<std::size_t>(i)] +=
                    (ens.lower[c] <= actual[c] && actual[c] <= ens.upper[c]) ? 1.0 : 0.0;
            }
        }
    }

    const std::string rpath = cfg.out_dir + "/runs.csv";
    auto runs = open_out(rpath);
    runs << "run,metric,value\n";
    for (std::size_t r = 0; r < per_run.size(); ++r)
        for (std::size_t k = 0; k < names.size(); ++k)
            runs << (r + 1) << ',' << names[k] << ',' << format_double(per_run[r][k]) << '\n';
    finish_file(runs, rpath);

    ordered_json report;
    report["format"] = "ste-metric-report";
    report["version"] = 1;
    ordered_json meta;
    meta["kind"] = kind_name(model.kind);
    meta["horizon"] = q;
    meta["n_nodes"] = n;
    meta["m_ensemble"] = cfg.m_ensemble;
    meta["repeats"] = cfg.repeats;
    meta["seed"] = cfg.seed;
    meta["train_end"] = cfg.train_end;
    meta["lower_q"] = cfg.lower_q;
    meta["upper_q"] = cfg.upper_q;
    meta["alpha"] = alpha;
    meta["model"] = model_file(cfg);
    meta["panel"] = cfg.panel_csv;
    report["metadata"] = std::move(meta);
    ordered_json stats;
    const double runs_n = static_cast<double>(per_run.size());
    for (std::size_t k = 0; k < names.size(); ++k) {
        double mean = 0.0;
        for (const auto& row : per_run) mean += row[k];
        mean /= runs_n;
        double var = 0.0;
        for (const auto& row : per_run) var += (row[k] - mean) * (row[k] - mean);
        const double sd = per_run.size() > 1 ? std::sqrt(var / (runs_n - 1.0)) : 0.0;
        stats[names[k]] = {{"mean", mean}, {"std", sd}}; // NaN serializes as null
    }
    report["metrics"] = std::move(stats);
    ordered_json per_node = ordered_json::array();
    const double cell_count = runs_n * static_cast<double>(q);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        ordered_json row;
        row["node"] = raw.node_ids[ii];
        row["mae"] = node_mae[ii] / cell_count;
        row["rmse"] = std::sqrt(node_se[ii] / cell_count);
        row["crps"] = node_crps[ii] / cell_count;
        row["coverage"] = node_cov[ii] / cell_count;
        per_node.push_back(std::move(row));
    }
    report["per_node"] = std::move(per_node);

    const std::string jpath = cfg.out_dir + "/metric_report.json";
    auto jf = open_out(jpath);
    jf << report.dump(2) << '\n';
    finish_file(jf, jpath);
    out << "wrote " << rpath << "\n";
    out << "wrote " << jpath << "\n";
}

void cmd_simulate(const RunConfig& cfg0, std::ostream& out) {
    RunConfig cfg = cfg0;
    require(cfg.sim_nodes >= 2, kExitUsage, "simulate needs at least 2 nodes");
    require(cfg.sim_trials >= 1, kExitUsage, "simulate needs at least 1 trial");
    require(cfg.sim_burn_in >= 0 && cfg.sim_burn_in < cfg.sim_steps, kExitUsage,
            "burn-in must be shorter than the simulated steps");
    ensure_out_dir(cfg);
    ChainConfig cc;
    cc.kind = cfg.kind;
    cc.n_nodes = cfg.sim_nodes;
    cc.d_hidden = cfg.d_hidden;
    cc.d_embed = cfg.d_embed;
    cc.t_steps = cfg.sim_steps;
    cc.burn_in = cfg.sim_burn_in;
    cc.trials = cfg.sim_trials;
    cc.seed = cfg.seed;
    auto stab = stage(kExitNumeric, [&] { return stability_pass_rate(cc); });
    auto coup = stage(kExitNumeric, [&] { return coupling(cc); });

    const std::string path = cfg.out_dir + "/ergolab.csv";
    auto f = open_out(path);
    f << "trial,kind,hidden_dim,n_nodes,kpss_pass_rate,coupling_slope,merged\n";
    for (int i = 0; i < cc.trials; ++i) {
        const auto& ct = coup.trials[static_cast<std::size_t>(i)];
        f << (i + 1) << ',' << kind_name(cc.kind) << ',' << cc.d_hidden << ',' << cc.n_nodes << ','
          << format_double(stab.per_trial_pass[static_cast<std::size_t>(i)]) << ','
          << (ct.skipped ? "nan" : format_double(ct.gamma)) << ',' << (ct.merged ? 1 : 0) << '\n';
    }
    finish_file(f, path);
    out << "wrote " << path << "\n";
    out << "kpss_pass_rate=" << format_double(stab.pass_rate) << " mean_gamma=" << format_double(coup.mean_gamma)
        << " frac_merged=" << format_double(coup.frac_merged) << " explosive_trials=" << stab.explosive_trials
        << "\n";
}

void cmd_explain(const RunConfig& cfg0, std::ostream& out) {
    RunConfig cfg = cfg0;
    require(!cfg.panel_csv.empty(), kExitUsage, "explain needs a panel CSV (--panel or panel_csv)");
    validate_protocol(cfg);
    ensure_out_dir(cfg);
    auto raw = stage(kExitData, [&] { return read_panel_csv(cfg.panel_csv); });
    stage(kExitData, [&] {
        resolve_splits(cfg, raw.t_total);
        return 0;
    });
    auto model = load_model_checked(cfg, raw);
    require(cfg.node >= 0 && cfg.node < model.dims.n_nodes, kExitUsage,
            "node index " + std::to_string(cfg.node) + " is outside [0, " + std::to_string(model.dims.n_nodes) +
                ")");
    auto win = window_at(raw, model, cfg.train_end);
    SampleOptions opt;
    opt.lower_q = cfg.lower_q;
    opt.upper_q = cfg.upper_q;
    opt.capture_noise = true;
    auto ens = stage(kExitNumeric, [&] { return sample_ensemble(model, win, cfg.m_ensemble, Rng(cfg.seed), opt); });
    auto norms = stage(kExitNumeric, [&] { return noise_norms(ens, cfg.node); });

    write_ensemble_csv(cfg.out_dir + "/ensemble.csv", ens, raw.node_ids);
    ordered_json noise_report;
    noise_report["node"] = raw.node_ids[static_cast<std::size_t>(cfg.node)];
    noise_report["noise_norms"] = norms;
    noise_report["trajectories_ref"] = "ensemble.csv";
    const std::string npath = cfg.out_dir + "/noise_report.json";
    auto nf = open_out(npath);
    nf << noise_report.dump(2) << '\n';
    finish_file(nf, npath);
    out << "wrote " << cfg.out_dir << "/ensemble.csv\n";
    out << "wrote " << npath << "\n";

    if (model.kind == ModelKind::sten) {
        auto imp = stage(kExitNumeric, [&] { return lag_importance(model); });
        ordered_json lag_report;
        ordered_json lags = ordered_json::array();
        for (std::size_t l = 0; l < imp.frob.size(); ++l)
            lags.push_back({{"l", l}, {"frob", imp.frob[l]}, {"pct", imp.pct[l]}});
        lag_report["lags"] = std::move(lags);
        const std::string lpath = cfg.out_dir + "/lag_report.json";
        auto lf = open_out(lpath);
        lf << lag_report.dump(2) << '\n';
        finish_file(lf, lpath);
        out << "wrote " << lpath << "\n";
    }
}

void cmd_moran(const RunConfig& cfg0, std::ostream& out) {
    RunConfig cfg = cfg0;
    require(!cfg.panel_csv.empty(), kExitUsage, "moran needs a panel CSV (--panel or panel_csv)");
    require(!cfg.coords_csv.empty(), kExitUsage, "moran needs a coordinates CSV (--coords or coords_csv)");
    ensure_out_dir(cfg);
    auto raw = stage(kExitData, [&] { return read_panel_csv(cfg.panel_csv); });
    auto graph = stage(kExitData, [&] {
        auto coords = match_coords(read_coords_csv(cfg.coords_csv), raw.node_ids);
        return make_graph_spec(coords, graph_options(cfg, false, true));
    });
    auto series = stage(kExitNumeric,
                        [&] { return morans_i_series(raw.values, raw.t_total, raw.n_nodes, graph.W); });
    const std::string path = cfg.out_dir + "/moran.csv";
    auto f = open_out(path);
    f << "timestamp,morans_i\n";
    for (std::int64_t t = 0; t < raw.t_total; ++t)
        f << raw.timestamps[static_cast<std::size_t>(t)] << ','
          << format_double(series[static_cast<std::size_t>(t)]) << '\n';
    finish_file(f, path);
    out << "wrote " << path << "\n";
}

namespace {

// One subcommand's flag storage plus the CLI11 handles needed to detect
// which flags were actually given (those override the config file).
struct FlagSet {
    std::string config;
    RunConfig v;
    std::string kind, noise_dist, noise_mode, agg, combine, act, horizon;
    CLI::Option *o_panel = nullptr, *o_coords = nullptr, *o_out = nullptr, *o_model = nullptr,
                *o_train_end = nullptr, *o_val_end = nullptr, *o_kind = nullptr, *o_p = nullptr,
                *o_horizon = nullptr, *o_d_embed = nullptr, *o_d_hidden = nullptr, *o_lstm_layers = nullptr,
                *o_noise_dist = nullptr, *o_noise_mode = nullptr, *o_concat_dim = nullptr,
                *o_noise_scale = nullptr, *o_agg = nullptr, *o_combine = nullptr, *o_act = nullptr,
                *o_k_layers = nullptr, *o_gcn_hidden = nullptr, *o_sigma_sq = nullptr, *o_epsilon = nullptr,
                *o_alpha = nullptr, *o_max_lag = nullptr, *o_m_train = nullptr, *o_beta = nullptr,
                *o_epochs = nullptr, *o_batch = nullptr, *o_lr = nullptr, *o_patience = nullptr,
                *o_ensemble = nullptr, *o_repeats = nullptr, *o_lower = nullptr, *o_upper = nullptr,
                *o_node = nullptr, *o_sim_nodes = nullptr, *o_sim_steps = nullptr, *o_sim_burn = nullptr,
                *o_sim_trials = nullptr, *o_threads = nullptr, *o_seed = nullptr;
};

void add_flags(CLI::App* cmd, FlagSet& f) {
    cmd->add_option("--config", f.config, "JSON run configuration; explicit flags override its values");
    f.o_panel = cmd->add_option("--panel", f.v.panel_csv, "panel CSV: header timestamp,<node>,...");
    f.o_coords = cmd->add_option("--coords", f.v.coords_csv, "coordinates CSV: header node,lat,lon");
    f.o_out = cmd->add_option("--out", f.v.out_dir, "output directory (created if missing)");
    f.o_model = cmd->add_option("--model", f.v.model_path, "model file (default <out>/model.json)");
    f.o_train_end = cmd->add_option("--train-end", f.v.train_end, "rows before this index train (0 = 80% of T)");
    f.o_val_end = cmd->add_option("--val-end", f.v.val_end, "end of the validation slice (0 = T)");
    f.o_kind = cmd->add_option("--kind", f.kind, "model kind: mven | gcen | sten");
    f.o_p = cmd->add_option("--p", f.v.train.p, "lookback window length");
    f.o_horizon = cmd->add_option("--horizon", f.horizon,
                                  "forecast horizon q: integer or preset (daily-short=30, daily-medium=60, "
                                  "daily-long=90, weekly-short=4, weekly-medium=9, weekly-long=13, "
                                  "monthly-short=6, monthly-medium=12, monthly-long=24)");
    f.o_d_embed = cmd->add_option("--d-embed", f.v.d_embed, "spatial embedding width D'");
    f.o_d_hidden = cmd->add_option("--d-hidden", f.v.d_hidden, "LSTM hidden width");
    f.o_lstm_layers = cmd->add_option("--lstm-layers", f.v.lstm_layers, "stacked LSTM layers");
    f.o_noise_dist = cmd->add_option("--noise-dist", f.noise_dist, "noise distribution: gaussian | uniform");
    f.o_noise_mode = cmd->add_option("--noise-mode", f.noise_mode, "noise injection: additive | concat");
    f.o_concat_dim = cmd->add_option("--concat-dim", f.v.noise.concat_dim, "noise features in concat mode");
    f.o_noise_scale = cmd->add_option("--noise-scale", f.v.noise.scale, "noise scale (0 silences it)");
    f.o_agg = cmd->add_option("--gcn-agg", f.agg, "GCN aggregation: mean | sum | max");
    f.o_combine = cmd->add_option("--gcn-combine", f.combine, "GCN combine: add | concat");
    f.o_act = cmd->add_option("--gcn-act", f.act, "GCN activation: tanh | relu");
    f.o_k_layers = cmd->add_option("--gcn-layers", f.v.gcn.k_layers, "GCN depth K");
    f.o_gcn_hidden = cmd->add_option("--gcn-hidden", f.v.gcn.hidden, "GCN conv width (0 = D')");
    f.o_sigma_sq = cmd->add_option("--sigma-sq", f.v.sigma_sq, "Gaussian-kernel bandwidth (<=0 = median^2)");
    f.o_epsilon = cmd->add_option("--epsilon", f.v.epsilon, "adjacency sparsity threshold");
    f.o_alpha = cmd->add_option("--alpha", f.v.alpha, "inverse-distance decay exponent");
    f.o_max_lag = cmd->add_option("--max-lag", f.v.max_lag, "largest spatial lag L");
    f.o_m_train = cmd->add_option("--m-train", f.v.train.m_train, "forward passes per training batch");
    f.o_beta = cmd->add_option("--beta", f.v.train.beta, "energy-score exponent in (0,2)");
    f.o_epochs = cmd->add_option("--epochs", f.v.train.epochs, "training epochs");
    f.o_batch = cmd->add_option("--batch-size", f.v.train.batch_size, "windows per batch");
    f.o_lr = cmd->add_option("--lr", f.v.train.lr, "Adam learning rate");
    f.o_patience = cmd->add_option("--patience", f.v.train.patience, "early-stop patience (0 = off)");
    f.o_ensemble = cmd->add_option("--ensemble", f.v.m_ensemble, "trajectories per forecast ensemble M");
    f.o_repeats = cmd->add_option("--repeats", f.v.repeats, "independent evaluation ensembles R");
    f.o_lower = cmd->add_option("--lower-q", f.v.lower_q, "lower interval quantile");
    f.o_upper = cmd->add_option("--upper-q", f.v.upper_q, "upper interval quantile");
    f.o_node = cmd->add_option("--node", f.v.node, "target node index for explain");
    f.o_sim_nodes = cmd->add_option("--sim-nodes", f.v.sim_nodes, "chain size N for simulate");
    f.o_sim_steps = cmd->add_option("--sim-steps", f.v.sim_steps, "chain length for simulate");
    f.o_sim_burn = cmd->add_option("--sim-burn-in", f.v.sim_burn_in, "discarded warm-up steps");
    f.o_sim_trials = cmd->add_option("--sim-trials", f.v.sim_trials, "independent chains for simulate");
    f.o_threads = cmd->add_option("--threads", f.v.threads, "worker cap; 1 guarantees bit determinism");
    f.o_seed = cmd->add_option("--seed", f.v.seed, "master seed for every random stream");
}

RunConfig merge_flags(const FlagSet& f) {
    RunConfig cfg;
    if (!f.config.empty()) {
        try {
            cfg = load_run_config(f.config);
        } catch (const std::exception& e) {
            throw CliError(kExitUsage, e.what());
        }
    }
    try {
        if (f.o_panel->count()) cfg.panel_csv = f.v.panel_csv;
        if (f.o_coords->count()) cfg.coords_csv = f.v.coords_csv;
        if (f.o_out->count()) cfg.out_dir = f.v.out_dir;
        if (f.o_model->count()) cfg.model_path = f.v.model_path;
        if (f.o_train_end->count()) cfg.train_end = f.v.train_end;
        if (f.o_val_end->count()) cfg.val_end = f.v.val_end;
        if (f.o_kind->count()) cfg.kind = kind_from_name(f.kind);
        if (f.o_p->count()) cfg.train.p = f.v.train.p;
        if (f.o_horizon->count()) cfg.train.q = parse_horizon(f.horizon);
        if (f.o_d_embed->count()) cfg.d_embed = f.v.d_embed;
        if (f.o_d_hidden->count()) cfg.d_hidden = f.v.d_hidden;
        if (f.o_lstm_layers->count()) cfg.lstm_layers = f.v.lstm_layers;
        if (f.o_noise_dist->count()) cfg.noise.distribution = noise_dist_from_name(f.noise_dist);
        if (f.o_noise_mode->count()) cfg.noise.mode = noise_mode_from_name(f.noise_mode);
        if (f.o_concat_dim->count()) cfg.noise.concat_dim = f.v.noise.concat_dim;
        if (f.o_noise_scale->count()) cfg.noise.scale = f.v.noise.scale;
        if (f.o_agg->count()) cfg.gcn.aggregation = gcn_agg_from_name(f.agg);
        if (f.o_combine->count()) cfg.gcn.combine = gcn_combine_from_name(f.combine);
        if (f.o_act->count()) cfg.gcn.activation = gcn_act_from_name(f.act);
        if (f.o_k_layers->count()) cfg.gcn.k_layers = f.v.gcn.k_layers;
        if (f.o_gcn_hidden->count()) cfg.gcn.hidden = f.v.gcn.hidden;
        if (f.o_sigma_sq->count()) cfg.sigma_sq = f.v.sigma_sq;
        if (f.o_epsilon->count()) cfg.epsilon = f.v.epsilon;
        if (f.o_alpha->count()) cfg.alpha = f.v.alpha;
        if (f.o_max_lag->count()) cfg.max_lag = f.v.max_lag;
        if (f.o_m_train->count()) cfg.train.m_train = f.v.train.m_train;
        if (f.o_beta->count()) cfg.train.beta = f.v.train.beta;
        if (f.o_epochs->count()) cfg.train.epochs = f.v.train.epochs;
        if (f.o_batch->count()) cfg.train.batch_size = f.v.train.batch_size;
        if (f.o_lr->count()) cfg.train.lr = f.v.train.lr;
        if (f.o_patience->count()) cfg.train.patience = f.v.train.patience;
        if (f.o_ensemble->count()) cfg.m_ensemble = f.v.m_ensemble;
        if (f.o_repeats->count()) cfg.repeats = f.v.repeats;
        if (f.o_lower->count()) cfg.lower_q = f.v.lower_q;
        if (f.o_upper->count()) cfg.upper_q = f.v.upper_q;
        if (f.o_node->count()) cfg.node = f.v.node;
        if (f.o_sim_nodes->count()) cfg.sim_nodes = f.v.sim_nodes;
        if (f.o_sim_steps->count()) cfg.sim_steps = f.v.sim_steps;
        if (f.o_sim_burn->count()) cfg.sim_burn_in = f.v.sim_burn_in;
        if (f.o_sim_trials->count()) cfg.sim_trials = f.v.sim_trials;
        if (f.o_threads->count()) cfg.threads = f.v.threads;
        if (f.o_seed->count()) cfg.seed = f.v.seed;
    } catch (const CliError&) {
        throw;
    } catch (const std::exception& e) {
        throw CliError(kExitUsage, e.what());
    }
    if (cfg.threads < 1) throw CliError(kExitUsage, "--threads must be at least 1");
    return cfg;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"spatiotemporal engression: probabilistic panel forecasting with pre-additive noise"};
    app.require_subcommand(1);
    struct Cmd {
        const char* name;
        const char* desc;
        void (*fn)(const RunConfig&, std::ostream&);
    };
    static constexpr std::array<Cmd, 6> cmds = {{
        {"train", "fit a model; writes model.json and loss_trace.csv", &cmd_train},
        {"forecast", "sample an ensemble; writes ensemble.csv and summary.csv", &cmd_forecast},
        {"evaluate", "repeated-ensemble scoring; writes runs.csv and metric_report.json", &cmd_evaluate},
        {"simulate", "closed-loop ergodicity diagnostics; writes ergolab.csv", &cmd_simulate},
        {"explain", "noise norms and lag importances; writes JSON reports", &cmd_explain},
        {"moran", "Moran's I per time step; writes moran.csv", &cmd_moran},
    }};
    std::array<FlagSet, cmds.size()> flags;
    std::array<CLI::App*, cmds.size()> subs{};
    for (std::size_t i = 0; i < cmds.size(); ++i) {
        subs[i] = app.add_subcommand(cmds[i].name, cmds[i].desc);
        add_flags(subs[i], flags[i]);
    }

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error[usage]: " << single_line(e.what()) << "\n";
        return kExitUsage;
    }

    for (std::size_t i = 0; i < cmds.size(); ++i) {
        if (!subs[i]->parsed()) continue;
        // Subcommand help is handled by CLI11 before we get here.
        try {
            const RunConfig cfg = merge_flags(flags[i]);
            cmds[i].fn(cfg, out);
            return kExitOk;
        } catch (const CliError& e) {
            err << "error[" << code_name(e.code()) << "]: " << single_line(e.what()) << "\n";
            return e.code();
        } catch (const std::exception& e) {
            err << "error[numeric]: " << single_line(e.what()) << "\n";
            return kExitNumeric;
        }
    }
    err << "error[usage]: no command given\n";
    return kExitUsage;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace ste
