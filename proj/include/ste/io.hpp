#pragma once

#include "ste/models.hpp"
#include "ste/spatial.hpp"
#include "ste/training.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ste {

// Shortest round-trip decimal rendering; identical doubles always print the
// same bytes, which is what makes rerun outputs byte-comparable.
std::string format_double(double v);

// Raw panel file: header `timestamp,<node1>,...,<nodeN>`, one row per step.
struct PanelCsv {
    std::vector<std::string> timestamps;
    std::vector<std::string> node_ids;
    std::vector<double> values; // T*N, time-major
    std::int64_t t_total = 0;
    std::int64_t n_nodes = 0;
};

PanelCsv read_panel_csv(const std::string& path);

// Coordinates file: header `node,lat,lon`. Order in the file is free; nodes
// are matched to the panel by name.
std::vector<NodeCoords> read_coords_csv(const std::string& path);

// Reorders coords into panel column order; the node sets must match exactly.
std::vector<NodeCoords> match_coords(const std::vector<NodeCoords>& coords,
                                     const std::vector<std::string>& node_ids);

struct IngestResult {
    PanelDataset panel;
    GraphSpec graph;
};

// Panel + coordinates -> standardized dataset and geographic graph. The
// panel's column order defines the node index everywhere downstream.
IngestResult ingest(const std::string& panel_csv, const std::string& coords_csv, std::int64_t train_end,
                    std::int64_t val_end, const GraphOptions& graph_opt);

// `30`-style literals or the named shortcuts daily-short/-medium/-long (30/
// 60/90), weekly-… (4/9/13), monthly-… (6/12/24).
std::int64_t parse_horizon(const std::string& text);

// Everything one command run needs, loadable from a JSON file with the same
// field names; command-line flags override file values.
struct RunConfig {
    // data + artifacts
    std::string panel_csv;
    std::string coords_csv;
    std::string out_dir = ".";
    std::string model_path;      // empty -> <out_dir>/model.json
    std::int64_t train_end = 0;  // 0 -> floor(0.8 T)
    std::int64_t val_end = 0;    // 0 -> T

    // model
    ModelKind kind = ModelKind::mven;
    std::int64_t d_embed = 8;
    std::int64_t d_hidden = 32;
    int lstm_layers = 1;
    NoiseConfig noise;
    GcnConfig gcn;

    // geography
    double sigma_sq = 0.0; // <= 0 -> squared median pairwise distance
    double epsilon = 0.1;
    int alpha = 1;
    int max_lag = 1;

    // training (p, q, seed mirrored below)
    TrainConfig train;

    // forecast / evaluation protocol
    std::int64_t m_ensemble = 100; // trajectories per ensemble
    std::int64_t repeats = 50;     // independent evaluation ensembles
    double lower_q = 0.025, upper_q = 0.975;

    // explainability + simulation knobs
    std::int64_t node = 0;        // cmd_explain target
    std::int64_t sim_nodes = 20;
    std::int64_t sim_steps = 500;
    std::int64_t sim_burn_in = 50;
    int sim_trials = 200;

    int threads = 1;
    std::uint64_t seed = 0;
};

// Strict parse: unknown keys and type mismatches are errors.
RunConfig load_run_config(const std::string& path);

// Fill train_end/val_end defaults once the panel length is known.
void resolve_splits(RunConfig& cfg, std::int64_t t_total);

// Name <-> enum helpers shared by the config file and the flags.
NoiseConfig::Dist noise_dist_from_name(const std::string& s);
NoiseConfig::Mode noise_mode_from_name(const std::string& s);
GcnConfig::Agg gcn_agg_from_name(const std::string& s);
GcnConfig::Combine gcn_combine_from_name(const std::string& s);
GcnConfig::Act gcn_act_from_name(const std::string& s);

} // namespace ste
