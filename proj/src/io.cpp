#include "ste/io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace ste {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

std::vector<std::string> read_lines(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(what + " file '" + path + "' cannot be opened");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw std::runtime_error(what + " file '" + path + "' is empty");
    return lines;
}

// Strict finite-double parse of one CSV cell.
double parse_cell(const std::string& cell, const std::string& path, std::size_t line_no,
                  const std::string& column) {
    const std::string where = "'" + path + "' row " + std::to_string(line_no) + ", column '" + column + "'";
    if (cell.empty()) throw std::runtime_error("missing cell at " + where);
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + cell.size()) throw std::runtime_error("non-numeric cell '" + cell + "' at " + where);
    if (!std::isfinite(v)) throw std::runtime_error("non-finite cell '" + cell + "' at " + where);
    return v;
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

PanelCsv read_panel_csv(const std::string& path) {
    const auto lines = read_lines(path, "panel");
    const auto header = split_csv_line(lines[0]);
    if (header.size() < 2 || header[0] != "timestamp")
        throw std::runtime_error("panel file '" + path + "' must start with header 'timestamp,<node>,...'");
    PanelCsv out;
    out.node_ids.assign(header.begin() + 1, header.end());
    std::unordered_set<std::string> seen;
    for (const auto& id : out.node_ids) {
        if (id.empty()) throw std::runtime_error("panel file '" + path + "' has an empty node name in the header");
        if (!seen.insert(id).second)
            throw std::runtime_error("panel file '" + path + "' repeats node '" + id + "' in the header");
    }
    out.n_nodes = static_cast<std::int64_t>(out.node_ids.size());
    if (lines.size() < 2) throw std::runtime_error("panel file '" + path + "' has no data rows");
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_csv_line(lines[r]);
        if (cells.size() != header.size())
            throw std::runtime_error("panel file '" + path + "' row " + std::to_string(r + 1) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(header.size()));
        if (cells[0].empty())
            throw std::runtime_error("missing timestamp at '" + path + "' row " + std::to_string(r + 1));
        out.timestamps.push_back(cells[0]);
        for (std::size_t c = 1; c < cells.size(); ++c)
            out.values.push_back(parse_cell(cells[c], path, r + 1, out.node_ids[c - 1]));
    }
    out.t_total = static_cast<std::int64_t>(out.timestamps.size());
    return out;
}

std::vector<NodeCoords> read_coords_csv(const std::string& path) {
    const auto lines = read_lines(path, "coordinates");
    const auto header = split_csv_line(lines[0]);
    if (header.size() != 3 || header[0] != "node" || header[1] != "lat" || header[2] != "lon")
        throw std::runtime_error("coordinates file '" + path + "' must have header 'node,lat,lon'");
    std::vector<NodeCoords> coords;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_csv_line(lines[r]);
        if (cells.size() != 3)
            throw std::runtime_error("coordinates file '" + path + "' row " + std::to_string(r + 1) + " has " +
                                     std::to_string(cells.size()) + " cells, expected 3");
        if (cells[0].empty())
            throw std::runtime_error("missing node name at '" + path + "' row " + std::to_string(r + 1));
        NodeCoords nc;
        nc.node_id = cells[0];
        nc.lat = parse_cell(cells[1], path, r + 1, "lat");
        nc.lon = parse_cell(cells[2], path, r + 1, "lon");
        coords.push_back(std::move(nc));
    }
    validate_coords(coords);
    return coords;
}

std::vector<NodeCoords> match_coords(const std::vector<NodeCoords>& coords,
                                     const std::vector<std::string>& node_ids) {
    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < coords.size(); ++i) by_name.emplace(coords[i].node_id, i);
    std::vector<NodeCoords> ordered;
    ordered.reserve(node_ids.size());
    std::unordered_set<std::string> used;
    for (const auto& id : node_ids) {
        auto it = by_name.find(id);
        if (it == by_name.end())
            throw std::runtime_error("coordinates file is missing node '" + id + "' from the panel header");
        ordered.push_back(coords[it->second]);
        used.insert(id);
    }
    for (const auto& nc : coords)
        if (!used.count(nc.node_id))
            throw std::runtime_error("coordinates file has node '" + nc.node_id + "' that the panel lacks");
    return ordered;
}

IngestResult ingest(const std::string& panel_csv, const std::string& coords_csv, std::int64_t train_end,
                    std::int64_t val_end, const GraphOptions& graph_opt) {
    auto panel = read_panel_csv(panel_csv);
    auto coords = match_coords(read_coords_csv(coords_csv), panel.node_ids);
    IngestResult out;
    out.graph = make_graph_spec(coords, graph_opt);
    out.panel = make_panel(std::move(panel.values), std::move(panel.timestamps), std::move(panel.node_ids), 1,
                           train_end, val_end);
    return out;
}

std::int64_t parse_horizon(const std::string& text) {
    if (!text.empty() && std::all_of(text.begin(), text.end(),
                                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
        const long long v = std::stoll(text);
        if (v < 1) throw std::invalid_argument("horizon must be at least 1");
        return v;
    }
    static const std::unordered_map<std::string, std::int64_t> presets = {
        {"daily-short", 30},  {"daily-medium", 60},  {"daily-long", 90},
        {"weekly-short", 4},  {"weekly-medium", 9},  {"weekly-long", 13},
        {"monthly-short", 6}, {"monthly-medium", 12}, {"monthly-long", 24},
    };
    auto it = presets.find(text);
    if (it == presets.end())
        throw std::invalid_argument("unknown horizon '" + text +
                                    "'; use a positive integer or one of daily-short/daily-medium/daily-long/"
                                    "weekly-short/weekly-medium/weekly-long/monthly-short/monthly-medium/"
                                    "monthly-long");
    return it->second;
}

namespace {

template <class T> T enum_from_name(const std::string& s, std::initializer_list<std::pair<const char*, T>> table,
                                    const std::string& what) {
    std::string low;
    for (char c : s) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (const auto& [name, v] : table)
        if (low == name) return v;
    std::string options;
    for (const auto& [name, v] : table) {
        if (!options.empty()) options += "/";
        options += name;
    }
    throw std::invalid_argument("unknown " + what + " '" + s + "'; expected one of " + options);
}

// Typed getters that report the offending key on mismatch.
double json_num(const json& j, const std::string& key) {
    if (!j.is_number()) throw std::invalid_argument("config key '" + key + "' must be a number");
    return j.get<double>();
}

std::int64_t json_int(const json& j, const std::string& key) {
    if (!j.is_number_integer()) throw std::invalid_argument("config key '" + key + "' must be an integer");
    return j.get<std::int64_t>();
}

std::string json_str(const json& j, const std::string& key) {
    if (!j.is_string()) throw std::invalid_argument("config key '" + key + "' must be a string");
    return j.get<std::string>();
}

} // namespace

NoiseConfig::Dist noise_dist_from_name(const std::string& s) {
    return enum_from_name<NoiseConfig::Dist>(
        s, {{"gaussian", NoiseConfig::Dist::gaussian}, {"uniform", NoiseConfig::Dist::uniform}}, "noise distribution");
}

NoiseConfig::Mode noise_mode_from_name(const std::string& s) {
    return enum_from_name<NoiseConfig::Mode>(
        s, {{"additive", NoiseConfig::Mode::additive}, {"concat", NoiseConfig::Mode::concat}}, "noise mode");
}

GcnConfig::Agg gcn_agg_from_name(const std::string& s) {
    return enum_from_name<GcnConfig::Agg>(
        s, {{"mean", GcnConfig::Agg::mean}, {"sum", GcnConfig::Agg::sum}, {"max", GcnConfig::Agg::max}},
        "GCN aggregation");
}

GcnConfig::Combine gcn_combine_from_name(const std::string& s) {
    return enum_from_name<GcnConfig::Combine>(
        s, {{"add", GcnConfig::Combine::add}, {"concat", GcnConfig::Combine::concat}}, "GCN combine");
}

GcnConfig::Act gcn_act_from_name(const std::string& s) {
    return enum_from_name<GcnConfig::Act>(
        s, {{"tanh", GcnConfig::Act::tanh}, {"relu", GcnConfig::Act::relu}}, "GCN activation");
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config file '" + path + "' cannot be opened");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::invalid_argument("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config file '" + path + "' must hold a JSON object");

    RunConfig cfg;
    auto visit = [](const json& obj, const std::string& scope,
                    const std::unordered_map<std::string, std::function<void(const json&, const std::string&)>>&
                        handlers) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            const std::string full = scope.empty() ? it.key() : scope + "." + it.key();
            auto h = handlers.find(it.key());
            if (h == handlers.end()) throw std::invalid_argument("unknown config key '" + full + "'");
            h->second(it.value(), full);
        }
    };

    const std::unordered_map<std::string, std::function<void(const json&, const std::string&)>> noise_keys = {
        {"dist", [&](const json& v, const std::string& k) { cfg.noise.distribution = noise_dist_from_name(json_str(v, k)); }},
        {"mode", [&](const json& v, const std::string& k) { cfg.noise.mode = noise_mode_from_name(json_str(v, k)); }},
        {"concat_dim", [&](const json& v, const std::string& k) { cfg.noise.concat_dim = json_int(v, k); }},
        {"scale", [&](const json& v, const std::string& k) { cfg.noise.scale = json_num(v, k); }},
    };
    const std::unordered_map<std::string, std::function<void(const json&, const std::string&)>> gcn_keys = {
        {"agg", [&](const json& v, const std::string& k) { cfg.gcn.aggregation = gcn_agg_from_name(json_str(v, k)); }},
        {"combine", [&](const json& v, const std::string& k) { cfg.gcn.combine = gcn_combine_from_name(json_str(v, k)); }},
        {"act", [&](const json& v, const std::string& k) { cfg.gcn.activation = gcn_act_from_name(json_str(v, k)); }},
        {"k_layers", [&](const json& v, const std::string& k) { cfg.gcn.k_layers = static_cast<int>(json_int(v, k)); }},
        {"hidden", [&](const json& v, const std::string& k) { cfg.gcn.hidden = json_int(v, k); }},
    };
    const std::unordered_map<std::string, std::function<void(const json&, const std::string&)>> graph_keys = {
        {"sigma_sq", [&](const json& v, const std::string& k) { cfg.sigma_sq = json_num(v, k); }},
        {"epsilon", [&](const json& v, const std::string& k) { cfg.epsilon = json_num(v, k); }},
        {"alpha", [&](const json& v, const std::string& k) { cfg.alpha = static_cast<int>(json_int(v, k)); }},
        {"max_lag", [&](const json& v, const std::string& k) { cfg.max_lag = static_cast<int>(json_int(v, k)); }},
    };
    const std::unordered_map<std::string, std::function<void(const json&, const std::string&)>> train_keys = {
        {"m_train", [&](const json& v, const std::string& k) { cfg.train.m_train = static_cast<int>(json_int(v, k)); }},
        {"beta", [&](const json& v, const std::string& k) { cfg.train.beta = json_num(v, k); }},
        {"epochs", [&](const json& v, const std::string& k) { cfg.train.epochs = static_cast<int>(json_int(v, k)); }},
        {"batch_size", [&](const json& v, const std::string& k) { cfg.train.batch_size = json_int(v, k); }},
        {"lr", [&](const json& v, const std::string& k) { cfg.train.lr = json_num(v, k); }},
        {"patience", [&](const json& v, const std::string& k) { cfg.train.patience = static_cast<int>(json_int(v, k)); }},
    };
    const std::unordered_map<std::string, std::function<void(const json&, const std::string&)>> sim_keys = {
        {"nodes", [&](const json& v, const std::string& k) { cfg.sim_nodes = json_int(v, k); }},
        {"steps", [&](const json& v, const std::string& k) { cfg.sim_steps = json_int(v, k); }},
        {"burn_in", [&](const json& v, const std::string& k) { cfg.sim_burn_in = json_int(v, k); }},
        {"trials", [&](const json& v, const std::string& k) { cfg.sim_trials = static_cast<int>(json_int(v, k)); }},
    };
    const std::unordered_map<std::string, std::function<void(const json&, const std::string&)>> top = {
        {"panel_csv", [&](const json& v, const std::string& k) { cfg.panel_csv = json_str(v, k); }},
        {"coords_csv", [&](const json& v, const std::string& k) { cfg.coords_csv = json_str(v, k); }},
        {"out_dir", [&](const json& v, const std::string& k) { cfg.out_dir = json_str(v, k); }},
        {"model_path", [&](const json& v, const std::string& k) { cfg.model_path = json_str(v, k); }},
        {"train_end", [&](const json& v, const std::string& k) { cfg.train_end = json_int(v, k); }},
        {"val_end", [&](const json& v, const std::string& k) { cfg.val_end = json_int(v, k); }},
        {"kind", [&](const json& v, const std::string& k) { cfg.kind = kind_from_name(json_str(v, k)); }},
        {"p", [&](const json& v, const std::string& k) { cfg.train.p = json_int(v, k); }},
        {"q", [&](const json& v, const std::string& k) {
             cfg.train.q = v.is_string() ? parse_horizon(v.get<std::string>()) : json_int(v, k);
         }},
        {"d_embed", [&](const json& v, const std::string& k) { cfg.d_embed = json_int(v, k); }},
        {"d_hidden", [&](const json& v, const std::string& k) { cfg.d_hidden = json_int(v, k); }},
        {"lstm_layers", [&](const json& v, const std::string& k) { cfg.lstm_layers = static_cast<int>(json_int(v, k)); }},
        {"noise", [&](const json& v, const std::string& k) { if (!v.is_object()) throw std::invalid_argument("config key '" + k + "' must be an object"); visit(v, k, noise_keys); }},
        {"gcn", [&](const json& v, const std::string& k) { if (!v.is_object()) throw std::invalid_argument("config key '" + k + "' must be an object"); visit(v, k, gcn_keys); }},
        {"graph", [&](const json& v, const std::string& k) { if (!v.is_object()) throw std::invalid_argument("config key '" + k + "' must be an object"); visit(v, k, graph_keys); }},
        {"train", [&](const json& v, const std::string& k) { if (!v.is_object()) throw std::invalid_argument("config key '" + k + "' must be an object"); visit(v, k, train_keys); }},
        {"sim", [&](const json& v, const std::string& k) { if (!v.is_object()) throw std::invalid_argument("config key '" + k + "' must be an object"); visit(v, k, sim_keys); }},
        {"m_ensemble", [&](const json& v, const std::string& k) { cfg.m_ensemble = json_int(v, k); }},
        {"repeats", [&](const json& v, const std::string& k) { cfg.repeats = json_int(v, k); }},
        {"lower_q", [&](const json& v, const std::string& k) { cfg.lower_q = json_num(v, k); }},
        {"upper_q", [&](const json& v, const std::string& k) { cfg.upper_q = json_num(v, k); }},
        {"node", [&](const json& v, const std::string& k) { cfg.node = json_int(v, k); }},
        {"threads", [&](const json& v, const std::string& k) { cfg.threads = static_cast<int>(json_int(v, k)); }},
        {"seed", [&](const json& v, const std::string& k) { cfg.seed = static_cast<std::uint64_t>(json_int(v, k)); }},
    };
    visit(j, "", top);
    return cfg;
}

void resolve_splits(RunConfig& cfg, std::int64_t t_total) {
    if (cfg.train_end == 0) cfg.train_end = (t_total * 8) / 10;
    if (cfg.val_end == 0) cfg.val_end = t_total;
    if (cfg.train_end < 1 || cfg.train_end > cfg.val_end || cfg.val_end > t_total)
        throw std::runtime_error("invalid split: train_end=" + std::to_string(cfg.train_end) +
                                 ", val_end=" + std::to_string(cfg.val_end) + " for T=" + std::to_string(t_total));
}

} // namespace ste
