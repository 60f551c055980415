#include "ste/models.hpp"

#include "ste/metrics.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ste {

std::string kind_name(ModelKind kind) {
    switch (kind) {
    case ModelKind::mven: return "mven";
    case ModelKind::gcen: return "gcen";
    case ModelKind::sten: return "sten";
    }
    throw std::logic_error("kind_name: unreachable");
}

ModelKind kind_from_name(const std::string& name) {
    std::string low(name);
    std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return std::tolower(c); });
    if (low == "mven") return ModelKind::mven;
    if (low == "gcen") return ModelKind::gcen;
    if (low == "sten") return ModelKind::sten;
    throw std::invalid_argument("unknown model kind '" + name + "' (expected mven, gcen, or sten)");
}

std::int64_t EngressionModel::embed_dim() const { return kind == ModelKind::mven ? dims.d : dims.d_embed; }

std::int64_t EngressionModel::lstm_input_dim() const {
    return embed_dim() + (noise.mode == NoiseConfig::Mode::concat ? noise.concat_dim : 0);
}

std::vector<TensorPtr> EngressionModel::parameters() const {
    std::vector<TensorPtr> out;
    for (std::size_t l = 0; l < gcn_theta.size(); ++l) {
        out.push_back(gcn_theta[l]);
        out.push_back(gcn_self[l]);
        out.push_back(gcn_bias[l]);
    }
    if (gcn_proj_W) {
        out.push_back(gcn_proj_W);
        out.push_back(gcn_proj_b);
    }
    for (const auto& phi : star_phi) out.push_back(phi);
    collect_params(lstm, out);
    return out;
}

namespace {

TensorPtr const_tensor(Shape shape, std::vector<double> data) {
    auto t = make_tensor(std::move(shape), std::move(data), false);
    t->requires_grad = false;
    return t;
}

void build_graph_constants(EngressionModel& m) {
    const std::int64_t n = m.dims.n_nodes;
    if (m.kind == ModelKind::gcen) {
        if (static_cast<std::int64_t>(m.graph.A.size()) != n * n)
            throw std::invalid_argument("make_model: adjacency size does not match node count");
        m.neighbors.assign(static_cast<std::size_t>(n), {});
        std::vector<double> agg(static_cast<std::size_t>(n * n), 0.0);
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < n; ++j)
                if (m.graph.A[static_cast<std::size_t>(i * n + j)] > 0.0)
                    m.neighbors[static_cast<std::size_t>(i)].push_back(j);
            const auto& nb = m.neighbors[static_cast<std::size_t>(i)];
            if (nb.empty()) continue; // empty neighborhood aggregates to zero
            const double w = m.gcn.aggregation == GcnConfig::Agg::mean ? 1.0 / static_cast<double>(nb.size()) : 1.0;
            for (auto j : nb) agg[static_cast<std::size_t>(i * n + j)] = w;
        }
        m.agg_matrix = const_tensor({n, n}, std::move(agg));
    }
    if (m.kind == ModelKind::sten) {
        if (m.graph.W_powers.size() != static_cast<std::size_t>(m.graph.max_lag) + 1)
            throw std::invalid_argument("make_model: expected max_lag+1 precomputed weight powers");
        m.w_power_const.clear();
        for (const auto& P : m.graph.W_powers) {
            if (static_cast<std::int64_t>(P.size()) != n * n)
                throw std::invalid_argument("make_model: weight power size does not match node count");
            m.w_power_const.push_back(const_tensor({n, n}, P));
        }
    }
}

std::int64_t gcn_conv_width(const EngressionModel& m) {
    return m.gcn.hidden > 0 ? m.gcn.hidden : m.dims.d_embed;
}

} // namespace

EngressionModel make_model(ModelKind kind, const ModelDims& dims, const NoiseConfig& noise, const GcnConfig& gcn,
                           const GraphSpec& graph, Rng& rng) {
    if (dims.p < 1 || dims.q < 1 || dims.n_nodes < 1 || dims.d < 1)
        throw std::invalid_argument("make_model: p, q, N, D must all be positive");
    if (noise.mode == NoiseConfig::Mode::concat && noise.concat_dim < 1)
        throw std::invalid_argument("make_model: concat noise needs concat_dim >= 1");
    EngressionModel m;
    m.kind = kind;
    m.dims = dims;
    m.noise = noise;
    m.gcn = gcn;
    m.graph = graph;

    if (kind == ModelKind::gcen) {
        if (gcn.k_layers < 1) throw std::invalid_argument("make_model: GCN needs at least one layer");
        const std::int64_t g = gcn_conv_width(m);
        std::int64_t w_in = dims.d;
        for (int k = 0; k < gcn.k_layers; ++k) {
            const std::string tag = "gcn" + std::to_string(k);
            m.gcn_theta.push_back(xavier_init({w_in, g}, rng, tag + ".theta"));
            m.gcn_self.push_back(xavier_init({w_in, g}, rng, tag + ".self"));
            const std::int64_t bias_w = gcn.combine == GcnConfig::Combine::concat ? 2 * g : g;
            auto bias = zeros({bias_w});
            bias->requires_grad = true;
            bias->name = tag + ".bias";
            m.gcn_bias.push_back(bias);
            w_in = bias_w;
        }
        m.gcn_proj_W = xavier_init({w_in, dims.d_embed}, rng, "gcn.proj.W");
        m.gcn_proj_b = zeros({dims.d_embed});
        m.gcn_proj_b->requires_grad = true;
        m.gcn_proj_b->name = "gcn.proj.b";
    }
    if (kind == ModelKind::sten) {
        for (int l = 0; l <= graph.max_lag; ++l)
            m.star_phi.push_back(xavier_init({dims.d, dims.d_embed}, rng, "star.phi" + std::to_string(l)));
    }
    build_graph_constants(m);

    m.lstm = make_lstm_stack(m.lstm_input_dim(), dims.d_hidden, dims.lstm_layers, dims.q * dims.d, dims.dropout, rng,
                             "temporal");
    return m;
}

namespace {

TensorPtr gcn_activation(const EngressionModel& m, const TensorPtr& x) {
    return m.gcn.activation == GcnConfig::Act::tanh ? tanh_op(x) : relu(x);
}

// Elementwise max over the neighbor set of every node, axis 2 of [B,p,N,w].
TensorPtr neighbor_max(const EngressionModel& m, const TensorPtr& h) {
    std::vector<TensorPtr> rows;
    rows.reserve(m.neighbors.size());
    const Shape row_shape = {h->shape[0], h->shape[1], 1, h->shape[3]};
    for (const auto& nb : m.neighbors) {
        if (nb.empty()) {
            rows.push_back(zeros(row_shape));
            continue;
        }
        TensorPtr acc = slice(h, 2, nb[0], 1);
        for (std::size_t k = 1; k < nb.size(); ++k) {
            auto cand = slice(h, 2, nb[k], 1);
            acc = add(acc, relu(sub(cand, acc))); // max(acc, cand)
        }
        rows.push_back(acc);
    }
    return concat(rows, 2);
}

void check_window(const EngressionModel& m, const TensorPtr& Y) {
    if (Y->shape.size() != 4 || Y->shape[1] != m.dims.p || Y->shape[2] != m.dims.n_nodes || Y->shape[3] != m.dims.d)
        throw std::invalid_argument("model: window " + shape_str(Y->shape) + " does not match [B," +
                                    std::to_string(m.dims.p) + "," + std::to_string(m.dims.n_nodes) + "," +
                                    std::to_string(m.dims.d) + "]");
}

} // namespace

TensorPtr gcn_embed(const EngressionModel& m, const TensorPtr& Y) {
    if (m.kind != ModelKind::gcen) throw std::logic_error("gcn_embed: model is not GCEN");
    check_window(m, Y);
    TensorPtr h = Y;
    for (std::size_t k = 0; k < m.gcn_theta.size(); ++k) {
        TensorPtr agg = m.gcn.aggregation == GcnConfig::Agg::max ? neighbor_max(m, h) : matmul(m.agg_matrix, h);
        auto from_neighbors = matmul(agg, m.gcn_theta[k]);
        auto from_self = matmul(h, m.gcn_self[k]);
        TensorPtr pre = m.gcn.combine == GcnConfig::Combine::add ? add(from_neighbors, from_self)
                                                                 : concat({from_neighbors, from_self}, 3);
        h = gcn_activation(m, add(pre, m.gcn_bias[k]));
    }
    return add(matmul(h, m.gcn_proj_W), m.gcn_proj_b);
}

TensorPtr star_preactivation(const EngressionModel& m, const TensorPtr& Y) {
    if (m.kind != ModelKind::sten) throw std::logic_error("star_preactivation: model is not STEN");
    check_window(m, Y);
    TensorPtr total;
    for (std::size_t l = 0; l < m.star_phi.size(); ++l) {
        auto lagged = l == 0 ? Y : matmul(m.w_power_const[l], Y); // W^0 = I
        auto term = matmul(lagged, m.star_phi[l]);
        total = total ? add(total, term) : term;
    }
    return total;
}

TensorPtr star_embed(const EngressionModel& m, const TensorPtr& Y) { return relu(star_preactivation(m, Y)); }

TensorPtr inject_noise(const TensorPtr& Z, const NoiseConfig& cfg, Rng& rng, std::vector<double>* capture) {
    Shape noise_shape = Z->shape;
    if (cfg.mode == NoiseConfig::Mode::concat) {
        if (cfg.concat_dim < 1) throw std::invalid_argument("inject_noise: concat_dim must be >= 1");
        noise_shape.back() = cfg.concat_dim;
    }
    std::vector<double> eta(static_cast<std::size_t>(shape_numel(noise_shape)));
    const double bound = std::sqrt(3.0); // uniform(-sqrt(3), sqrt(3)) has unit variance
    for (auto& v : eta) {
        const double draw =
            cfg.distribution == NoiseConfig::Dist::gaussian ? rng.normal() : rng.uniform(-bound, bound);
        v = cfg.scale * draw;
    }
    if (capture) capture->insert(capture->end(), eta.begin(), eta.end());
    auto noise = const_tensor(std::move(noise_shape), std::move(eta));
    return cfg.mode == NoiseConfig::Mode::additive ? add(Z, noise)
                                                   : concat({Z, noise}, static_cast<int>(Z->shape.size()) - 1);
}

TensorPtr forward(const EngressionModel& m, const TensorPtr& window, Rng& rng, bool training,
                  std::vector<double>* noise_capture) {
    check_window(m, window);
    const std::int64_t B = window->shape[0];
    const std::int64_t N = m.dims.n_nodes;

    TensorPtr z;
    switch (m.kind) {
    case ModelKind::mven: z = window; break;
    case ModelKind::gcen: z = gcn_embed(m, window); break;
    case ModelKind::sten: z = star_embed(m, window); break;
    }
    ensure_finite(z, "spatial embedding");

    auto noised = inject_noise(z, m.noise, rng, noise_capture);
    const std::int64_t F = noised->shape[3];

    // [B,p,N,F] -> p slices of (B*N) node-batched sequences
    auto seq = reshape(permute(noised, {1, 0, 2, 3}), {m.dims.p, B * N, F});
    std::vector<TensorPtr> steps;
    steps.reserve(static_cast<std::size_t>(m.dims.p));
    for (std::int64_t t = 0; t < m.dims.p; ++t)
        steps.push_back(reshape(slice(seq, 0, t, 1), {B * N, F}));

    auto h_final = lstm_run(m.lstm, steps, training, rng);
    ensure_finite(h_final, "lstm hidden state");

    auto out = lstm_output(m.lstm.layers.back(), h_final); // [B*N, q*D]
    ensure_finite(out, "dense head");

    return permute(reshape(out, {B, N, m.dims.q, m.dims.d}), {0, 2, 1, 3});
}

ForecastEnsemble sample_ensemble(const EngressionModel& m, const TensorPtr& window, std::int64_t M, const Rng& rng,
                                 const SampleOptions& opt) {
    if (M < 1) throw std::invalid_argument("sample_ensemble: need M >= 1");
    check_window(m, window);
    if (window->shape[0] != 1) throw std::invalid_argument("sample_ensemble: expected a single window (B=1)");
    if (!(opt.lower_q < opt.upper_q))
        throw std::invalid_argument("sample_ensemble: quantile pair must be increasing");

    const std::int64_t cells = m.dims.q * m.dims.n_nodes * m.dims.d;
    ForecastEnsemble ens;
    ens.m_members = M;
    ens.q = m.dims.q;
    ens.n_nodes = m.dims.n_nodes;
    ens.d = m.dims.d;
    ens.lower_q = opt.lower_q;
    ens.upper_q = opt.upper_q;
    ens.trajectories.resize(static_cast<std::size_t>(M * cells));
    ens.noise_shape = {m.dims.p, m.dims.n_nodes,
                       m.noise.mode == NoiseConfig::Mode::concat ? m.noise.concat_dim : m.embed_dim()};

    NoGradGuard guard;
    for (std::int64_t j = 0; j < M; ++j) {
        Rng traj_rng = rng.derive(static_cast<std::uint64_t>(j));
        auto y = forward(m, window, traj_rng, false, opt.capture_noise ? &ens.captured_noise : nullptr);
        std::copy(y->data.begin(), y->data.end(), ens.trajectories.begin() + j * cells);
    }

    // back to original units
    if (!m.node_mean.empty()) {
        const std::int64_t nd = m.dims.n_nodes * m.dims.d;
        if (static_cast<std::int64_t>(m.node_mean.size()) != nd ||
            static_cast<std::int64_t>(m.node_std.size()) != nd)
            throw std::logic_error("sample_ensemble: standardization statistics do not match N*D");
        for (std::int64_t j = 0; j < M; ++j)
            for (std::int64_t t = 0; t < m.dims.q; ++t)
                for (std::int64_t c = 0; c < nd; ++c) {
                    auto& v = ens.trajectories[static_cast<std::size_t>(j * cells + t * nd + c)];
                    v = v * m.node_std[static_cast<std::size_t>(c)] + m.node_mean[static_cast<std::size_t>(c)];
                }
    }

    ens.median.resize(static_cast<std::size_t>(cells));
    ens.lower.resize(static_cast<std::size_t>(cells));
    ens.upper.resize(static_cast<std::size_t>(cells));
    std::vector<double> column(static_cast<std::size_t>(M));
    for (std::int64_t c = 0; c < cells; ++c) {
        for (std::int64_t j = 0; j < M; ++j) column[static_cast<std::size_t>(j)] = ens.trajectories[static_cast<std::size_t>(j * cells + c)];
        ens.median[static_cast<std::size_t>(c)] = quantile_midpoint(column, 0.5);
        ens.lower[static_cast<std::size_t>(c)] = quantile_midpoint(column, opt.lower_q);
        ens.upper[static_cast<std::size_t>(c)] = quantile_midpoint(column, opt.upper_q);
    }
    return ens;
}

namespace {

using nlohmann::ordered_json;

ordered_json dims_to_json(const ModelDims& d) {
    return {{"p", d.p},           {"q", d.q},           {"n_nodes", d.n_nodes},     {"d", d.d},
            {"d_embed", d.d_embed}, {"d_hidden", d.d_hidden}, {"lstm_layers", d.lstm_layers}, {"dropout", d.dropout}};
}

ModelDims dims_from_json(const ordered_json& j) {
    ModelDims d;
    d.p = j.at("p");
    d.q = j.at("q");
    d.n_nodes = j.at("n_nodes");
    d.d = j.at("d");
    d.d_embed = j.at("d_embed");
    d.d_hidden = j.at("d_hidden");
    d.lstm_layers = j.at("lstm_layers");
    d.dropout = j.at("dropout");
    return d;
}

ordered_json noise_to_json(const NoiseConfig& n) {
    return {{"distribution", n.distribution == NoiseConfig::Dist::gaussian ? "gaussian" : "uniform"},
            {"mode", n.mode == NoiseConfig::Mode::additive ? "additive" : "concat"},
            {"concat_dim", n.concat_dim},
            {"scale", n.scale}};
}

NoiseConfig noise_from_json(const ordered_json& j) {
    NoiseConfig n;
    const std::string dist = j.at("distribution");
    if (dist == "gaussian")
        n.distribution = NoiseConfig::Dist::gaussian;
    else if (dist == "uniform")
        n.distribution = NoiseConfig::Dist::uniform;
    else
        throw std::invalid_argument("model file: unknown noise distribution '" + dist + "'");
    const std::string mode = j.at("mode");
    if (mode == "additive")
        n.mode = NoiseConfig::Mode::additive;
    else if (mode == "concat")
        n.mode = NoiseConfig::Mode::concat;
    else
        throw std::invalid_argument("model file: unknown noise mode '" + mode + "'");
    n.concat_dim = j.at("concat_dim");
    n.scale = j.at("scale");
    return n;
}

ordered_json gcn_to_json(const GcnConfig& g) {
    const char* agg = g.aggregation == GcnConfig::Agg::mean ? "mean" : g.aggregation == GcnConfig::Agg::sum ? "sum" : "max";
    return {{"k_layers", g.k_layers},
            {"aggregation", agg},
            {"combine", g.combine == GcnConfig::Combine::add ? "add" : "concat"},
            {"activation", g.activation == GcnConfig::Act::tanh ? "tanh" : "relu"},
            {"hidden", g.hidden}};
}

GcnConfig gcn_from_json(const ordered_json& j) {
    GcnConfig g;
    g.k_layers = j.at("k_layers");
    const std::string agg = j.at("aggregation");
    if (agg == "mean")
        g.aggregation = GcnConfig::Agg::mean;
    else if (agg == "sum")
        g.aggregation = GcnConfig::Agg::sum;
    else if (agg == "max")
        g.aggregation = GcnConfig::Agg::max;
    else
        throw std::invalid_argument("model file: unknown aggregation '" + agg + "'");
    const std::string comb = j.at("combine");
    if (comb == "add")
        g.combine = GcnConfig::Combine::add;
    else if (comb == "concat")
        g.combine = GcnConfig::Combine::concat;
    else
        throw std::invalid_argument("model file: unknown combine '" + comb + "'");
    const std::string act = j.at("activation");
    if (act == "tanh")
        g.activation = GcnConfig::Act::tanh;
    else if (act == "relu")
        g.activation = GcnConfig::Act::relu;
    else
        throw std::invalid_argument("model file: unknown activation '" + act + "'");
    g.hidden = j.at("hidden");
    return g;
}

ordered_json graph_to_json(const GraphSpec& g) {
    ordered_json j = {{"n", g.n},         {"sigma_sq", g.sigma_sq}, {"epsilon", g.epsilon},
                      {"alpha", g.alpha}, {"max_lag", g.max_lag},   {"A", g.A},
                      {"W", g.W}};
    j["W_powers"] = g.W_powers;
    return j;
}

GraphSpec graph_from_json(const ordered_json& j) {
    GraphSpec g;
    g.n = j.at("n");
    g.sigma_sq = j.at("sigma_sq");
    g.epsilon = j.at("epsilon");
    g.alpha = j.at("alpha");
    g.max_lag = j.at("max_lag");
    g.A = j.at("A").get<std::vector<double>>();
    g.W = j.at("W").get<std::vector<double>>();
    g.W_powers = j.at("W_powers").get<std::vector<std::vector<double>>>();
    return g;
}

} // namespace

void save_model(const EngressionModel& m, const std::string& path) {
    ordered_json j;
    j["format"] = "ste-model";
    j["version"] = 1;
    j["kind"] = kind_name(m.kind);
    j["dims"] = dims_to_json(m.dims);
    j["noise"] = noise_to_json(m.noise);
    j["gcn"] = gcn_to_json(m.gcn);
    j["graph"] = graph_to_json(m.graph);
    j["node_mean"] = m.node_mean;
    j["node_std"] = m.node_std;
    ordered_json params = ordered_json::array();
    for (const auto& p : m.parameters())
        params.push_back({{"name", p->name}, {"shape", p->shape}, {"data", p->data}});
    j["params"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_model: cannot open '" + path + "' for writing");
    out << j.dump(1) << "\n";
    if (!out) throw std::runtime_error("save_model: write to '" + path + "' failed");
}

EngressionModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open '" + path + "'");
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("load_model: '" + path + "' is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != "ste-model")
        throw std::runtime_error("load_model: '" + path + "' is not a model file");

    const ModelKind kind = kind_from_name(j.at("kind"));
    const ModelDims dims = dims_from_json(j.at("dims"));
    const NoiseConfig noise = noise_from_json(j.at("noise"));
    const GcnConfig gcn = gcn_from_json(j.at("gcn"));
    const GraphSpec graph = graph_from_json(j.at("graph"));

    Rng scratch(0);
    EngressionModel m = make_model(kind, dims, noise, gcn, graph, scratch);
    m.node_mean = j.at("node_mean").get<std::vector<double>>();
    m.node_std = j.at("node_std").get<std::vector<double>>();

    auto params = m.parameters();
    const auto& stored = j.at("params");
    if (stored.size() != params.size())
        throw std::runtime_error("load_model: parameter count mismatch (file " + std::to_string(stored.size()) +
                                 ", model " + std::to_string(params.size()) + ")");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = stored[i];
        if (entry.at("name") != params[i]->name)
            throw std::runtime_error("load_model: parameter order mismatch at '" + params[i]->name + "'");
        auto data = entry.at("data").get<std::vector<double>>();
        if (data.size() != params[i]->data.size())
            throw std::runtime_error("load_model: size mismatch for parameter '" + params[i]->name + "'");
        params[i]->data = std::move(data);
    }
    return m;
}

} // namespace ste
