#include "ste/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

namespace ste {

namespace {

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

void check_one(const NodeCoords& c) {
    if (!(c.lat >= -90.0 && c.lat <= 90.0))
        throw std::invalid_argument("coordinates: latitude " + std::to_string(c.lat) + " out of [-90,90] for node '" +
                                    c.node_id + "'");
    if (!(c.lon >= -180.0 && c.lon <= 180.0))
        throw std::invalid_argument("coordinates: longitude " + std::to_string(c.lon) + " out of [-180,180] for node '" +
                                    c.node_id + "'");
}

} // namespace

void validate_coords(const std::vector<NodeCoords>& coords) {
    std::set<std::string> ids;
    for (const auto& c : coords) {
        check_one(c);
        if (!ids.insert(c.node_id).second)
            throw std::invalid_argument("coordinates: duplicate node id '" + c.node_id + "'");
    }
}

double haversine(const NodeCoords& a, const NodeCoords& b, double radius_km) {
    if (radius_km <= 0.0) throw std::invalid_argument("haversine: radius must be positive");
    check_one(a);
    check_one(b);
    const double lat1 = deg2rad(a.lat), lat2 = deg2rad(b.lat);
    const double dlat = 0.5 * (lat1 - lat2);
    const double dlon = 0.5 * (deg2rad(a.lon) - deg2rad(b.lon));
    const double s = std::sin(dlat) * std::sin(dlat) + std::cos(lat1) * std::cos(lat2) * std::sin(dlon) * std::sin(dlon);
    return 2.0 * radius_km * std::asin(std::sqrt(std::clamp(s, 0.0, 1.0)));
}

std::vector<double> distance_matrix(const std::vector<NodeCoords>& coords, double radius_km) {
    const std::int64_t n = static_cast<std::int64_t>(coords.size());
    std::vector<double> d(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = i + 1; j < n; ++j) {
            const double v = haversine(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)], radius_km);
            d[static_cast<std::size_t>(i * n + j)] = v;
            d[static_cast<std::size_t>(j * n + i)] = v;
        }
    return d;
}

double default_sigma_sq(const std::vector<double>& dist, std::int64_t n) {
    std::vector<double> off;
    off.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = i + 1; j < n; ++j) off.push_back(dist[static_cast<std::size_t>(i * n + j)]);
    if (off.empty()) throw std::invalid_argument("default_sigma_sq: need at least two nodes");
    std::sort(off.begin(), off.end());
    const std::size_t m = off.size();
    const double median = m % 2 == 1 ? off[m / 2] : 0.5 * (off[m / 2 - 1] + off[m / 2]);
    if (median <= 0.0) throw std::invalid_argument("default_sigma_sq: median pairwise distance is zero");
    return median * median;
}

std::vector<double> build_adjacency(const std::vector<double>& dist, std::int64_t n, double sigma_sq, double epsilon) {
    if (n < 2) throw std::invalid_argument("build_adjacency: need at least two nodes");
    if (sigma_sq <= 0.0) throw std::invalid_argument("build_adjacency: sigma_sq must be positive");
    if (epsilon < 0.0 || epsilon >= 1.0) throw std::invalid_argument("build_adjacency: epsilon must lie in [0,1)");
    std::vector<double> A(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = dist[static_cast<std::size_t>(i * n + j)];
            const double a = std::exp(-d * d / sigma_sq);
            if (a >= epsilon) A[static_cast<std::size_t>(i * n + j)] = a;
        }
    return A;
}

std::vector<double> build_weights(const std::vector<double>& dist, std::int64_t n, int alpha) {
    if (n < 2) throw std::invalid_argument("build_weights: need at least two nodes");
    if (alpha < 1) throw std::invalid_argument("build_weights: alpha must be a positive integer");
    std::vector<double> W(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = dist[static_cast<std::size_t>(i * n + j)];
            if (d <= 0.0)
                throw std::invalid_argument("build_weights: nodes " + std::to_string(i) + " and " + std::to_string(j) +
                                            " are coincident; deduplicate locations before building weights");
            const double w = 1.0 / std::pow(d, static_cast<double>(alpha));
            W[static_cast<std::size_t>(i * n + j)] = w;
            row_sum += w;
        }
        for (std::int64_t j = 0; j < n; ++j) W[static_cast<std::size_t>(i * n + j)] /= row_sum;
    }
    return W;
}

std::vector<std::vector<double>> matrix_powers(const std::vector<double>& W, std::int64_t n, int max_lag) {
    if (max_lag < 0) throw std::invalid_argument("matrix_powers: max_lag must be nonnegative");
    std::vector<std::vector<double>> powers;
    powers.reserve(static_cast<std::size_t>(max_lag) + 1);
    std::vector<double> I(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) I[static_cast<std::size_t>(i * n + i)] = 1.0;
    powers.push_back(std::move(I));
    for (int l = 1; l <= max_lag; ++l) {
        const auto& prev = powers.back();
        std::vector<double> next(static_cast<std::size_t>(n * n), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t k = 0; k < n; ++k) {
                const double p = prev[static_cast<std::size_t>(i * n + k)];
                if (p == 0.0) continue;
                for (std::int64_t j = 0; j < n; ++j)
                    next[static_cast<std::size_t>(i * n + j)] += p * W[static_cast<std::size_t>(k * n + j)];
            }
        powers.push_back(std::move(next));
    }
    return powers;
}

double morans_i(const std::vector<double>& values, const std::vector<double>& W, std::int64_t n) {
    if (n < 2) throw std::invalid_argument("morans_i: need at least two nodes");
    if (static_cast<std::int64_t>(values.size()) != n) throw std::invalid_argument("morans_i: value length mismatch");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    if (ss == 0.0) throw std::invalid_argument("morans_i: undefined Moran's I for constant field");
    double s0 = 0.0, cross = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double w = W[static_cast<std::size_t>(i * n + j)];
            s0 += w;
            cross += w * (values[static_cast<std::size_t>(i)] - mean) * (values[static_cast<std::size_t>(j)] - mean);
        }
    if (s0 == 0.0) throw std::invalid_argument("morans_i: total spatial weight is zero");
    return static_cast<double>(n) * cross / (s0 * ss);
}

std::vector<double> morans_i_series(const std::vector<double>& panel, std::int64_t T, std::int64_t n,
                                    const std::vector<double>& W) {
    if (static_cast<std::int64_t>(panel.size()) != T * n)
        throw std::invalid_argument("morans_i_series: panel size does not match T*N");
    std::vector<double> out(static_cast<std::size_t>(T));
    std::vector<double> slice(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < T; ++t) {
        std::copy_n(panel.data() + t * n, n, slice.data());
        const double first = slice[0];
        bool constant = true;
        for (double v : slice)
            if (v != first) {
                constant = false;
                break;
            }
        out[static_cast<std::size_t>(t)] = constant ? std::numeric_limits<double>::quiet_NaN() : morans_i(slice, W, n);
    }
    return out;
}

GraphSpec make_graph_spec(const std::vector<NodeCoords>& coords, const GraphOptions& opt) {
    validate_coords(coords);
    if (coords.size() < 2) throw std::invalid_argument("make_graph_spec: need at least two nodes");
    GraphSpec g;
    g.n = static_cast<std::int64_t>(coords.size());
    g.epsilon = opt.epsilon;
    g.alpha = opt.alpha;
    g.max_lag = opt.max_lag;
    const auto dist = distance_matrix(coords, opt.radius_km);
    g.sigma_sq = opt.sigma_sq > 0.0 ? opt.sigma_sq : default_sigma_sq(dist, g.n);
    if (opt.need_adjacency) g.A = build_adjacency(dist, g.n, g.sigma_sq, g.epsilon);
    if (opt.need_weights) {
        g.W = build_weights(dist, g.n, g.alpha);
        g.W_powers = matrix_powers(g.W, g.n, g.max_lag);
    }
    return g;
}

} // namespace ste
