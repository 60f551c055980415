#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ste {

inline constexpr double kEarthRadiusKm = 6371.0;

struct NodeCoords {
    std::string node_id;
    double lat = 0.0; // degrees, [-90, 90]
    double lon = 0.0; // degrees, [-180, 180]
};

void validate_coords(const std::vector<NodeCoords>& coords);

// Great-circle distance in the units of radius_km.
double haversine(const NodeCoords& a, const NodeCoords& b, double radius_km = kEarthRadiusKm);

// n*n row-major pairwise distances.
std::vector<double> distance_matrix(const std::vector<NodeCoords>& coords, double radius_km = kEarthRadiusKm);

// Median of the off-diagonal pairwise distances, squared: the default
// Gaussian-kernel bandwidth.
double default_sigma_sq(const std::vector<double>& dist, std::int64_t n);

// a_ij = exp(-d_ij^2 / sigma_sq) when i != j and the value clears epsilon; 0 otherwise.
std::vector<double> build_adjacency(const std::vector<double>& dist, std::int64_t n, double sigma_sq, double epsilon);

// Row-normalized inverse-distance-power weights: raw w_ij = 1/d_ij^alpha for
// i != j, each row divided by its sum. Coincident nodes are an error.
std::vector<double> build_weights(const std::vector<double>& dist, std::int64_t n, int alpha);

// [W^0, W^1, ..., W^max_lag]; W^0 is the identity.
std::vector<std::vector<double>> matrix_powers(const std::vector<double>& W, std::int64_t n, int max_lag);

// Global spatial autocorrelation:
//   I = n * sum_ij w_ij (y_i - ybar)(y_j - ybar) / (sum_{i!=j} w_ij * sum_i (y_i - ybar)^2)
double morans_i(const std::vector<double>& values, const std::vector<double>& W, std::int64_t n);

// One Moran's I per time slice of a T*N row-major panel; slices with zero
// variance yield NaN rather than aborting the series.
std::vector<double> morans_i_series(const std::vector<double>& panel, std::int64_t T, std::int64_t n,
                                    const std::vector<double>& W);

// Everything derived from node geography that the models consume.
struct GraphSpec {
    std::int64_t n = 0;
    std::vector<double> A;                     // GCEN adjacency, n*n
    std::vector<double> W;                     // STEN weights, n*n, rows sum to 1
    std::vector<std::vector<double>> W_powers; // W^0..W^max_lag
    double sigma_sq = 0.0;
    double epsilon = 0.1;
    int alpha = 1;
    int max_lag = 0;
};

struct GraphOptions {
    double radius_km = kEarthRadiusKm;
    double sigma_sq = 0.0; // <= 0 requests the squared-median default
    double epsilon = 0.1;
    int alpha = 1;
    int max_lag = 1;
    bool need_adjacency = true; // GCEN path
    bool need_weights = true;   // STEN path
};

GraphSpec make_graph_spec(const std::vector<NodeCoords>& coords, const GraphOptions& opt);

} // namespace ste
