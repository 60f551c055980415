#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace ste {

// Midpoint-convention sample quantile: the i-th order statistic (1-based)
// sits at probability (i-0.5)/M, with linear interpolation between adjacent
// order statistics and clamping beyond the extremes.
double quantile_midpoint(std::vector<double> values, double tau);

struct PointMetrics {
    double smape = 0.0; // percent, in [0, 200]
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> mase;  // missing when a node's naive denominator is zero
    std::optional<double> rmsse; // likewise
};

// actual/predicted: q*N row-major (time-major); train_history: T*N in the same
// units. Each metric follows its per-series definition and is averaged over
// nodes; SMAPE terms with y == yhat == 0 contribute zero.
PointMetrics point_metrics(const std::vector<double>& actual, const std::vector<double>& predicted, std::int64_t q,
                           std::int64_t n, const std::vector<double>& train_history, std::int64_t t_hist);

// Nonnegative quantile loss max{tau*e, (tau-1)*e}, e = y - yhat, averaged over
// all cells.
double pinball(const std::vector<double>& actual, const std::vector<double>& quantile_forecast, double tau);

// 2 * sum(pinball terms) / sum(actual); missing when sum(actual) == 0.
std::optional<double> rho_risk(const std::vector<double>& actual, const std::vector<double>& quantile_forecast,
                               double tau);

// Sample CRPS: (1/M) sum |x_j - y| - (1/(2 M^2)) sum_jk |x_j - x_k|. Exactly
// the integral of (F_M(x) - 1{x >= y})^2 for the empirical step CDF.
double crps_ensemble(double actual, const std::vector<double>& members);

// Mean CRPS over cells; members laid out as M consecutive blocks of `cells`.
double crps_mean(const std::vector<double>& actual, const std::vector<double>& members, std::int64_t m_members);

double winkler(double actual, double lower, double upper, double alpha);
double winkler_mean(const std::vector<double>& actual, const std::vector<double>& lower,
                    const std::vector<double>& upper, double alpha);

// PIT = #(members < y) / (M + 1).
double pit_value(double actual, const std::vector<double>& members);
std::vector<double> pit_sample(const std::vector<double>& actual, const std::vector<double>& members,
                               std::int64_t m_members);
// Pairs (theoretical (i-0.5)/n, sorted empirical PIT).
std::vector<std::pair<double, double>> pit_qq(std::vector<double> pits);

double empirical_coverage(const std::vector<double>& actual, const std::vector<double>& lower,
                          const std::vector<double>& upper);

struct McbResult {
    std::vector<double> mean_ranks;        // per model
    double critical_distance = 0.0;        // Nemenyi CD at the requested level
    std::size_t best_index = 0;            // argmin mean rank
    std::vector<bool> overlaps_best;       // interval [r +- CD/2] overlaps the best's
};

// scores[model][case], lower is better; ties get the average rank.
McbResult mcb(const std::vector<std::vector<double>>& scores, double alpha = 0.05);

} // namespace ste
