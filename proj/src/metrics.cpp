#include "ste/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ste {

double quantile_midpoint(std::vector<double> values, double tau) {
    if (values.empty()) throw std::invalid_argument("quantile_midpoint: empty sample");
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("quantile_midpoint: tau outside [0,1]");
    std::sort(values.begin(), values.end());
    const auto m = values.size();
    // order statistic i (1-based) carries probability (i - 0.5) / m
    const double h = tau * static_cast<double>(m) + 0.5;
    if (h <= 1.0) return values.front();
    if (h >= static_cast<double>(m)) return values.back();
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    return values[lo - 1] + frac * (values[lo] - values[lo - 1]);
}

namespace {

double pinball_term(double y, double yhat, double tau) {
    const double e = y - yhat;
    return std::max(tau * e, (tau - 1.0) * e);
}

} // namespace

PointMetrics point_metrics(const std::vector<double>& actual, const std::vector<double>& predicted, std::int64_t q,
                           std::int64_t n, const std::vector<double>& train_history, std::int64_t t_hist) {
    if (static_cast<std::int64_t>(actual.size()) != q * n || predicted.size() != actual.size())
        throw std::invalid_argument("point_metrics: forecast arrays must be q*N");
    if (static_cast<std::int64_t>(train_history.size()) != t_hist * n)
        throw std::invalid_argument("point_metrics: history array must be T*N");
    if (t_hist < 2) throw std::invalid_argument("point_metrics: scaled metrics need history length >= 2");

    PointMetrics out;
    double smape_acc = 0.0, mae_acc = 0.0, rmse_acc = 0.0, mase_acc = 0.0, rmsse_acc = 0.0;
    bool scaled_ok = true;
    for (std::int64_t j = 0; j < n; ++j) {
        double ae = 0.0, se = 0.0, smape = 0.0;
        for (std::int64_t t = 0; t < q; ++t) {
            const double y = actual[static_cast<std::size_t>(t * n + j)];
            const double yhat = predicted[static_cast<std::size_t>(t * n + j)];
            const double diff = std::abs(yhat - y);
            ae += diff;
            se += (yhat - y) * (yhat - y);
            const double denom = 0.5 * (std::abs(y) + std::abs(yhat));
            if (denom > 0.0) smape += diff / denom;
        }
        const double qd = static_cast<double>(q);
        smape_acc += 100.0 * smape / qd;
        mae_acc += ae / qd;
        rmse_acc += std::sqrt(se / qd);

        double naive_ae = 0.0, naive_se = 0.0;
        for (std::int64_t t = 1; t < t_hist; ++t) {
            const double step = train_history[static_cast<std::size_t>(t * n + j)] -
                                train_history[static_cast<std::size_t>((t - 1) * n + j)];
            naive_ae += std::abs(step);
            naive_se += step * step;
        }
        naive_ae /= static_cast<double>(t_hist - 1);
        naive_se /= static_cast<double>(t_hist - 1);
        if (naive_ae == 0.0 || naive_se == 0.0) {
            scaled_ok = false;
        } else {
            mase_acc += (ae / qd) / naive_ae;
            rmsse_acc += std::sqrt((se / qd) / naive_se);
        }
    }
    const double nd = static_cast<double>(n);
    out.smape = smape_acc / nd;
    out.mae = mae_acc / nd;
    out.rmse = rmse_acc / nd;
    if (scaled_ok) {
        out.mase = mase_acc / nd;
        out.rmsse = rmsse_acc / nd;
    }
    return out;
}

double pinball(const std::vector<double>& actual, const std::vector<double>& quantile_forecast, double tau) {
    if (tau <= 0.0 || tau >= 1.0) throw std::invalid_argument("pinball: tau must lie in (0,1)");
    if (actual.size() != quantile_forecast.size() || actual.empty())
        throw std::invalid_argument("pinball: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) acc += pinball_term(actual[i], quantile_forecast[i], tau);
    return acc / static_cast<double>(actual.size());
}

std::optional<double> rho_risk(const std::vector<double>& actual, const std::vector<double>& quantile_forecast,
                               double tau) {
    if (tau <= 0.0 || tau >= 1.0) throw std::invalid_argument("rho_risk: tau must lie in (0,1)");
    if (actual.size() != quantile_forecast.size() || actual.empty())
        throw std::invalid_argument("rho_risk: size mismatch");
    double losses = 0.0, total = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        losses += pinball_term(actual[i], quantile_forecast[i], tau);
        total += actual[i];
    }
    if (total == 0.0) return std::nullopt;
    return 2.0 * losses / total;
}

double crps_ensemble(double actual, const std::vector<double>& members) {
    if (members.empty()) throw std::invalid_argument("crps_ensemble: empty ensemble");
    const auto m = members.size();
    double acc = 0.0;
    for (double x : members) acc += std::abs(x - actual);
    acc /= static_cast<double>(m);
    double spread = 0.0;
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = j + 1; k < m; ++k) spread += std::abs(members[j] - members[k]);
    // full double sum is twice the j<k sum
    return acc - spread / static_cast<double>(m * m);
}

double crps_mean(const std::vector<double>& actual, const std::vector<double>& members, std::int64_t m_members) {
    if (m_members < 1) throw std::invalid_argument("crps_mean: need at least one member");
    const auto cells = actual.size();
    if (members.size() != cells * static_cast<std::size_t>(m_members))
        throw std::invalid_argument("crps_mean: member array must be M*cells");
    if (cells == 0) throw std::invalid_argument("crps_mean: no cells");
    double acc = 0.0;
    std::vector<double> column(static_cast<std::size_t>(m_members));
    for (std::size_t c = 0; c < cells; ++c) {
        for (std::int64_t j = 0; j < m_members; ++j)
            column[static_cast<std::size_t>(j)] = members[static_cast<std::size_t>(j) * cells + c];
        acc += crps_ensemble(actual[c], column);
    }
    return acc / static_cast<double>(cells);
}

double winkler(double actual, double lower, double upper, double alpha) {
    if (lower > upper) throw std::invalid_argument("winkler: inverted interval");
    if (alpha <= 0.0 || alpha >= 1.0) throw std::invalid_argument("winkler: alpha must lie in (0,1)");
    const double width = upper - lower;
    if (actual < lower) return width + (2.0 / alpha) * (lower - actual);
    if (actual > upper) return width + (2.0 / alpha) * (actual - upper);
    return width;
}

double winkler_mean(const std::vector<double>& actual, const std::vector<double>& lower,
                    const std::vector<double>& upper, double alpha) {
    if (actual.size() != lower.size() || actual.size() != upper.size() || actual.empty())
        throw std::invalid_argument("winkler_mean: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) acc += winkler(actual[i], lower[i], upper[i], alpha);
    return acc / static_cast<double>(actual.size());
}

double pit_value(double actual, const std::vector<double>& members) {
    if (members.empty()) throw std::invalid_argument("pit_value: empty ensemble");
    std::size_t below = 0;
    for (double x : members)
        if (x < actual) ++below;
    return static_cast<double>(below) / static_cast<double>(members.size() + 1);
}

std::vector<double> pit_sample(const std::vector<double>& actual, const std::vector<double>& members,
                               std::int64_t m_members) {
    const auto cells = actual.size();
    if (members.size() != cells * static_cast<std::size_t>(m_members))
        throw std::invalid_argument("pit_sample: member array must be M*cells");
    std::vector<double> pits(cells);
    std::vector<double> column(static_cast<std::size_t>(m_members));
    for (std::size_t c = 0; c < cells; ++c) {
        for (std::int64_t j = 0; j < m_members; ++j)
            column[static_cast<std::size_t>(j)] = members[static_cast<std::size_t>(j) * cells + c];
        pits[c] = pit_value(actual[c], column);
    }
    return pits;
}

std::vector<std::pair<double, double>> pit_qq(std::vector<double> pits) {
    std::sort(pits.begin(), pits.end());
    std::vector<std::pair<double, double>> qq(pits.size());
    const double n = static_cast<double>(pits.size());
    for (std::size_t i = 0; i < pits.size(); ++i)
        qq[i] = {(static_cast<double>(i) + 0.5) / n, pits[i]};
    return qq;
}

double empirical_coverage(const std::vector<double>& actual, const std::vector<double>& lower,
                          const std::vector<double>& upper) {
    if (actual.size() != lower.size() || actual.size() != upper.size() || actual.empty())
        throw std::invalid_argument("empirical_coverage: size mismatch");
    std::size_t inside = 0;
    for (std::size_t i = 0; i < actual.size(); ++i)
        if (lower[i] <= actual[i] && actual[i] <= upper[i]) ++inside;
    return static_cast<double>(inside) / static_cast<double>(actual.size());
}

namespace {

// Two-sided Nemenyi constants q_0.05 (studentized range at infinite df over
// sqrt(2)) for k = 2..10 compared models.
constexpr double kNemenyi05[] = {1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164};

} // namespace

McbResult mcb(const std::vector<std::vector<double>>& scores, double alpha) {
    const std::size_t k = scores.size();
    if (k < 2) throw std::invalid_argument("mcb: need at least two models");
    const std::size_t cases = scores[0].size();
    if (cases < 2) throw std::invalid_argument("mcb: need at least two cases");
    for (const auto& row : scores)
        if (row.size() != cases) throw std::invalid_argument("mcb: ragged score matrix");
    if (alpha != 0.05) throw std::invalid_argument("mcb: only the 0.05 level is tabulated");
    if (k > 10) throw std::invalid_argument("mcb: critical distance tabulated for at most 10 models, got " +
                                            std::to_string(k));

    McbResult r;
    r.mean_ranks.assign(k, 0.0);
    std::vector<std::size_t> order(k);
    for (std::size_t c = 0; c < cases; ++c) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a][c] < scores[b][c]; });
        std::size_t i = 0;
        while (i < k) {
            std::size_t j = i;
            while (j + 1 < k && scores[order[j + 1]][c] == scores[order[i]][c]) ++j;
            const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0; // average of 1-based positions i..j
            for (std::size_t idx = i; idx <= j; ++idx) r.mean_ranks[order[idx]] += avg_rank;
            i = j + 1;
        }
    }
    for (auto& v : r.mean_ranks) v /= static_cast<double>(cases);

    r.critical_distance = kNemenyi05[k - 2] * std::sqrt(static_cast<double>(k * (k + 1)) /
                                                        (12.0 * static_cast<double>(cases)));
    r.best_index = static_cast<std::size_t>(
        std::min_element(r.mean_ranks.begin(), r.mean_ranks.end()) - r.mean_ranks.begin());
    const double best_hi = r.mean_ranks[r.best_index] + 0.5 * r.critical_distance;
    r.overlaps_best.assign(k, false);
    for (std::size_t m = 0; m < k; ++m)
        r.overlaps_best[m] = r.mean_ranks[m] - 0.5 * r.critical_distance <= best_hi;
    return r;
}

} // namespace ste
