#include "ste/explain.hpp"

#include <cmath>
#include <stdexcept>

namespace ste {

std::vector<double> noise_norms(const ForecastEnsemble& ensemble, std::int64_t node) {
    if (ensemble.noise_shape.size() != 3)
        throw std::invalid_argument("noise_norms: ensemble carries no noise block shape");
    const std::int64_t p = ensemble.noise_shape[0];
    const std::int64_t n = ensemble.noise_shape[1];
    const std::int64_t f = ensemble.noise_shape[2];
    if (node < 0 || node >= n)
        throw std::out_of_range("noise_norms: node " + std::to_string(node) + " outside [0," + std::to_string(n) +
                                ")");
    const std::int64_t block = p * n * f;
    if (static_cast<std::int64_t>(ensemble.captured_noise.size()) != ensemble.m_members * block)
        throw std::invalid_argument("noise_norms: ensemble was sampled without noise capture");

    std::vector<double> norms(static_cast<std::size_t>(ensemble.m_members));
    for (std::int64_t m = 0; m < ensemble.m_members; ++m) {
        double ss = 0.0;
        for (std::int64_t t = 0; t < p; ++t)
            for (std::int64_t k = 0; k < f; ++k) {
                const double v = ensemble.captured_noise[static_cast<std::size_t>(m * block + (t * n + node) * f + k)];
                ss += v * v;
            }
        norms[static_cast<std::size_t>(m)] = std::sqrt(ss);
    }
    return norms;
}

LagImportance lag_importance(const EngressionModel& model) {
    if (model.kind != ModelKind::sten)
        throw std::invalid_argument("lag_importance: defined only for the spatiotemporal autoregressive embedding");
    LagImportance out;
    double total = 0.0;
    for (const auto& phi : model.star_phi) {
        double ss = 0.0;
        for (double v : phi->data) ss += v * v;
        out.frob.push_back(std::sqrt(ss));
        total += out.frob.back();
    }
    if (total <= 0.0)
        throw std::invalid_argument("lag_importance: all lag matrices are zero; importances are undefined");
    for (double fnorm : out.frob) out.pct.push_back(100.0 * fnorm / total);
    return out;
}

} // namespace ste
