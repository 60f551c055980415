#pragma once

#include "ste/models.hpp"

#include <cstdint>
#include <vector>

namespace ste {

// Per-trajectory noise magnitude for one node: the Frobenius norm of that
// node's injected-noise block (temporal x embedding dimensions). Requires an
// ensemble sampled with capture_noise on.
std::vector<double> noise_norms(const ForecastEnsemble& ensemble, std::int64_t node);

struct LagImportance {
    std::vector<double> frob; // ||Phi_l||_F per spatial lag
    std::vector<double> pct;  // 100 * frob_l / sum(frob); sums to 100
};

// Spatial-lag importances of a trained spatiotemporal autoregressive
// embedding; defined only for that model kind.
LagImportance lag_importance(const EngressionModel& model);

} // namespace ste
