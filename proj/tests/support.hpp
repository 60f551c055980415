#pragma once

#include "ste/rng.hpp"
#include "ste/tensor.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace ste::testing {

// Scale-aware relative error: |a-b| / max(1, |a|, |b|). Behaves like absolute
// error near zero and like relative error for large magnitudes.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central finite-difference check of reverse-mode gradients. `loss_fn` must
// rebuild its expression from the live `params` tensors on every call and
// return a scalar. Returns the worst rel_err over every parameter entry.
inline double max_grad_rel_err(const std::vector<TensorPtr>& params, const std::function<TensorPtr()>& loss_fn,
                               double h = 1e-5) {
    for (auto& p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
    auto loss = loss_fn();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        p->ensure_grad();
        analytic.push_back(p->grad);
    }

    double worst = 0.0;
    NoGradGuard guard;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = *params[pi];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double keep = p.data[i];
            p.data[i] = keep + h;
            const double up = loss_fn()->value();
            p.data[i] = keep - h;
            const double dn = loss_fn()->value();
            p.data[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            worst = std::max(worst, rel_err(analytic[pi][i], fd));
        }
    }
    return worst;
}

// Random tensor with entries uniform on (lo, hi).
inline TensorPtr random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
    const auto n = shape_numel(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = rng.uniform(lo, hi);
    auto t = make_tensor(std::move(shape), std::move(data), requires_grad);
    t->requires_grad = requires_grad;
    return t;
}

} // namespace ste::testing
