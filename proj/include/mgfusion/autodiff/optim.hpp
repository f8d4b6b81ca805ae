#pragma once

#include <cmath>

#include "mgfusion/autodiff/parameter.hpp"

namespace mgfusion::ad {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update using the gradient stored in `p.grad`.
inline void adam_step(Parameter& p, const AdamConfig& cfg) {
    ++p.step;
    const double t = static_cast<double>(p.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    auto& w = p.value.storage();
    const auto& g = p.grad.storage();
    for (std::size_t i = 0; i < w.size(); ++i) {
        p.first_moment[i] = cfg.beta1 * p.first_moment[i] + (1.0 - cfg.beta1) * g[i];
        p.second_moment[i] = cfg.beta2 * p.second_moment[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = p.first_moment[i] / bc1;
        const double v_hat = p.second_moment[i] / bc2;
        w[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

inline void adam_step(ParameterSet& params, const AdamConfig& cfg) {
    for (auto& p : params) adam_step(p, cfg);
}

}  // namespace mgfusion::ad
