#pragma once

#include <cmath>
#include <vector>

#include "mgfusion/autodiff/ops.hpp"

namespace mgfusion::forecast {

struct StepMetrics {
    std::size_t step = 0;  // 1-based prediction step
    double mae = 0.0;
    double rmse = 0.0;
};

struct Metrics {
    double mae = 0.0;
    double rmse = 0.0;
    std::vector<StepMetrics> per_step;

    /// Metrics of the prediction made `step` steps ahead (1-based).
    const StepMetrics& at_step(std::size_t step) const {
        if (step == 0 || step > per_step.size()) {
            throw ConfigError("no metrics for prediction step " + std::to_string(step));
        }
        return per_step[step - 1];
    }
};

/// MAE / RMSE over all elements, plus a breakdown per prediction step.
/// Arrays of rank 3 are read as [B, steps, N]; lower ranks as one step.
inline Metrics evaluate(const ad::Array& pred, const ad::Array& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("evaluate: prediction " + ad::shape_str(pred.shape()) + " vs target " +
                         ad::shape_str(target.shape()));
    }
    std::size_t batch = 1, steps = 1, inner = pred.size();
    if (pred.rank() == 3) {
        batch = pred.dim(0);
        steps = pred.dim(1);
        inner = pred.dim(2);
    }
    Metrics m;
    double abs_total = 0.0;
    double sq_total = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
        double abs_s = 0.0;
        double sq_s = 0.0;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t at = (b * steps + s) * inner + i;
                const double e = pred[at] - target[at];
                abs_s += std::fabs(e);
                sq_s += e * e;
            }
        const double count = static_cast<double>(batch * inner);
        m.per_step.push_back({s + 1, abs_s / count, std::sqrt(sq_s / count)});
        abs_total += abs_s;
        sq_total += sq_s;
    }
    const double total = static_cast<double>(pred.size());
    m.mae = abs_total / total;
    m.rmse = std::sqrt(sq_total / total);
    return m;
}

/// Mean absolute deviation over every element.
inline ad::Var l1_loss(ad::Var pred, ad::Var target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("l1_loss: prediction " + ad::shape_str(pred.shape()) + " vs target " +
                         ad::shape_str(target.shape()));
    }
    return ad::mean_all(ad::abs(ad::sub(pred, target)));
}

}  // namespace mgfusion::forecast
