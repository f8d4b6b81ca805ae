#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mgfusion/errors.hpp"

namespace mgfusion::graphs {

/// Pearson correlation, clamped to [-1, 1]. A zero-variance argument has no
/// measurable correlation and yields 0.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DataError("pearson: length mismatch (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
    }
    if (a.size() < 2) throw DataError("pearson: need at least 2 values");
    const double n = static_cast<double>(a.size());
    double mean_a = 0.0;
    double mean_b = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        mean_a += a[k];
        mean_b += b[k];
    }
    mean_a /= n;
    mean_b /= n;
    double cov = 0.0;
    double var_a = 0.0;
    double var_b = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double da = a[k] - mean_a;
        const double db = b[k] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a <= 0.0 || var_b <= 0.0) return 0.0;
    const double r = cov / (std::sqrt(var_a) * std::sqrt(var_b));
    return std::clamp(r, -1.0, 1.0);
}

struct ValueRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct Histogram {
    std::vector<double> edges;    // bins + 1 values
    std::vector<double> centers;  // bins values
    std::vector<double> heights;  // counts
    bool degenerate = false;      // range collapsed to a point; single bin
};

/// Equal-width histogram over [range.lo, range.hi]; the top edge is inclusive.
/// Values outside the range are clamped into the edge bins.
inline Histogram histogram(std::span<const double> series, std::size_t bins, ValueRange range) {
    if (series.empty()) throw DataError("histogram: empty series");
    if (bins < 1) throw ConfigError("histogram: bin count must be positive");
    Histogram h;
    if (!(range.hi > range.lo)) {
        h.degenerate = true;
        h.edges = {range.lo, range.lo};
        h.centers = {range.lo};
        h.heights = {static_cast<double>(series.size())};
        return h;
    }
    const double width = (range.hi - range.lo) / static_cast<double>(bins);
    h.edges.resize(bins + 1);
    h.centers.resize(bins);
    h.heights.assign(bins, 0.0);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = range.lo + width * static_cast<double>(b);
    h.edges[bins] = range.hi;
    for (std::size_t b = 0; b < bins; ++b) h.centers[b] = 0.5 * (h.edges[b] + h.edges[b + 1]);
    for (double v : series) {
        double pos = (v - range.lo) / width;
        auto idx = pos <= 0.0 ? std::size_t{0} : static_cast<std::size_t>(pos);
        if (idx >= bins) idx = bins - 1;
        h.heights[idx] += 1.0;
    }
    return h;
}

/// Histogram over the series' own min/max.
inline Histogram histogram(std::span<const double> series, std::size_t bins) {
    if (series.empty()) throw DataError("histogram: empty series");
    const auto [mn, mx] = std::minmax_element(series.begin(), series.end());
    return histogram(series, bins, ValueRange{*mn, *mx});
}

/// f(x) = alpha * exp(-beta * x)
struct ExponentialFit {
    double alpha = 0.0;
    double beta = 0.0;
    double residual = 0.0;  // sum of squared residuals over all bins
    std::size_t positive_bins = 0;
    std::size_t iterations = 0;  // Gauss-Newton iterations used
};

namespace detail {

inline double exp_sse(std::span<const double> x, std::span<const double> h, double alpha, double beta) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double r = h[k] - alpha * std::exp(-beta * x[k]);
        s += r * r;
    }
    return s;
}

}  // namespace detail

struct FitOptions {
    bool refine = false;  // Gauss-Newton polish on the untransformed residuals
    std::size_t max_iterations = 50;
    double step_tolerance = 1e-10;
};

/// Least-squares fit of alpha*exp(-beta*x): linear regression of ln(h) on x
/// over the strictly positive bins, optionally refined by Gauss-Newton.
inline ExponentialFit fit_exponential(std::span<const double> centers, std::span<const double> heights,
                                      const FitOptions& opts = {}) {
    if (centers.size() != heights.size()) throw DataError("fit_exponential: centers/heights length mismatch");
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t k = 0; k < centers.size(); ++k) {
        if (heights[k] > 0.0) {
            xs.push_back(centers[k]);
            ys.push_back(std::log(heights[k]));
        }
    }
    if (xs.size() < 2) {
        throw NumericalError("fit_exponential: need at least 2 bins with positive height, got " +
                             std::to_string(xs.size()));
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        mx += xs[k];
        my += ys[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
    }
    if (sxx <= 0.0) throw NumericalError("fit_exponential: bin centres are not distinct");
    const double slope = sxy / sxx;
    ExponentialFit fit;
    fit.beta = -slope;
    fit.alpha = std::exp(my - slope * mx);
    fit.positive_bins = xs.size();

    if (opts.refine) {
        double sse = detail::exp_sse(centers, heights, fit.alpha, fit.beta);
        for (std::size_t it = 0; it < opts.max_iterations; ++it) {
            double jaa = 0.0, jab = 0.0, jbb = 0.0, ga = 0.0, gb = 0.0;
            for (std::size_t k = 0; k < centers.size(); ++k) {
                const double e = std::exp(-fit.beta * centers[k]);
                const double da = e;
                const double db = -fit.alpha * centers[k] * e;
                const double r = heights[k] - fit.alpha * e;
                jaa += da * da;
                jab += da * db;
                jbb += db * db;
                ga += da * r;
                gb += db * r;
            }
            const double det = jaa * jbb - jab * jab;
            if (!(std::fabs(det) > 0.0) || !std::isfinite(det)) break;
            double step_a = (jbb * ga - jab * gb) / det;
            double step_b = (jaa * gb - jab * ga) / det;
            // Step halving keeps the objective non-increasing.
            double scale = 1.0;
            double next_sse = std::numeric_limits<double>::infinity();
            for (int tries = 0; tries < 30; ++tries) {
                next_sse = detail::exp_sse(centers, heights, fit.alpha + scale * step_a, fit.beta + scale * step_b);
                if (std::isfinite(next_sse) && next_sse <= sse) break;
                scale *= 0.5;
            }
            if (!(next_sse <= sse)) break;
            step_a *= scale;
            step_b *= scale;
            fit.alpha += step_a;
            fit.beta += step_b;
            sse = next_sse;
            fit.iterations = it + 1;
            if (std::fabs(step_a) < opts.step_tolerance && std::fabs(step_b) < opts.step_tolerance) break;
        }
    }
    fit.residual = detail::exp_sse(centers, heights, fit.alpha, fit.beta);
    if (!std::isfinite(fit.alpha) || !std::isfinite(fit.beta)) {
        throw NumericalError("fit_exponential: non-finite parameters");
    }
    return fit;
}

/// Additive smoothing followed by renormalisation.
inline std::vector<double> smooth_distribution(std::span<const double> p, double smoothing = 1e-10) {
    std::vector<double> out(p.begin(), p.end());
    double total = 0.0;
    for (double& v : out) {
        v += smoothing;
        total += v;
    }
    for (double& v : out) v /= total;
    return out;
}

/// KL(p || q) in nats; q is smoothed by 1e-10 before use, terms with p_i = 0 vanish.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) {
        throw DataError("kl_divergence: length mismatch (" + std::to_string(p.size()) + " vs " +
                        std::to_string(q.size()) + ")");
    }
    auto check_sum = [](std::span<const double> v, const char* name) {
        double s = 0.0;
        for (double x : v) {
            if (x < 0.0) throw DataError(std::string("kl_divergence: negative entry in ") + name);
            s += x;
        }
        if (std::fabs(s - 1.0) > 1e-9) throw DataError(std::string("kl_divergence: ") + name + " does not sum to 1");
    };
    check_sum(p, "p");
    check_sum(q, "q");
    const auto qs = smooth_distribution(q);
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / qs[i]);
    }
    return std::max(kl, 0.0);
}

/// (KL(p||q) + KL(q||p)) / 2
inline double symmetric_kl(std::span<const double> p, std::span<const double> q) {
    return 0.5 * (kl_divergence(p, q) + kl_divergence(q, p));
}

/// Population variance; 0 for fewer than two values.
inline double variance(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size());
}

}  // namespace mgfusion::graphs
