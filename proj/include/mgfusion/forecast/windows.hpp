#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mgfusion/autodiff/array.hpp"

namespace mgfusion::forecast {

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;

    void validate() const {
        if (!(train > 0.0 && val > 0.0 && test > 0.0) || std::fabs(train + val + test - 1.0) > 1e-9) {
            throw ConfigError("split ratios must be positive and sum to 1");
        }
    }
};

/// Half-open time range [begin, end) of a chronological split.
struct Segment {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t length() const { return end - begin; }
};

struct SegmentSplit {
    Segment train;
    Segment val;
    Segment test;
};

inline SegmentSplit split_segments(std::size_t length, const SplitRatios& ratios) {
    ratios.validate();
    // the slack keeps 1000 * (0.7 + 0.1) from flooring to 799
    auto cut = [&](double r) { return static_cast<std::size_t>(std::floor(static_cast<double>(length) * r + 1e-9)); };
    const std::size_t train_end = cut(ratios.train);
    const std::size_t val_end = cut(ratios.train + ratios.val);
    return {{0, train_end}, {train_end, val_end}, {val_end, length}};
}

/// Sliding windows (stride 1) lying entirely inside one segment. Window `s`
/// reads inputs [s, s + window) and targets [s + window, s + window + horizon).
struct WindowSet {
    Segment segment;
    std::vector<std::size_t> starts;

    std::size_t size() const { return starts.size(); }
};

inline WindowSet windows_in(Segment seg, std::size_t window, std::size_t horizon) {
    WindowSet ws{seg, {}};
    const std::size_t span = window + horizon;
    if (seg.length() < span) return ws;
    for (std::size_t s = seg.begin; s + span <= seg.end; ++s) ws.starts.push_back(s);
    return ws;
}

struct WindowSplit {
    WindowSet train;
    WindowSet val;
    WindowSet test;
};

/// Chronological split with windows never straddling a segment boundary.
inline WindowSplit split_windows(std::size_t length, std::size_t window, std::size_t horizon,
                                 const SplitRatios& ratios = {}) {
    if (window == 0 || horizon == 0) throw ConfigError("window and horizon must be positive");
    const auto seg = split_segments(length, ratios);
    WindowSplit out{windows_in(seg.train, window, horizon), windows_in(seg.val, window, horizon),
                    windows_in(seg.test, window, horizon)};
    if (out.train.size() == 0 || out.val.size() == 0 || out.test.size() == 0) {
        const double smallest = std::min({ratios.train, ratios.val, ratios.test});
        const auto need = static_cast<std::size_t>(std::ceil(static_cast<double>(window + horizon) / smallest));
        throw ConfigError("series of length " + std::to_string(length) + " is too short for window " +
                          std::to_string(window) + " + horizon " + std::to_string(horizon) +
                          "; need at least " + std::to_string(need) + " steps");
    }
    return out;
}

/// Inputs [B, window, N] and targets [B, horizon, N].
struct WindowBatch {
    ad::Array inputs;
    ad::Array targets;
};

/// Gathers windows from a time-major [P, N] series.
inline WindowBatch make_batch(const ad::Array& series, std::span<const std::size_t> starts, std::size_t window,
                              std::size_t horizon) {
    const std::size_t p = series.dim(0);
    const std::size_t n = series.dim(1);
    const std::size_t b = starts.size();
    WindowBatch batch{ad::Array(ad::Shape{b, window, n}), ad::Array(ad::Shape{b, horizon, n})};
    for (std::size_t k = 0; k < b; ++k) {
        const std::size_t s = starts[k];
        if (s + window + horizon > p) throw ShapeError("window start " + std::to_string(s) + " runs past the series");
        for (std::size_t t = 0; t < window; ++t)
            for (std::size_t i = 0; i < n; ++i) batch.inputs.at(k, t, i) = series.at(s + t, i);
        for (std::size_t t = 0; t < horizon; ++t)
            for (std::size_t i = 0; i < n; ++i) batch.targets.at(k, t, i) = series.at(s + window + t, i);
    }
    return batch;
}

}  // namespace mgfusion::forecast
