#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mgfusion/autodiff/array.hpp"
#include "mgfusion/graphs/node_table.hpp"
#include "mgfusion/graphs/stats.hpp"

namespace mgfusion::graphs {

enum class GraphKind { distance, neighbor, functionality, heuristic, temporal, fused };

inline constexpr std::array<GraphKind, 5> kGraphOrder = {GraphKind::distance, GraphKind::neighbor,
                                                         GraphKind::functionality, GraphKind::heuristic,
                                                         GraphKind::temporal};

inline std::string_view kind_name(GraphKind k) {
    switch (k) {
        case GraphKind::distance: return "distance";
        case GraphKind::neighbor: return "neighbor";
        case GraphKind::functionality: return "functionality";
        case GraphKind::heuristic: return "heuristic";
        case GraphKind::temporal: return "temporal";
        case GraphKind::fused: return "fused";
    }
    return "?";
}

inline char kind_letter(GraphKind k) {
    switch (k) {
        case GraphKind::distance: return 'D';
        case GraphKind::neighbor: return 'N';
        case GraphKind::functionality: return 'F';
        case GraphKind::heuristic: return 'H';
        case GraphKind::temporal: return 'T';
        case GraphKind::fused: return '*';
    }
    return '?';
}

inline GraphKind kind_from_name(std::string_view s) {
    for (GraphKind k : {GraphKind::distance, GraphKind::neighbor, GraphKind::functionality, GraphKind::heuristic,
                        GraphKind::temporal, GraphKind::fused}) {
        if (kind_name(k) == s) return k;
    }
    throw DataError("unknown graph kind '" + std::string(s) + "'");
}

enum class HeuristicMode { euclidean_params, kl_divergence };

struct KernelConfig {
    std::optional<double> sigma_d2;  // default: variance of pairwise distances
    double epsilon = 0.1;
    std::optional<double> sigma_h2;  // default: variance of pairwise heuristic distances
    std::size_t bins = 20;
    HeuristicMode heuristic_mode = HeuristicMode::euclidean_params;
    bool refine_fit = false;
    bool clamp_nonnegative = false;  // clamp Pearson graphs to [0, 1]

    void validate() const {
        if (sigma_d2 && !(*sigma_d2 > 0.0)) throw ConfigError("sigma_d2 must be > 0");
        if (sigma_h2 && !(*sigma_h2 > 0.0)) throw ConfigError("sigma_h2 must be > 0");
        if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in [0, 1)");
        if (bins < 2) throw ConfigError("histogram bin count must be >= 2");
    }
};

/// N x N adjacency for one similarity notion.
struct WeightMatrix {
    GraphKind kind = GraphKind::distance;
    ad::Array values;

    std::size_t n() const { return values.dim(0); }
    double operator()(std::size_t i, std::size_t j) const { return values.at(i, j); }
};

/// Ordered subset of (D, N, F, H, T).
struct GraphSet {
    std::vector<WeightMatrix> graphs;

    std::size_t size() const noexcept { return graphs.size(); }
    std::size_t nodes() const { return graphs.empty() ? 0 : graphs.front().n(); }
    const WeightMatrix& operator[](std::size_t i) const { return graphs[i]; }

    std::string letters() const {
        std::string s;
        for (const auto& g : graphs) s += kind_letter(g.kind);
        return s;
    }
};

/// Which of the five graphs to build.
struct GraphMask {
    std::array<bool, 5> enabled = {true, true, true, true, true};

    static GraphMask all() { return {}; }

    /// Parses letters like "D,N,T" or "DNT".
    static GraphMask parse(std::string_view text) {
        GraphMask m;
        m.enabled.fill(false);
        bool any = false;
        for (char c : text) {
            if (c == ',' || c == ' ') continue;
            bool matched = false;
            for (std::size_t i = 0; i < kGraphOrder.size(); ++i) {
                if (kind_letter(kGraphOrder[i]) == c) {
                    m.enabled[i] = true;
                    matched = any = true;
                }
            }
            if (!matched) throw ConfigError(std::string("unknown graph letter '") + c + "' (expected D,N,F,H,T)");
        }
        if (!any) throw ConfigError("graph mask selects no graphs");
        return m;
    }

    bool has(GraphKind k) const {
        for (std::size_t i = 0; i < kGraphOrder.size(); ++i) {
            if (kGraphOrder[i] == k) return enabled[i];
        }
        return false;
    }

    void set(GraphKind k, bool on) {
        for (std::size_t i = 0; i < kGraphOrder.size(); ++i) {
            if (kGraphOrder[i] == k) enabled[i] = on;
        }
    }

    std::size_t count() const {
        std::size_t c = 0;
        for (bool b : enabled) c += b ? 1 : 0;
        return c;
    }

    std::string letters() const {
        std::string s;
        for (std::size_t i = 0; i < kGraphOrder.size(); ++i) {
            if (enabled[i]) s += kind_letter(kGraphOrder[i]);
        }
        return s;
    }
};

namespace detail {

inline double euclidean(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline std::vector<double> upper_triangle(const ad::Array& m) {
    std::vector<double> v;
    const std::size_t n = m.dim(0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) v.push_back(m.at(i, j));
    return v;
}

/// Variance-matched kernel bandwidth; falls back to 1 when degenerate.
inline double default_bandwidth(const ad::Array& pairwise) {
    const double v = variance(upper_triangle(pairwise));
    return v > 0.0 && std::isfinite(v) ? v : 1.0;
}

}  // namespace detail

inline ad::Array pairwise_distances(const NodeTable& nodes) {
    const std::size_t n = nodes.size();
    for (const auto& node : nodes.nodes()) {
        if (!node.position) throw DataError("node '" + node.id + "' has no coordinates");
    }
    ad::Array d(ad::Shape{n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = detail::euclidean(*nodes[i].position, *nodes[j].position);
            d.at(i, j) = v;
            d.at(j, i) = v;
        }
    return d;
}

/// Thresholded Gaussian kernel over Euclidean distance.
inline WeightMatrix build_distance_graph(const NodeTable& nodes, const KernelConfig& cfg) {
    cfg.validate();
    const ad::Array d = pairwise_distances(nodes);
    const std::size_t n = nodes.size();
    double sigma2 = 0.0;
    if (cfg.sigma_d2) {
        sigma2 = *cfg.sigma_d2;
    } else {
        sigma2 = detail::default_bandwidth(d);
    }
    WeightMatrix w{GraphKind::distance, ad::Array(ad::Shape{n, n})};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double k = std::exp(-(d.at(i, j) * d.at(i, j)) / sigma2);
            const double v = k >= cfg.epsilon ? k : 0.0;
            w.values.at(i, j) = v;
            w.values.at(j, i) = v;
        }
    return w;
}

inline WeightMatrix build_neighbor_graph(const NodeTable& nodes) {
    nodes.check_adjacency();
    const std::size_t n = nodes.size();
    WeightMatrix w{GraphKind::neighbor, ad::Array(ad::Shape{n, n})};
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& nb : nodes[i].neighbors) w.values.at(i, *nodes.index_of(nb)) = 1.0;
    }
    return w;
}

namespace detail {

template <typename Get>
WeightMatrix pearson_graph(GraphKind kind, const NodeTable& nodes, bool clamp, Get get) {
    const std::size_t n = nodes.size();
    WeightMatrix w{kind, ad::Array(ad::Shape{n, n})};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double r = pearson(get(nodes[i]), get(nodes[j]));
            if (clamp) r = std::max(r, 0.0);
            w.values.at(i, j) = r;
            w.values.at(j, i) = r;
        }
    return w;
}

}  // namespace detail

/// Pearson correlation of function-count vectors; every function weighs equally.
inline WeightMatrix build_functionality_graph(const NodeTable& nodes, const KernelConfig& cfg = {}) {
    return detail::pearson_graph(GraphKind::functionality, nodes, cfg.clamp_nonnegative,
                                 [](const NodeRecord& r) { return std::span<const double>(r.functions); });
}

/// Pearson correlation of training series.
inline WeightMatrix build_temporal_graph(const NodeTable& nodes, const KernelConfig& cfg = {}) {
    return detail::pearson_graph(GraphKind::temporal, nodes, cfg.clamp_nonnegative,
                                 [](const NodeRecord& r) { return std::span<const double>(r.series); });
}

/// Per-node fit of the value histogram.
struct HeuristicFit {
    double alpha = 0.0;
    double beta = 0.0;
    double residual = 0.0;
    Histogram histogram;
    bool constant_path = false;  // histogram collapsed to one bin
};

inline ValueRange global_range(const NodeTable& nodes) {
    ValueRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& node : nodes.nodes()) {
        for (double v : node.series) {
            r.lo = std::min(r.lo, v);
            r.hi = std::max(r.hi, v);
        }
    }
    return r;
}

/// Histograms share edges spanning the global min/max across all nodes.
inline std::vector<HeuristicFit> fit_heuristics(const NodeTable& nodes, const KernelConfig& cfg) {
    cfg.validate();
    const ValueRange range = global_range(nodes);
    std::vector<HeuristicFit> fits;
    fits.reserve(nodes.size());
    for (const auto& node : nodes.nodes()) {
        if (node.series.empty()) throw DataError("node '" + node.id + "' has no series");
        HeuristicFit f;
        f.histogram = histogram(node.series, cfg.bins, range);
        if (f.histogram.degenerate) {
            f.alpha = f.histogram.heights.front();
            f.beta = 0.0;
            f.constant_path = true;
        } else {
            try {
                const auto fit = fit_exponential(f.histogram.centers, f.histogram.heights, {.refine = cfg.refine_fit});
                f.alpha = fit.alpha;
                f.beta = fit.beta;
                f.residual = fit.residual;
            } catch (const Error& e) {
                throw NumericalError("heuristic fit failed for node '" + node.id + "': " + e.what());
            }
        }
        fits.push_back(std::move(f));
    }
    return fits;
}

/// Pairwise heuristic distance d^H under the configured mode.
inline ad::Array heuristic_distances(const std::vector<HeuristicFit>& fits, HeuristicMode mode) {
    const std::size_t n = fits.size();
    ad::Array d(ad::Shape{n, n});
    std::vector<std::vector<double>> dists;
    if (mode == HeuristicMode::kl_divergence) {
        for (const auto& f : fits) {
            std::vector<double> p = f.histogram.heights;
            double total = 0.0;
            for (double v : p) total += v;
            for (double& v : p) v /= total;
            dists.push_back(smooth_distribution(p));
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = 0.0;
            if (mode == HeuristicMode::euclidean_params) {
                v = std::hypot(fits[i].alpha - fits[j].alpha, fits[i].beta - fits[j].beta);
            } else {
                v = symmetric_kl(dists[i], dists[j]);
            }
            d.at(i, j) = v;
            d.at(j, i) = v;
        }
    return d;
}

/// exp(-d^2 / sigma^2) off the diagonal, 0 on it.
inline WeightMatrix heuristic_kernel(const ad::Array& distances, double sigma_h2) {
    const std::size_t n = distances.dim(0);
    WeightMatrix w{GraphKind::heuristic, ad::Array(ad::Shape{n, n})};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dij = distances.at(i, j);
            const double v = std::exp(-(dij * dij) / sigma_h2);
            w.values.at(i, j) = v;
            w.values.at(j, i) = v;
        }
    return w;
}

inline WeightMatrix build_heuristic_graph(const NodeTable& nodes, const KernelConfig& cfg) {
    const auto fits = fit_heuristics(nodes, cfg);
    const ad::Array d = heuristic_distances(fits, cfg.heuristic_mode);
    const double sigma2 = cfg.sigma_h2 ? *cfg.sigma_h2 : detail::default_bandwidth(d);
    return heuristic_kernel(d, sigma2);
}

inline WeightMatrix build_graph(GraphKind kind, const NodeTable& nodes, const KernelConfig& cfg) {
    switch (kind) {
        case GraphKind::distance: return build_distance_graph(nodes, cfg);
        case GraphKind::neighbor: return build_neighbor_graph(nodes);
        case GraphKind::functionality: return build_functionality_graph(nodes, cfg);
        case GraphKind::heuristic: return build_heuristic_graph(nodes, cfg);
        case GraphKind::temporal: return build_temporal_graph(nodes, cfg);
        case GraphKind::fused: break;
    }
    throw ConfigError("the fused graph is not built from node data");
}

/// Builds the enabled graphs in the fixed order D, N, F, H, T.
inline GraphSet assemble_graph_set(const NodeTable& nodes, const KernelConfig& cfg,
                                   const GraphMask& mask = GraphMask::all()) {
    cfg.validate();
    if (mask.count() == 0) throw ConfigError("graph mask selects no graphs");
    GraphSet set;
    for (GraphKind kind : kGraphOrder) {
        if (!mask.has(kind)) continue;
        try {
            set.graphs.push_back(build_graph(kind, nodes, cfg));
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(kind_name(kind)) + " graph: " + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(kind_name(kind)) + " graph: " + e.what());
        } catch (const Error& e) {
            throw DataError(std::string(kind_name(kind)) + " graph: " + e.what());
        }
    }
    return set;
}

}  // namespace mgfusion::graphs
