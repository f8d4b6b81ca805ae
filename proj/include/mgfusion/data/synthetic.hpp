#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgfusion/data/dataset.hpp"
#include "mgfusion/graphs/stats.hpp"
#include "mgfusion/random.hpp"

namespace mgfusion::data {

/// How strongly each latent relation drives the diffusion term.
struct MixingWeights {
    double distance = 0.1;
    double neighbor = 0.4;
    double functionality = 0.2;
    double heuristic = 0.1;
    double temporal = 0.2;

    double sum() const { return distance + neighbor + functionality + heuristic + temporal; }
};

struct SyntheticSpec {
    std::size_t nodes = 20;
    std::size_t functions = 6;
    std::size_t length = 2000;
    std::uint64_t seed = 0;
    MixingWeights lambda{};

    std::size_t communities = 4;
    double dominant_count = 30.0;  // count of a community's leading category
    double extent = 2000.0;  // positions uniform in [0, extent]^2
    double p_in = 0.6;       // edge probability inside a community
    double p_out = 0.05;
    double persistence = 0.3;  // s(t) = a s(t-1) + b Mix s(t-1) + noise + events
    double diffusion = 0.65;
    double innovation = 0.1;
    std::size_t period = 24;
    double seasonal = 3.0;
    double seasonal_drift = 0.9;  // day-to-day AR(1) coefficient of the daily profiles
    double event_rate = 0.02;  // per-step probability is event_rate * alpha / beta
    double noise = 1.0;
    std::size_t burn_in = 200;

    void validate() const {
        const double l[] = {lambda.distance, lambda.neighbor, lambda.functionality, lambda.heuristic,
                            lambda.temporal};
        for (double v : l) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("mixing weights must be finite and >= 0");
        }
        if (!(lambda.sum() > 0.0)) throw ConfigError("mixing weights must not all be zero");
        if (nodes < 2) throw ConfigError("synthetic data needs at least 2 nodes");
        if (functions < 1) throw ConfigError("synthetic data needs at least 1 function category");
        if (length < 2) throw ConfigError("synthetic series length must be at least 2");
        if (communities < 1 || communities > nodes) throw ConfigError("communities must lie in [1, nodes]");
        if (!(dominant_count >= 0.0)) throw ConfigError("dominant_count must be >= 0");
        if (!(extent > 0.0)) throw ConfigError("extent must be positive");
        if (!(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0)) {
            throw ConfigError("edge probabilities must lie in [0, 1]");
        }
        if (!(persistence >= 0.0 && diffusion >= 0.0 && persistence + diffusion < 1.0)) {
            throw ConfigError("persistence + diffusion must be below 1 for a stable process");
        }
        if (period < 1) throw ConfigError("period must be positive");
        if (!(seasonal_drift >= 0.0 && seasonal_drift <= 1.0)) throw ConfigError("seasonal_drift must lie in [0, 1]");
        if (!(innovation >= 0.0 && seasonal >= 0.0 && noise >= 0.0 && event_rate >= 0.0)) {
            throw ConfigError("noise levels and rates must be >= 0");
        }
        // largest per-step event probability is event_rate * 3 / 0.5
        if (event_rate * 6.0 > 1.0) throw ConfigError("event_rate too large, must be <= 1/6");
    }
};

/// Planted factors kept for verification.
struct SyntheticTruth {
    std::vector<std::size_t> community;
    std::vector<double> alpha;  // event amplitude parameter, in [1, 3]
    std::vector<double> beta;   // event magnitudes ~ Exp(beta), beta in [0.5, 1.5]
    std::vector<std::vector<double>> events;  // drawn magnitudes per node
    ad::Array mixing;                          // row-stochastic-or-less [N, N]
};

struct SyntheticDataset {
    DatasetBundle bundle;
    SyntheticTruth truth;
};

inline nlohmann::json to_json(const SyntheticSpec& s) {
    return {{"nodes", s.nodes},
            {"functions", s.functions},
            {"length", s.length},
            {"seed", s.seed},
            {"lambda",
             {{"D", s.lambda.distance},
              {"N", s.lambda.neighbor},
              {"F", s.lambda.functionality},
              {"H", s.lambda.heuristic},
              {"T", s.lambda.temporal}}},
            {"communities", s.communities},
            {"dominant_count", s.dominant_count},
            {"extent", s.extent},
            {"p_in", s.p_in},
            {"p_out", s.p_out},
            {"persistence", s.persistence},
            {"diffusion", s.diffusion},
            {"innovation", s.innovation},
            {"period", s.period},
            {"seasonal", s.seasonal},
            {"seasonal_drift", s.seasonal_drift},
            {"event_rate", s.event_rate},
            {"noise", s.noise},
            {"burn_in", s.burn_in}};
}

namespace detail {

// Zero diagonal, then each row scaled to sum 1 (rows summing to 0 stay 0).
inline void row_normalize(ad::Array& m) {
    const std::size_t n = m.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
        m.at(i, i) = 0.0;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += m.at(i, j);
        if (s > 0.0)
            for (std::size_t j = 0; j < n; ++j) m.at(i, j) /= s;
    }
}

inline ad::Array gaussian_relation(const std::vector<std::vector<double>>& points) {
    const std::size_t n = points.size();
    ad::Array d2(ad::Shape{n, n});
    std::vector<double> dists;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < points[i].size(); ++k) s += (points[i][k] - points[j][k]) * (points[i][k] - points[j][k]);
            d2.at(i, j) = s;
            if (i < j) dists.push_back(std::sqrt(s));
        }
    double var = graphs::variance(dists);
    if (!(var > 0.0)) var = 1.0;
    for (double& v : d2.storage()) v = std::exp(-v / var);
    return d2;
}

}  // namespace detail

/// Seeded generator; the same spec always yields the same dataset.
inline SyntheticDataset generate_synthetic_detailed(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t n = spec.nodes;
    const std::size_t k = spec.functions;
    Rng rng(spec.seed);
    SyntheticDataset out;
    SyntheticTruth& truth = out.truth;

    // community c gets nodes c, c + C, c + 2C, ...
    truth.community.resize(n);
    for (std::size_t i = 0; i < n; ++i) truth.community[i] = i % spec.communities;

    std::vector<std::vector<double>> positions(n);
    for (auto& p : positions) p = {rng.uniform(0.0, spec.extent), rng.uniform(0.0, spec.extent)};

    std::vector<std::vector<bool>> adjacent(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double p = truth.community[i] == truth.community[j] ? spec.p_in : spec.p_out;
            adjacent[i][j] = adjacent[j][i] = rng.bernoulli(p);
        }

    // each community leans on one dominant category
    std::vector<std::vector<double>> prototypes(spec.communities, std::vector<double>(k));
    for (std::size_t c = 0; c < spec.communities; ++c)
        for (std::size_t j = 0; j < k; ++j) {
            prototypes[c][j] = j == c % k ? spec.dominant_count : std::floor(rng.uniform(0.0, 4.0));
        }
    std::vector<std::vector<double>> functions(n, std::vector<double>(k));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            functions[i][c] = std::max(0.0, std::round(prototypes[truth.community[i]][c] + rng.normal(0.0, 1.5)));
        }

    truth.alpha.resize(n);
    truth.beta.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        truth.alpha[i] = rng.uniform(1.0, 3.0);
        truth.beta[i] = rng.uniform(0.5, 1.5);
    }

    // latent relations
    ad::Array r_d = detail::gaussian_relation(positions);
    ad::Array r_n(ad::Shape{n, n});
    ad::Array r_f(ad::Shape{n, n});
    ad::Array r_t(ad::Shape{n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            r_n.at(i, j) = adjacent[i][j] ? 1.0 : 0.0;
            r_f.at(i, j) = std::max(0.0, graphs::pearson(functions[i], functions[j]));
            r_t.at(i, j) = truth.community[i] == truth.community[j] ? 1.0 : 0.0;
        }
    std::vector<std::vector<double>> activity(n);
    for (std::size_t i = 0; i < n; ++i) activity[i] = {truth.alpha[i], truth.beta[i]};
    ad::Array r_h = detail::gaussian_relation(activity);

    const MixingWeights& lw = spec.lambda;
    truth.mixing = ad::Array(ad::Shape{n, n});
    const std::pair<const ad::Array*, double> parts[] = {
        {&r_d, lw.distance}, {&r_n, lw.neighbor}, {&r_f, lw.functionality}, {&r_h, lw.heuristic}, {&r_t, lw.temporal}};
    for (auto [rel, weight] : parts) {
        ad::Array r = *rel;
        detail::row_normalize(r);
        for (std::size_t e = 0; e < r.size(); ++e) truth.mixing[e] += weight * r[e] / lw.sum();
    }

    // one daily profile per function category, drawn independently per phase
    // and redrawn as an AR(1) step at the start of every period
    std::vector<std::vector<double>> waves(k, std::vector<double>(spec.period));
    for (auto& w : waves)
        for (double& v : w) v = rng.normal();
    const double refresh = std::sqrt(1.0 - spec.seasonal_drift * spec.seasonal_drift);
    std::vector<std::vector<double>> weights(n, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (double f : functions[i]) total += f;
        if (total <= 0.0) continue;
        for (std::size_t c = 0; c < k; ++c) weights[i][c] = functions[i][c] / total;
    }
    std::vector<double> base(n);
    for (double& b : base) b = rng.uniform(5.0, 15.0);

    truth.events.assign(n, {});
    std::vector<std::vector<double>> series(n, std::vector<double>(spec.length));
    std::vector<double> s(n, 0.0), next(n);
    for (std::size_t step = 0; step < spec.burn_in + spec.length; ++step) {
        const bool record = step >= spec.burn_in;
        for (std::size_t i = 0; i < n; ++i) {
            double mixed = 0.0;
            for (std::size_t j = 0; j < n; ++j) mixed += truth.mixing.at(i, j) * s[j];
            next[i] = spec.persistence * s[i] + spec.diffusion * mixed + spec.innovation * rng.normal();
            const double q = spec.event_rate * truth.alpha[i] / truth.beta[i];
            if (rng.bernoulli(q)) {
                const double m = rng.exponential(truth.beta[i]);
                next[i] += m;
                if (record) truth.events[i].push_back(m);
            }
        }
        s.swap(next);
        const std::size_t phase = step % spec.period;
        if (phase == 0 && step > 0) {
            for (auto& w : waves)
                for (double& v : w) v = spec.seasonal_drift * v + refresh * rng.normal();
        }
        if (!record) continue;
        const std::size_t t = step - spec.burn_in;
        for (std::size_t i = 0; i < n; ++i) {
            double seasonal = 0.0;
            for (std::size_t c = 0; c < k; ++c) seasonal += weights[i][c] * waves[c][phase];
            series[i][t] = base[i] + spec.seasonal * seasonal + s[i] + spec.noise * rng.normal();
        }
    }

    std::vector<NodeRecord> records(n);
    for (std::size_t i = 0; i < n; ++i) {
        NodeRecord& r = records[i];
        r.id = "n" + std::to_string(i + 1);
        r.position = graphs::Point{positions[i][0], positions[i][1]};
        r.functions = functions[i];
        r.series = std::move(series[i]);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (adjacent[i][j]) records[i].neighbors.push_back(records[j].id);

    out.bundle.nodes = NodeTable(std::move(records));
    out.bundle.nodes.validate();
    std::vector<std::size_t> event_counts;
    for (const auto& e : truth.events) event_counts.push_back(e.size());
    out.bundle.provenance = {{"source", "synthetic"},
                             {"spec", to_json(spec)},
                             {"truth",
                              {{"community", truth.community},
                               {"alpha", truth.alpha},
                               {"beta", truth.beta},
                               {"event_counts", event_counts}}}};
    return out;
}

inline DatasetBundle generate_synthetic(const SyntheticSpec& spec) {
    return generate_synthetic_detailed(spec).bundle;
}

}  // namespace mgfusion::data
