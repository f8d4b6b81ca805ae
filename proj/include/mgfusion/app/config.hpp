#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mgfusion/data/synthetic.hpp"
#include "mgfusion/forecast/forecaster.hpp"
#include "mgfusion/forecast/trainer.hpp"
#include "mgfusion/fusion/dmgab.hpp"
#include "mgfusion/graphs/builders.hpp"

namespace mgfusion::app {

/// Flat key=value settings; later sources override earlier ones.
using Settings = std::map<std::string, std::string>;

enum class HeuristicSetting { exp, kl, off };

inline std::string heuristic_setting_name(HeuristicSetting h) {
    switch (h) {
        case HeuristicSetting::exp: return "exp";
        case HeuristicSetting::kl: return "kl";
        case HeuristicSetting::off: return "off";
    }
    return "exp";
}

struct RunConfig {
    // data: explicit files, or synthetic when none given
    std::optional<std::filesystem::path> nodes_file;
    std::optional<std::filesystem::path> functions_file;
    std::optional<std::filesystem::path> series_file;
    data::SyntheticSpec synth{};

    graphs::KernelConfig kernel{};
    graphs::GraphMask mask{};
    HeuristicSetting heuristic = HeuristicSetting::exp;

    std::string preset = "parking-style";
    fusion::FusionConfig fusion{};
    forecast::ForecasterConfig forecaster{};
    std::vector<std::size_t> horizons{3, 6, 12, 24};
    forecast::TrainConfig train{};
    std::filesystem::path out = "out";

    bool synthetic() const { return !nodes_file && !functions_file && !series_file; }

    /// Mask actually used: the heuristic graph drops out when its mode is off.
    graphs::GraphMask effective_mask() const {
        graphs::GraphMask m = mask;
        if (heuristic == HeuristicSetting::off) m.set(graphs::GraphKind::heuristic, false);
        return m;
    }

    graphs::KernelConfig effective_kernel() const {
        graphs::KernelConfig k = kernel;
        k.heuristic_mode =
            heuristic == HeuristicSetting::kl ? graphs::HeuristicMode::kl_divergence : graphs::HeuristicMode::euclidean_params;
        return k;
    }

    void validate() const {
        const int given = (nodes_file ? 1 : 0) + (functions_file ? 1 : 0) + (series_file ? 1 : 0);
        if (given != 0 && given != 3) {
            throw ConfigError("give all of data.nodes, data.functions and data.series, or none for synthetic data");
        }
        if (synthetic()) synth.validate();
        kernel.validate();
        if (effective_mask().count() == 0) throw ConfigError("graph selection is empty once the heuristic graph is off");
        fusion.validate();
        forecaster.validate();
        train.validate();
        if (horizons.empty()) throw ConfigError("horizons list is empty");
        for (std::size_t h : horizons) {
            if (h < 3 || h > 24) throw ConfigError("horizon " + std::to_string(h) + " outside 3..24");
        }
        std::vector<std::size_t> sorted = horizons;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw ConfigError("horizons list repeats a value");
        }
    }
};

namespace detail {

inline std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

template <typename T>
T parse_integer(const std::string& key, const std::string& text) {
    T v{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
    return v;
}

inline double parse_real(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw ConfigError(key + ": expected a number, got '" + text + "'");
    }
    return v;
}

inline bool parse_switch(const std::string& key, const std::string& text) {
    if (text == "on" || text == "true" || text == "1" || text == "yes") return true;
    if (text == "off" || text == "false" || text == "0" || text == "no") return false;
    throw ConfigError(key + ": expected on/off, got '" + text + "'");
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    for (auto& part : data::split(text, ',')) {
        const std::string p = trim(part);
        if (p.empty()) throw ConfigError(key + ": empty list entry in '" + text + "'");
        out.push_back(parse_integer<std::size_t>(key, p));
    }
    return out;
}

}  // namespace detail

/// Reads `key = value` lines; '#' starts a comment.
inline Settings parse_settings(std::istream& is, const std::string& name) {
    Settings s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = detail::trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");
        s[key] = detail::trim(line.substr(eq + 1));
    }
    return s;
}

inline Settings read_settings(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file '" + path.string() + "'");
    return parse_settings(is, path.string());
}

inline void apply_preset(RunConfig& cfg, const std::string& name) {
    if (name == "parking-style") {
        cfg.fusion.heads = 8;
        cfg.fusion.head_dim = 8;
    } else if (name == "airquality-style") {
        cfg.fusion.heads = 24;
        cfg.fusion.head_dim = 6;
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected parking-style or airquality-style)");
    }
    cfg.fusion.model_dim = cfg.fusion.heads * cfg.fusion.head_dim;
    cfg.preset = name;
}

/// Every key understood by build_config.
inline const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "preset", "data.nodes", "data.functions", "data.series", "data.dir",
        "synth.nodes", "synth.functions", "synth.length", "synth.seed", "synth.communities",
        "synth.lambda_d", "synth.lambda_n", "synth.lambda_f", "synth.lambda_h", "synth.lambda_t",
        "synth.noise", "synth.seasonal", "synth.seasonal_drift", "synth.innovation", "synth.event_rate",
        "synth.dominant_count", "synth.persistence", "synth.diffusion",
        "kernel.sigma_d2", "kernel.epsilon", "kernel.sigma_h2", "kernel.bins", "kernel.refine", "kernel.clamp",
        "graphs", "heuristic_mode", "sgatt",
        "model.dim", "model.heads", "model.head_dim", "model.blocks", "model.exclude_self", "model.embedding_init",
        "forecast.window", "forecast.channels", "forecast.kernel", "horizons",
        "train.lr", "train.batch", "train.epochs", "seed", "out"};
    return keys;
}

/// Applies settings on top of defaults. Presets go first so explicit
/// model.* keys can still override them.
inline RunConfig build_config(const Settings& s) {
    for (const auto& [key, value] : s) {
        if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
            throw ConfigError("unknown setting '" + key + "'");
        }
    }
    RunConfig cfg;
    auto get = [&](const std::string& key) -> const std::string* {
        auto it = s.find(key);
        return it == s.end() ? nullptr : &it->second;
    };
    using detail::parse_integer;
    using detail::parse_real;
    using detail::parse_switch;

    apply_preset(cfg, get("preset") ? *get("preset") : "parking-style");

    if (auto v = get("data.dir")) {
        const std::filesystem::path dir = *v;
        cfg.nodes_file = dir / "nodes.csv";
        cfg.functions_file = dir / "functions.csv";
        cfg.series_file = dir / "series.csv";
    }
    if (auto v = get("data.nodes")) cfg.nodes_file = *v;
    if (auto v = get("data.functions")) cfg.functions_file = *v;
    if (auto v = get("data.series")) cfg.series_file = *v;

    auto& sp = cfg.synth;
    if (auto v = get("synth.nodes")) sp.nodes = parse_integer<std::size_t>("synth.nodes", *v);
    if (auto v = get("synth.functions")) sp.functions = parse_integer<std::size_t>("synth.functions", *v);
    if (auto v = get("synth.length")) sp.length = parse_integer<std::size_t>("synth.length", *v);
    if (auto v = get("synth.seed")) sp.seed = parse_integer<std::uint64_t>("synth.seed", *v);
    if (auto v = get("synth.communities")) sp.communities = parse_integer<std::size_t>("synth.communities", *v);
    if (auto v = get("synth.lambda_d")) sp.lambda.distance = parse_real("synth.lambda_d", *v);
    if (auto v = get("synth.lambda_n")) sp.lambda.neighbor = parse_real("synth.lambda_n", *v);
    if (auto v = get("synth.lambda_f")) sp.lambda.functionality = parse_real("synth.lambda_f", *v);
    if (auto v = get("synth.lambda_h")) sp.lambda.heuristic = parse_real("synth.lambda_h", *v);
    if (auto v = get("synth.lambda_t")) sp.lambda.temporal = parse_real("synth.lambda_t", *v);
    if (auto v = get("synth.noise")) sp.noise = parse_real("synth.noise", *v);
    if (auto v = get("synth.seasonal")) sp.seasonal = parse_real("synth.seasonal", *v);
    if (auto v = get("synth.seasonal_drift")) sp.seasonal_drift = parse_real("synth.seasonal_drift", *v);
    if (auto v = get("synth.innovation")) sp.innovation = parse_real("synth.innovation", *v);
    if (auto v = get("synth.event_rate")) sp.event_rate = parse_real("synth.event_rate", *v);
    if (auto v = get("synth.dominant_count")) sp.dominant_count = parse_real("synth.dominant_count", *v);
    if (auto v = get("synth.persistence")) sp.persistence = parse_real("synth.persistence", *v);
    if (auto v = get("synth.diffusion")) sp.diffusion = parse_real("synth.diffusion", *v);

    auto& k = cfg.kernel;
    if (auto v = get("kernel.sigma_d2")) k.sigma_d2 = parse_real("kernel.sigma_d2", *v);
    if (auto v = get("kernel.epsilon")) k.epsilon = parse_real("kernel.epsilon", *v);
    if (auto v = get("kernel.sigma_h2")) k.sigma_h2 = parse_real("kernel.sigma_h2", *v);
    if (auto v = get("kernel.bins")) k.bins = parse_integer<std::size_t>("kernel.bins", *v);
    if (auto v = get("kernel.refine")) k.refine_fit = parse_switch("kernel.refine", *v);
    if (auto v = get("kernel.clamp")) k.clamp_nonnegative = parse_switch("kernel.clamp", *v);

    if (auto v = get("graphs")) cfg.mask = graphs::GraphMask::parse(*v);
    if (auto v = get("heuristic_mode")) {
        if (*v == "exp") cfg.heuristic = HeuristicSetting::exp;
        else if (*v == "kl") cfg.heuristic = HeuristicSetting::kl;
        else if (*v == "off") cfg.heuristic = HeuristicSetting::off;
        else throw ConfigError("heuristic_mode: expected exp, kl or off, got '" + *v + "'");
    }
    if (auto v = get("sgatt")) cfg.fusion.sgatt = parse_switch("sgatt", *v);

    auto& f = cfg.fusion;
    if (auto v = get("model.heads")) f.heads = parse_integer<std::size_t>("model.heads", *v);
    if (auto v = get("model.head_dim")) f.head_dim = parse_integer<std::size_t>("model.head_dim", *v);
    if (auto v = get("model.dim")) f.model_dim = parse_integer<std::size_t>("model.dim", *v);
    else f.model_dim = f.heads * f.head_dim;
    if (auto v = get("model.blocks")) f.blocks = parse_integer<std::size_t>("model.blocks", *v);
    if (auto v = get("model.exclude_self")) f.exclude_self = parse_switch("model.exclude_self", *v);
    if (auto v = get("model.embedding_init")) {
        if (*v == "random") f.embedding_init = fusion::EmbeddingInit::random;
        else if (*v == "spectral") f.embedding_init = fusion::EmbeddingInit::spectral;
        else throw ConfigError("model.embedding_init: expected random or spectral, got '" + *v + "'");
    }

    auto& fc = cfg.forecaster;
    if (auto v = get("forecast.window")) fc.window = parse_integer<std::size_t>("forecast.window", *v);
    if (auto v = get("forecast.channels")) fc.channels = parse_integer<std::size_t>("forecast.channels", *v);
    if (auto v = get("forecast.kernel")) fc.kernel = parse_integer<std::size_t>("forecast.kernel", *v);
    if (auto v = get("horizons")) cfg.horizons = detail::parse_list("horizons", *v);

    auto& t = cfg.train;
    if (auto v = get("train.lr")) t.adam.lr = parse_real("train.lr", *v);
    if (auto v = get("train.batch")) t.batch_size = parse_integer<std::size_t>("train.batch", *v);
    if (auto v = get("train.epochs")) t.epochs = parse_integer<std::size_t>("train.epochs", *v);
    if (auto v = get("seed")) t.seed = parse_integer<std::uint64_t>("seed", *v);
    if (auto v = get("out")) cfg.out = *v;

    cfg.validate();
    return cfg;
}

/// Canonical text of everything that shapes a run's numbers.
inline std::string canonical(const RunConfig& c) {
    std::string s;
    auto add = [&](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
    using graphs::format_double;
    if (c.synthetic()) {
        add("data", "synthetic:" + data::to_json(c.synth).dump());
    } else {
        add("data", c.nodes_file->string() + "|" + c.functions_file->string() + "|" + c.series_file->string());
    }
    add("kernel.sigma_d2", c.kernel.sigma_d2 ? format_double(*c.kernel.sigma_d2) : "auto");
    add("kernel.epsilon", format_double(c.kernel.epsilon));
    add("kernel.sigma_h2", c.kernel.sigma_h2 ? format_double(*c.kernel.sigma_h2) : "auto");
    add("kernel.bins", std::to_string(c.kernel.bins));
    add("kernel.refine", c.kernel.refine_fit ? "on" : "off");
    add("kernel.clamp", c.kernel.clamp_nonnegative ? "on" : "off");
    add("graphs", c.effective_mask().letters());
    add("heuristic_mode", heuristic_setting_name(c.heuristic));
    add("sgatt", c.fusion.sgatt ? "on" : "off");
    add("model", std::to_string(c.fusion.model_dim) + "/" + std::to_string(c.fusion.heads) + "/" +
                     std::to_string(c.fusion.head_dim) + "/" + std::to_string(c.fusion.blocks) +
                     (c.fusion.exclude_self ? "/exclude_self" : "") +
                     (c.fusion.embedding_init == fusion::EmbeddingInit::spectral ? "/spectral" : ""));
    add("forecast", std::to_string(c.forecaster.window) + "/" + std::to_string(c.forecaster.channels) + "/" +
                        std::to_string(c.forecaster.kernel));
    add("train", format_double(c.train.adam.lr) + "/" + std::to_string(c.train.batch_size) + "/" +
                     std::to_string(c.train.epochs));
    add("seed", std::to_string(c.train.seed));
    return s;
}

/// 16 hex digits of FNV-1a over the canonical config text.
inline std::string run_id(const RunConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical(c)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace mgfusion::app
