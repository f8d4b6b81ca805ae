#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgfusion/app/config.hpp"
#include "mgfusion/autodiff/gradcheck.hpp"
#include "mgfusion/data/dataset.hpp"
#include "mgfusion/data/synthetic.hpp"
#include "mgfusion/forecast/metrics.hpp"
#include "mgfusion/forecast/trainer.hpp"
#include "mgfusion/graphs/builders.hpp"
#include "mgfusion/graphs/matrix_io.hpp"

namespace mgfusion::app {

/// Dataset after splitting and scaling. Graphs only ever see the training range.
struct PreparedData {
    data::DatasetBundle bundle;
    forecast::SegmentSplit segments;
    data::Scaling scaling;
    ad::Array series;  // scaled, [P, N]
    graphs::NodeTable train_nodes;
};

inline data::DatasetBundle load_or_generate(const RunConfig& cfg) {
    if (cfg.synthetic()) return data::generate_synthetic(cfg.synth);
    return data::load_dataset(*cfg.nodes_file, *cfg.functions_file, *cfg.series_file);
}

inline PreparedData prepare_data(const RunConfig& cfg) {
    PreparedData d;
    d.bundle = load_or_generate(cfg);
    const std::size_t p = d.bundle.nodes.series_length();
    d.segments = forecast::split_segments(p, cfg.train.split);
    if (d.segments.train.length() < 2) throw ConfigError("training range shorter than 2 steps");
    d.scaling = data::fit_scaling(d.bundle.nodes, d.segments.train);
    d.bundle.scaling = d.scaling;
    d.series = data::scaled_series(d.bundle.nodes, d.scaling);
    d.train_nodes = d.bundle.nodes.with_series_prefix(d.segments.train.end);
    return d;
}

inline graphs::GraphSet build_graph_set(const RunConfig& cfg, const PreparedData& d) {
    return graphs::assemble_graph_set(d.train_nodes, cfg.effective_kernel(), cfg.effective_mask());
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    return os;
}

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    auto os = open_output(path);
    os << text;
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace detail

// ---------------------------------------------------------------- metrics CSV

inline constexpr const char* kMetricsHeader = "run_id,model_variant,horizon,mae,rmse,epoch_best,seed";

struct MetricsRow {
    std::string run_id;
    std::string variant;
    std::size_t horizon = 0;
    double mae = 0.0;
    double rmse = 0.0;
    std::size_t epoch_best = 0;
    std::uint64_t seed = 0;
};

inline std::string format_metrics(const std::vector<MetricsRow>& rows) {
    using graphs::format_double;
    std::string out = std::string(kMetricsHeader) + "\n";
    for (const auto& r : rows) {
        out += r.run_id + "," + r.variant + "," + std::to_string(r.horizon) + "," + format_double(r.mae) + "," +
               format_double(r.rmse) + "," + std::to_string(r.epoch_best) + "," + std::to_string(r.seed) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------- build-graphs

struct GraphSummary {
    std::string kind;
    double density = 0.0;  // fraction of nonzero off-diagonal entries
    double min = 0.0;
    double max = 0.0;
};

inline GraphSummary summarize(const graphs::WeightMatrix& w) {
    GraphSummary s;
    s.kind = std::string(graphs::kind_name(w.kind));
    const std::size_t n = w.n();
    std::size_t nonzero = 0;
    s.min = s.max = w.values[0];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double v = w(i, j);
            s.min = std::min(s.min, v);
            s.max = std::max(s.max, v);
            if (i != j && v != 0.0) ++nonzero;
        }
    s.density = n > 1 ? static_cast<double>(nonzero) / static_cast<double>(n * (n - 1)) : 0.0;
    return s;
}

inline std::vector<std::filesystem::path> cmd_build_graphs(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const PreparedData d = prepare_data(cfg);
    const graphs::GraphSet set = build_graph_set(cfg, d);
    detail::ensure_dir(cfg.out);
    const auto ids = d.bundle.nodes.ids();
    std::vector<std::filesystem::path> written;
    log << "graph         density  min          max\n";
    for (const auto& g : set.graphs) {
        const auto path = cfg.out / ("W_" + std::string(1, graphs::kind_letter(g.kind)) + ".txt");
        graphs::write_matrix_file(path, g.kind, g.values, ids);
        written.push_back(path);
        const auto s = summarize(g);
        log << std::left << std::setw(14) << s.kind << std::setw(9) << std::fixed << std::setprecision(3) << s.density
            << std::setw(13) << std::setprecision(6) << s.min << s.max << "\n";
        log.unsetf(std::ios::floatfield);
    }
    return written;
}

// ---------------------------------------------------------------- training

struct HorizonRun {
    std::size_t horizon = 0;
    forecast::TrainResult result;
    forecast::StepMetrics at_horizon;
    nlohmann::json checkpoint;
};

inline nlohmann::json checkpoint_json(const RunConfig& cfg, std::size_t horizon, forecast::JointModel& model,
                                      const forecast::TrainResult& res) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& p : model.parameters()) {
        params[p.name] = {{"shape", p.value.shape()},
                          {"values", std::vector<double>(p.value.values().begin(), p.value.values().end())}};
    }
    return {{"run_id", run_id(cfg)}, {"horizon", horizon}, {"best_epoch", res.best_epoch}, {"parameters", params}};
}

/// One model per horizon, each predicting `horizon` steps and scored at its last step.
inline HorizonRun train_horizon(const RunConfig& cfg, const PreparedData& d, const graphs::GraphSet& set,
                                std::size_t horizon, std::ostream* log) {
    forecast::ForecasterConfig fc = cfg.forecaster;
    fc.horizon = horizon;
    forecast::JointModel model(set, cfg.fusion, fc, cfg.train.seed);
    auto on_epoch = [&](const forecast::EpochRecord& r) {
        if (log) {
            *log << "  h=" << horizon << " epoch " << r.epoch << "/" << cfg.train.epochs << " loss "
                 << graphs::format_double(r.train_loss) << " val_mae " << graphs::format_double(r.val_mae) << "\n";
        }
    };
    HorizonRun run;
    run.horizon = horizon;
    run.result = forecast::train(model, d.series, cfg.train, on_epoch);
    run.at_horizon = run.result.test.at_step(horizon);
    run.checkpoint = checkpoint_json(cfg, horizon, model, run.result);
    return run;
}

inline std::vector<MetricsRow> metrics_rows(const RunConfig& cfg, const std::string& variant,
                                            const std::vector<HorizonRun>& runs) {
    std::vector<MetricsRow> rows;
    for (const auto& r : runs) {
        rows.push_back({run_id(cfg), variant, r.horizon, r.at_horizon.mae, r.at_horizon.rmse, r.result.best_epoch,
                        cfg.train.seed});
    }
    return rows;
}

inline nlohmann::json fused_sidecar(const RunConfig& cfg, const graphs::GraphSet& set, std::size_t horizon) {
    return {{"run_id", run_id(cfg)},
            {"graphs", set.size()},
            {"mask", set.letters()},
            {"nodes", set.nodes()},
            {"model_dim", cfg.fusion.model_dim},
            {"heads", cfg.fusion.heads},
            {"head_dim", cfg.fusion.head_dim},
            {"blocks", cfg.fusion.blocks},
            {"sgatt", cfg.fusion.sgatt},
            {"heuristic_mode", heuristic_setting_name(cfg.heuristic)},
            {"seed", cfg.train.seed},
            {"horizon", horizon}};
}

inline std::string history_csv(const forecast::TrainResult& res) {
    using graphs::format_double;
    std::string out = "epoch,train_loss,val_mae,val_rmse\n";
    for (const auto& e : res.history) {
        out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_mae) + "," +
               format_double(e.val_rmse) + "\n";
    }
    return out;
}

struct TrainOutput {
    std::vector<MetricsRow> rows;
    std::vector<HorizonRun> runs;
};

/// Writes metrics.csv, and per horizon the fused matrix with its sidecar,
/// a JSON checkpoint and the epoch history.
inline TrainOutput cmd_train(const RunConfig& cfg, std::ostream& log, const std::string& variant = "full") {
    cfg.validate();
    const PreparedData d = prepare_data(cfg);
    const graphs::GraphSet set = build_graph_set(cfg, d);
    TrainOutput out;
    for (std::size_t h : cfg.horizons) {
        log << "training " << variant << " horizon " << h << " on graphs " << set.letters() << "\n";
        out.runs.push_back(train_horizon(cfg, d, set, h, &log));
    }
    out.rows = metrics_rows(cfg, variant, out.runs);

    detail::ensure_dir(cfg.out);
    detail::write_text(cfg.out / "metrics.csv", format_metrics(out.rows));
    const auto ids = d.bundle.nodes.ids();
    for (const auto& r : out.runs) {
        const std::string tag = "_h" + std::to_string(r.horizon);
        graphs::write_matrix_file(cfg.out / ("fused" + tag + ".txt"), graphs::GraphKind::fused, r.result.fused, ids);
        detail::write_text(cfg.out / ("fused" + tag + ".json"), fused_sidecar(cfg, set, r.horizon).dump(2) + "\n");
        detail::write_text(cfg.out / ("checkpoint" + tag + ".json"), r.checkpoint.dump() + "\n");
        detail::write_text(cfg.out / ("history" + tag + ".csv"), history_csv(r.result));
    }
    return out;
}

// ---------------------------------------------------------------- ablation

struct Variant {
    std::string name;
    RunConfig config;
};

/// The fixed variant grid, each derived from `base`.
inline std::vector<Variant> ablation_variants(const RunConfig& base) {
    using graphs::GraphKind;
    std::vector<Variant> v;
    RunConfig full = base;
    full.mask = graphs::GraphMask::all();
    full.heuristic = base.heuristic == HeuristicSetting::kl ? HeuristicSetting::exp : base.heuristic;
    if (full.heuristic == HeuristicSetting::off) full.heuristic = HeuristicSetting::exp;
    full.fusion.sgatt = true;
    v.push_back({"full", full});

    RunConfig c = full;
    c.fusion.sgatt = false;
    v.push_back({"no-sgatt", c});

    c = full;
    c.heuristic = HeuristicSetting::off;
    v.push_back({"no-heuristic", c});

    c = full;
    c.heuristic = HeuristicSetting::kl;
    v.push_back({"kl-heuristic", c});

    c = full;
    c.mask.set(GraphKind::functionality, false);
    v.push_back({"no-functionality", c});

    c = full;
    c.mask = graphs::GraphMask::parse("D");
    v.push_back({"single-distance-graph", c});
    return v;
}

struct AblationOutput {
    std::vector<MetricsRow> rows;
    std::vector<std::pair<std::string, std::string>> failures;  // variant, message
    int exit_code = 0;
};

inline std::string ablation_table(const std::vector<MetricsRow>& rows) {
    using graphs::format_double;
    std::string out = "model_variant,horizon,mae,rmse,rmse_vs_full\n";
    for (const auto& r : rows) {
        std::string rel = "";
        for (const auto& f : rows) {
            if (f.variant == "full" && f.horizon == r.horizon && f.rmse > 0.0) rel = format_double(r.rmse / f.rmse);
        }
        out += r.variant + "," + std::to_string(r.horizon) + "," + format_double(r.mae) + "," + format_double(r.rmse) +
               "," + rel + "\n";
    }
    return out;
}

inline int exit_code_for(const std::exception& e);

/// Runs every variant; a failing variant is reported and skipped.
inline AblationOutput cmd_ablate(const RunConfig& base, std::ostream& log) {
    base.validate();
    auto variants = ablation_variants(base);
    for (const auto& v : variants) v.config.validate();
    const PreparedData d = prepare_data(base);
    AblationOutput out;
    for (const auto& v : variants) {
        try {
            const graphs::GraphSet set = build_graph_set(v.config, d);
            std::vector<HorizonRun> runs;
            for (std::size_t h : v.config.horizons) {
                log << "variant " << v.name << " horizon " << h << " graphs " << set.letters() << "\n";
                runs.push_back(train_horizon(v.config, d, set, h, nullptr));
            }
            auto rows = metrics_rows(v.config, v.name, runs);
            out.rows.insert(out.rows.end(), rows.begin(), rows.end());
        } catch (const std::exception& e) {
            out.failures.emplace_back(v.name, e.what());
            out.exit_code = std::max(out.exit_code, exit_code_for(e));
            log << "variant " << v.name << " failed: " << e.what() << "\n";
        }
    }
    detail::ensure_dir(base.out);
    detail::write_text(base.out / "ablation.csv", format_metrics(out.rows));
    detail::write_text(base.out / "ablation_table.csv", ablation_table(out.rows));
    log << out.rows.size() << " rows from " << variants.size() - out.failures.size() << "/" << variants.size()
        << " variants\n";
    for (const auto& [name, msg] : out.failures) log << "  failed: " << name << ": " << msg << "\n";
    return out;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckOptions {
    std::size_t sites = 200;
    double step = 1e-5;
    double tolerance = 1e-4;
    double corrupt_offset = 0.0;  // test hook
};

/// Small defaults used before any config file or flag.
inline Settings gradcheck_defaults() {
    return {{"synth.nodes", "6"},       {"synth.length", "300"},   {"model.heads", "4"},
            {"model.head_dim", "4"},    {"model.blocks", "2"},     {"forecast.window", "8"},
            {"forecast.channels", "4"}, {"horizons", "3"},         {"train.batch", "4"}};
}

/// Parameter name -> module label used for grouping ("fusion.block0.spatial", "forecaster.gconv1", ...).
inline std::string module_of(const std::string& name) {
    std::vector<std::string> parts = data::split(name, '.');
    std::size_t keep = 2;
    if (parts.size() > 2 && parts[1].rfind("block", 0) == 0) keep = 3;
    keep = std::min(keep, parts.size());
    std::string out;
    for (std::size_t i = 0; i < keep; ++i) out += (i ? "." : "") + parts[i];
    return out;
}

struct GradcheckOutput {
    ad::GradCheckReport report;
    std::map<std::string, double> per_module;
    bool passed = false;
};

inline GradcheckOutput cmd_gradcheck(const RunConfig& cfg, const GradcheckOptions& opts, std::ostream& log) {
    cfg.validate();
    if (cfg.fusion.model_dim > 16) throw ConfigError("gradcheck needs D <= 16, got " + std::to_string(cfg.fusion.model_dim));
    if (cfg.synthetic() && cfg.synth.nodes > 8) {
        throw ConfigError("gradcheck needs N <= 8, got " + std::to_string(cfg.synth.nodes));
    }
    const PreparedData d = prepare_data(cfg);
    if (d.bundle.nodes.size() > 8) throw ConfigError("gradcheck needs N <= 8, got " + std::to_string(d.bundle.nodes.size()));
    const graphs::GraphSet set = build_graph_set(cfg, d);
    forecast::ForecasterConfig fc = cfg.forecaster;
    fc.horizon = cfg.horizons.front();
    forecast::JointModel model(set, cfg.fusion, fc, cfg.train.seed);
    const auto split = forecast::split_windows(d.series.dim(0), fc.window, fc.horizon, cfg.train.split);
    const std::size_t count = std::min(cfg.train.batch_size, split.train.size());
    const auto batch =
        forecast::make_batch(d.series, std::span(split.train.starts).subspan(0, count), fc.window, fc.horizon);

    Rng rng(cfg.train.seed);
    const auto sites = ad::sample_sites(model.parameters(), opts.sites, rng);
    GradcheckOutput out;
    out.report = ad::check_gradients(
        model.parameters(), [&](ad::Tape& tape) { return model.loss(tape, batch); }, sites, opts.step,
        opts.corrupt_offset);
    for (const auto& [name, err] : out.report.per_param) {
        auto& slot = out.per_module[module_of(name)];
        slot = std::max(slot, err);
    }
    log << "module                          max_rel_error\n";
    for (const auto& [mod, err] : out.per_module) {
        log << std::left << std::setw(32) << mod << graphs::format_double(err) << "\n";
    }
    log << "parameter groups probed: " << out.report.per_param.size() << " of "
        << model.parameters().size() << "\n";
    const auto* worst = out.report.worst();
    out.passed = worst == nullptr || worst->rel_error < opts.tolerance;
    if (worst) {
        log << "worst: " << worst->param << "[" << worst->index << "] analytic " << graphs::format_double(worst->analytic)
            << " numeric " << graphs::format_double(worst->numeric) << " rel_error "
            << graphs::format_double(worst->rel_error) << "\n";
    }
    if (!out.passed) {
        throw NumericalError("gradient check failed: " + worst->param + "[" + std::to_string(worst->index) +
                             "] relative error " + graphs::format_double(worst->rel_error) + " exceeds " +
                             graphs::format_double(opts.tolerance));
    }
    log << "gradient check passed (" << sites.size() << " sites, tolerance " << graphs::format_double(opts.tolerance)
        << ")\n";
    return out;
}

// ---------------------------------------------------------------- synth

inline std::vector<std::filesystem::path> cmd_synth(const data::SyntheticSpec& spec, const std::filesystem::path& out,
                                                    std::ostream& log) {
    spec.validate();
    const auto bundle = data::generate_synthetic(spec);
    data::save_dataset(bundle, out);
    detail::write_text(out / "provenance.json", bundle.provenance.dump(2) + "\n");
    log << "wrote " << spec.nodes << " nodes x " << spec.length << " steps to " << out.string() << "\n";
    return {out / "nodes.csv", out / "functions.csv", out / "series.csv", out / "provenance.json"};
}

// ---------------------------------------------------------------- exit codes

/// 0 ok, 1 config/usage, 2 numerical, 3 I/O or malformed input.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 1;
    if (dynamic_cast<const NumericalError*>(&e)) return 2;
    if (dynamic_cast<const IoError*>(&e)) return 3;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    if (dynamic_cast<const ShapeError*>(&e)) return 2;
    return 2;
}

}  // namespace mgfusion::app
