// mgfusion: build graphs, train, ablate, gradient-check and generate data.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mgfusion/app/commands.hpp"

namespace {

using mgfusion::app::Settings;

struct CommonFlags {
    std::string config;
    std::vector<std::string> sets;
    Settings flags;  // flag values already mapped to setting keys
};

// Flags that map one-to-one onto setting keys.
void add_common(CLI::App* cmd, CommonFlags& f, bool synth_seed) {
    cmd->add_option("--config", f.config, "key=value config file");
    cmd->add_option("--set", f.sets, "override one setting, key=value (repeatable)");
    auto map_to = [&f](const std::string& key) {
        return [&f, key](const std::string& v) { f.flags[key] = v; };
    };
    cmd->add_option_function<std::string>("--seed", map_to(synth_seed ? "synth.seed" : "seed"), "random seed");
    cmd->add_option_function<std::string>("--out", map_to("out"), "output directory");
    if (synth_seed) return;
    cmd->add_option_function<std::string>("--horizons", map_to("horizons"), "comma list, e.g. 3,6,12,24");
    cmd->add_option_function<std::string>("--graphs", map_to("graphs"), "graph mask, e.g. D,N,T");
    cmd->add_option_function<std::string>("--sgatt", map_to("sgatt"), "on|off");
    cmd->add_option_function<std::string>("--heuristic-mode", map_to("heuristic_mode"), "exp|kl|off");
    cmd->add_option_function<std::string>("--preset", map_to("preset"), "parking-style|airquality-style");
    cmd->add_option_function<std::string>("--data", map_to("data.dir"), "directory holding nodes/functions/series CSVs");
}

// defaults < config file < --set < named flags
mgfusion::app::RunConfig resolve(const CommonFlags& f, Settings base = {}) {
    if (!f.config.empty()) {
        for (auto& [k, v] : mgfusion::app::read_settings(f.config)) base[k] = v;
    }
    for (const auto& kv : f.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw mgfusion::ConfigError("--set expects key=value, got '" + kv + "'");
        }
        base[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    for (const auto& [k, v] : f.flags) base[k] = v;
    return mgfusion::app::build_config(base);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-graph construction and attention-based fusion for spatio-temporal forecasting"};
    app.require_subcommand(1);

    CommonFlags build_f, train_f, ablate_f, grad_f, synth_f;
    auto* build = app.add_subcommand("build-graphs", "write the enabled weight matrices");
    add_common(build, build_f, false);
    auto* train = app.add_subcommand("train", "train fusion and forecaster per horizon");
    add_common(train, train_f, false);
    auto* ablate = app.add_subcommand("ablate", "run the ablation variant grid");
    add_common(ablate, ablate_f, false);
    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the full pipeline");
    add_common(grad, grad_f, false);
    mgfusion::app::GradcheckOptions grad_opts;
    grad->add_option("--sites", grad_opts.sites, "parameter coordinates to probe");
    grad->add_option("--tolerance", grad_opts.tolerance, "maximum relative error");
    grad->add_option("--corrupt-gradient", grad_opts.corrupt_offset)->group("");
    auto* synth = app.add_subcommand("synth", "generate a planted synthetic dataset");
    add_common(synth, synth_f, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (build->parsed()) {
            mgfusion::app::cmd_build_graphs(resolve(build_f), std::cout);
        } else if (train->parsed()) {
            const auto out = mgfusion::app::cmd_train(resolve(train_f), std::cout);
            std::cout << mgfusion::app::format_metrics(out.rows);
        } else if (ablate->parsed()) {
            const auto out = mgfusion::app::cmd_ablate(resolve(ablate_f), std::cout);
            std::cout << mgfusion::app::ablation_table(out.rows);
            return out.exit_code;
        } else if (grad->parsed()) {
            mgfusion::app::cmd_gradcheck(resolve(grad_f, mgfusion::app::gradcheck_defaults()), grad_opts, std::cout);
        } else if (synth->parsed()) {
            const auto cfg = resolve(synth_f);
            mgfusion::app::cmd_synth(cfg.synth, cfg.out, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return mgfusion::app::exit_code_for(e);
    }
    return 0;
}
