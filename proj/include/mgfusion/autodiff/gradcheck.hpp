#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mgfusion/autodiff/tape.hpp"
#include "mgfusion/random.hpp"

namespace mgfusion::ad {

/// One scalar coordinate of a parameter.
struct ProbeSite {
    Parameter* param = nullptr;
    std::size_t index = 0;
};

struct GradCheckEntry {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    /// Worst relative error per parameter name.
    std::map<std::string, double> per_param;

    double max_rel_error() const {
        double worst = 0.0;
        for (const auto& e : entries) worst = std::max(worst, e.rel_error);
        return worst;
    }

    const GradCheckEntry* worst() const {
        const GradCheckEntry* w = nullptr;
        for (const auto& e : entries) {
            if (w == nullptr || e.rel_error > w->rel_error) w = &e;
        }
        return w;
    }
};

/// |analytic - numeric| / max(1, |numeric|)
inline double gradient_rel_error(double analytic, double numeric) {
    return std::fabs(analytic - numeric) / std::max(1.0, std::fabs(numeric));
}

/// Samples `count` coordinates round-robin over parameters, without
/// replacement inside a parameter, so every parameter is probed when
/// count >= params.size().
inline std::vector<ProbeSite> sample_sites(ParameterSet& params, std::size_t count, Rng& rng) {
    std::vector<std::vector<std::size_t>> pools;
    std::vector<Parameter*> ptrs;
    for (auto& p : params) {
        std::vector<std::size_t> idx(p.value.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        pools.push_back(std::move(idx));
        ptrs.push_back(&p);
    }
    std::vector<ProbeSite> sites;
    std::vector<std::size_t> cursor(pools.size(), 0);
    bool progressed = true;
    while (sites.size() < count && progressed) {
        progressed = false;
        for (std::size_t k = 0; k < pools.size() && sites.size() < count; ++k) {
            if (cursor[k] < pools[k].size()) {
                sites.push_back({ptrs[k], pools[k][cursor[k]++]});
                progressed = true;
            }
        }
    }
    return sites;
}

using LossBuilder = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients against central finite differences.
/// `corrupt_offset` is added to the first analytic value (fault-injection hook).
inline GradCheckReport check_gradients(ParameterSet& params, const LossBuilder& build_loss,
                                       const std::vector<ProbeSite>& sites, double h = 1e-5,
                                       double corrupt_offset = 0.0) {
    params.zero_grad();
    {
        Tape tape;
        Var loss = build_loss(tape);
        tape.backward(loss);
    }
    auto eval = [&] {
        Tape tape;
        return build_loss(tape).value()[0];
    };
    GradCheckReport report;
    for (std::size_t s = 0; s < sites.size(); ++s) {
        Parameter& p = *sites[s].param;
        const std::size_t i = sites[s].index;
        const double saved = p.value[i];
        p.value[i] = saved + h;
        const double up = eval();
        p.value[i] = saved - h;
        const double down = eval();
        p.value[i] = saved;
        GradCheckEntry e;
        e.param = p.name;
        e.index = i;
        e.analytic = p.grad[i] + (s == 0 ? corrupt_offset : 0.0);
        e.numeric = (up - down) / (2.0 * h);
        e.rel_error = gradient_rel_error(e.analytic, e.numeric);
        auto& slot = report.per_param[p.name];
        slot = std::max(slot, e.rel_error);
        report.entries.push_back(std::move(e));
    }
    return report;
}

}  // namespace mgfusion::ad
