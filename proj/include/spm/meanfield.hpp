#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spm/errors.hpp"
#include "spm/expr.hpp"
#include "spm/model.hpp"
#include "spm/ode.hpp"

namespace spm {

/// Steady-state summary of a fluid analysis. `variance` is empty for a plain
/// mean-field run and holds per-population variances when produced by moment
/// closure.
struct SteadyState {
    std::vector<double> mean;
    std::vector<double> variance;
    double t_reached = 0.0;
    bool converged = false;
    bool oscillatory = false;
};

namespace fluid_detail {

inline std::string state_snippet(const std::vector<double>& y) {
    std::string s = "[";
    std::size_t shown = std::min<std::size_t>(y.size(), 8);
    for (std::size_t i = 0; i < shown; ++i) {
        if (i) s += ", ";
        s += std::to_string(y[i]);
    }
    if (shown < y.size()) s += ", ...";
    return s + "]";
}

} // namespace fluid_detail

/// Deterministic drift F(x) = sum_tau D_tau * max(0, r_tau(x)) over real
/// states. Immutable once built; drift evaluation is thread-safe.
class MeanFieldSystem {
public:
    explicit MeanFieldSystem(const SpatialModel& model) {
        n_ = static_cast<std::size_t>(model.num_populations());
        auto params = model.param_values();
        for (const auto& tr : model.transitions) {
            CompiledTransition ct;
            ct.rate = compile_expr(*tr.rate, params);
            ct.update.assign(tr.update.begin(), tr.update.end());
            ct.label = tr.label;
            transitions_.push_back(std::move(ct));
        }
    }

    std::size_t size() const { return n_; }

    void drift(const std::vector<double>& y, std::vector<double>& dy) const {
        thread_local std::vector<double> scratch;
        dy.assign(n_, 0.0);
        for (const auto& ct : transitions_) {
            double r;
            try {
                r = ct.rate.eval(y, scratch);
            } catch (const EvaluationError& e) {
                throw EvaluationError(std::string(e.what()) + " in rate of '" + ct.label +
                                      "' at state " + fluid_detail::state_snippet(y));
            }
            if (r <= 0.0) continue; // negative user rates contribute nothing to the drift
            for (const auto& [idx, delta] : ct.update)
                dy[static_cast<std::size_t>(idx)] += static_cast<double>(delta) * r;
        }
    }

private:
    struct CompiledTransition {
        CompiledExpr rate;
        std::vector<std::pair<int, std::int64_t>> update;
        std::string label;
    };
    std::size_t n_ = 0;
    std::vector<CompiledTransition> transitions_;
};

inline MeanFieldSystem build_mean_field(const SpatialModel& model) {
    return MeanFieldSystem(model);
}

/// Integrates the mean-field ODEs to steady state (or fixed time).
inline SteadyState mean_field_steady(const SpatialModel& model, const SteadyOptions& opts = {}) {
    MeanFieldSystem sys(model);
    SteadyResult r = integrate_to_steady(sys, model.initial_real(), opts);
    SteadyState ss;
    ss.mean = std::move(r.state);
    ss.t_reached = r.t_reached;
    ss.converged = r.converged;
    ss.oscillatory = r.oscillatory;
    return ss;
}

} // namespace spm
