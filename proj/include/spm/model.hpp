#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spm/errors.hpp"
#include "spm/expr.hpp"
#include "spm/warn.hpp"

namespace spm {

struct LocationInfo {
    std::string label;
    std::optional<std::array<double, 2>> coord; // planar (x,y) or (lat,lon)
};

struct AgentInfo {
    std::string label;
};

/// One transition rule: label, symbolic rate, sparse update vector.
/// Update entries are (flat population index, signed delta), sorted by index.
struct Transition {
    std::string label;
    ExprPtr rate;
    std::vector<std::pair<int, std::int64_t>> update;
};

/// Named linear functional over populations (sparse weights).
struct Observable {
    std::string name;
    std::vector<std::pair<int, double>> weights; // (flat index, weight)
};

/// A spatial population CTMC: locations, agent types, parameters, initial
/// populations and transition rules. Immutable once built; safe to share
/// across threads.
struct SpatialModel {
    std::vector<LocationInfo> locations;
    std::vector<AgentInfo> agents;
    std::vector<std::pair<std::string, double>> params;
    std::vector<std::int64_t> initial; // length num_agents()*num_locations()
    std::vector<Transition> transitions;

    int num_locations() const { return static_cast<int>(locations.size()); }
    int num_agents() const { return static_cast<int>(agents.size()); }
    int num_populations() const { return num_agents() * num_locations(); }

    /// Flat population index; states are grouped by location.
    int pop_index(int agent, int location) const { return location * num_agents() + agent; }
    int agent_of(int flat) const { return flat % num_agents(); }
    int location_of(int flat) const { return flat / num_agents(); }

    std::string population_label(int flat) const {
        return agents[static_cast<std::size_t>(agent_of(flat))].label + "@" +
               locations[static_cast<std::size_t>(location_of(flat))].label;
    }

    int find_location(const std::string& label) const {
        for (int i = 0; i < num_locations(); ++i)
            if (locations[static_cast<std::size_t>(i)].label == label) return i;
        return -1;
    }
    int find_agent(const std::string& label) const {
        for (int i = 0; i < num_agents(); ++i)
            if (agents[static_cast<std::size_t>(i)].label == label) return i;
        return -1;
    }
    int find_param(const std::string& name) const {
        for (int i = 0; i < static_cast<int>(params.size()); ++i)
            if (params[static_cast<std::size_t>(i)].first == name) return i;
        return -1;
    }

    std::vector<double> param_values() const {
        std::vector<double> v;
        v.reserve(params.size());
        for (const auto& p : params) v.push_back(p.second);
        return v;
    }

    /// Initial state as reals (for ODE analyses).
    std::vector<double> initial_real() const {
        return {initial.begin(), initial.end()};
    }
};

/// Evaluates a rate expression on a real state, clamping negative values to
/// zero (rates are nonnegative by definition). The first negative value per
/// context key warns once.
inline double eval_rate(const Expr& rate, std::span<const double> state,
                        std::span<const double> params, const std::string& context = {}) {
    double r = eval_expr(rate, state, params);
    if (r < 0.0) {
        if (!context.empty())
            warn_once("negrate:" + context, "rate of '" + context + "' evaluated negative; clamped to 0");
        return 0.0;
    }
    return r;
}

/// Applies a transition's update vector to an integer state.
/// Throws NegativePopulation if any count would drop below zero (a simulator
/// guard bug if reached from SSA).
inline std::vector<std::int64_t> apply_transition(const std::vector<std::int64_t>& state,
                                                  const Transition& t) {
    std::vector<std::int64_t> out = state;
    for (const auto& [idx, delta] : t.update) {
        out[static_cast<std::size_t>(idx)] += delta;
        if (out[static_cast<std::size_t>(idx)] < 0)
            throw NegativePopulation("transition '" + t.label + "' drives population index " +
                                     std::to_string(idx) + " below zero");
    }
    return out;
}

/// Applies a transition in place without checks; caller guarantees validity.
inline void apply_transition_unchecked(std::vector<std::int64_t>& state, const Transition& t) {
    for (const auto& [idx, delta] : t.update) state[static_cast<std::size_t>(idx)] += delta;
}

inline double eval_observable(const Observable& obs, std::span<const double> state) {
    double sum = 0.0;
    for (const auto& [idx, w] : obs.weights) sum += w * state[static_cast<std::size_t>(idx)];
    return sum;
}

inline double eval_observable(const Observable& obs, const std::vector<std::int64_t>& state) {
    double sum = 0.0;
    for (const auto& [idx, w] : obs.weights) sum += w * static_cast<double>(state[static_cast<std::size_t>(idx)]);
    return sum;
}

/// Net change of Σ_i w_i X_i under transition t (zero for a conservation law).
inline double conservation_defect(const std::vector<double>& weights, const Transition& t) {
    double d = 0.0;
    for (const auto& [idx, delta] : t.update) d += weights[static_cast<std::size_t>(idx)] * static_cast<double>(delta);
    return d;
}

inline bool transition_equal(const Transition& a, const Transition& b) {
    return a.label == b.label && a.update == b.update && expr_equal(a.rate, b.rate);
}

inline bool model_equal(const SpatialModel& a, const SpatialModel& b) {
    if (a.locations.size() != b.locations.size() || a.agents.size() != b.agents.size() ||
        a.params != b.params || a.initial != b.initial ||
        a.transitions.size() != b.transitions.size())
        return false;
    for (std::size_t i = 0; i < a.locations.size(); ++i) {
        if (a.locations[i].label != b.locations[i].label) return false;
        if (a.locations[i].coord != b.locations[i].coord) return false;
    }
    for (std::size_t i = 0; i < a.agents.size(); ++i)
        if (a.agents[i].label != b.agents[i].label) return false;
    for (std::size_t i = 0; i < a.transitions.size(); ++i)
        if (!transition_equal(a.transitions[i], b.transitions[i])) return false;
    return true;
}

} // namespace spm
