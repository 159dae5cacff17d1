#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "spm/errors.hpp"
#include "spm/expr.hpp"
#include "spm/model.hpp"
#include "spm/spectral.hpp"
#include "spm/warn.hpp"

namespace spm {

/// Reduced model plus the mapping that produced it and, per reduced
/// transition, the labels of the source transitions it came from.
struct ReducedModel {
    SpatialModel model;
    ClusterMap cluster_map;
    std::vector<std::string> cluster_labels;
    std::vector<std::vector<std::string>> provenance;
};

/// Sums populations of identical agent types within each cluster.
inline std::vector<std::int64_t> aggregate_initial_state(const SpatialModel& model,
                                                         const ClusterMap& cm) {
    const int n = model.num_agents();
    std::vector<std::int64_t> out(static_cast<std::size_t>(n) * cm.k, 0);
    for (int loc = 0; loc < model.num_locations(); ++loc) {
        int c = cm.assignment[static_cast<std::size_t>(loc)];
        for (int a = 0; a < n; ++a)
            out[static_cast<std::size_t>(c * n + a)] +=
                model.initial[static_cast<std::size_t>(model.pop_index(a, loc))];
    }
    return out;
}

namespace reduce_detail {

/// Rewrites population references X_a@l to X_a@cluster(l) / |cluster(l)|.
/// Singleton clusters substitute the reference directly (dividing by one is
/// exact, and this keeps the identity partition structurally identical).
inline ExprPtr rewrite_expr(const Expr& e, const SpatialModel& orig, const ClusterMap& cm,
                            const std::vector<int>& cluster_size, int agents) {
    switch (e.kind) {
        case ExprKind::Constant: return ex::constant(e.value);
        case ExprKind::Param: return ex::param(e.param, e.name);
        case ExprKind::Population: {
            int c = cm.assignment[static_cast<std::size_t>(e.location)];
            int flat = c * agents + e.agent;
            ExprPtr ref = ex::population(flat, e.agent, c);
            int size = cluster_size[static_cast<std::size_t>(c)];
            if (size == 1) return ref;
            return ex::div(ref, ex::constant(static_cast<double>(size)));
        }
        default: {
            ExprPtr l = rewrite_expr(*e.lhs, orig, cm, cluster_size, agents);
            ExprPtr r = rewrite_expr(*e.rhs, orig, cm, cluster_size, agents);
            return ex::binary(e.kind, std::move(l), std::move(r));
        }
    }
}

inline ExprPtr add_fold(const ExprPtr& a, const ExprPtr& b) {
    if (a->kind == ExprKind::Constant && b->kind == ExprKind::Constant)
        return ex::constant(a->value + b->value);
    return ex::add(a, b);
}

/// Splits a rate into (state-free factor, state-dependent core) by flattening
/// its product chain. The core is the product of the non-state-free factors.
inline std::pair<ExprPtr, ExprPtr> split_factor(const ExprPtr& rate) {
    std::vector<ExprPtr> factors;
    flatten_product(rate, factors);
    std::vector<ExprPtr> free_part, core_part;
    for (const auto& f : factors)
        (state_free(*f) ? free_part : core_part).push_back(f);
    ExprPtr factor = free_part.empty() ? nullptr : rebuild_product(free_part);
    ExprPtr core = core_part.empty() ? nullptr : rebuild_product(core_part);
    return {factor, core};
}

/// Combines the rates of transitions merged by identical update vectors.
/// When every member is (state-free factor) * (same structural core), the sum
/// factors out: (f1 + f2 + ...) * core, matching how aggregate rates are
/// usually written; otherwise a plain sum chain is built. Adjacent constant
/// operands fold.
inline ExprPtr merge_rates(const std::vector<ExprPtr>& rates) {
    if (rates.size() == 1) return rates.front();
    std::vector<std::pair<ExprPtr, ExprPtr>> parts;
    parts.reserve(rates.size());
    bool factorable = true;
    for (const auto& r : rates) {
        parts.push_back(split_factor(r));
        if (!expr_equal(parts.front().second, parts.back().second)) factorable = false;
    }
    if (factorable) {
        ExprPtr sum;
        for (const auto& [factor, core] : parts) {
            ExprPtr f = factor ? factor : ex::constant(1.0);
            sum = sum ? add_fold(sum, f) : f;
        }
        ExprPtr core = parts.front().second;
        if (!core) return sum;
        if (sum->kind == ExprKind::Constant && sum->value == 1.0) return core;
        return ex::mul(sum, core);
    }
    ExprPtr sum = rates.front();
    for (std::size_t i = 1; i < rates.size(); ++i) sum = add_fold(sum, rates[i]);
    return sum;
}

inline std::vector<std::string> make_cluster_labels(const SpatialModel& model, const ClusterMap& cm) {
    auto members = cm.members();
    std::vector<std::string> labels;
    std::set<std::string> used;
    for (int c = 0; c < cm.k; ++c) {
        std::string label =
            members[static_cast<std::size_t>(c)].size() == 1
                ? model.locations[static_cast<std::size_t>(members[static_cast<std::size_t>(c)][0])].label
                : "cl" + std::to_string(c);
        while (!used.insert(label).second) label += "_";
        labels.push_back(std::move(label));
    }
    return labels;
}

} // namespace reduce_detail

/// Builds the reduced model for a cluster map: updates re-targeted to
/// clusters and summed, population references substituted by
/// cluster-total / cluster-size, all-zero-update transitions pruned, and
/// transitions with identical update vectors merged (rates summed).
inline ReducedModel rewrite_transitions(const SpatialModel& model, const ClusterMap& cm) {
    if (static_cast<int>(cm.assignment.size()) != model.num_locations())
        throw ConfigError("cluster map does not match the model's location count");
    cm.validate();

    ReducedModel out;
    out.cluster_map = cm;
    out.cluster_labels = reduce_detail::make_cluster_labels(model, cm);
    auto members = cm.members();
    auto sizes = cm.cluster_sizes();

    SpatialModel& red = out.model;
    for (int c = 0; c < cm.k; ++c) {
        LocationInfo info;
        info.label = out.cluster_labels[static_cast<std::size_t>(c)];
        const auto& mem = members[static_cast<std::size_t>(c)];
        bool all_coords = true;
        double cx = 0.0, cy = 0.0;
        for (int loc : mem) {
            const auto& coord = model.locations[static_cast<std::size_t>(loc)].coord;
            if (!coord) {
                all_coords = false;
                break;
            }
            cx += (*coord)[0];
            cy += (*coord)[1];
        }
        if (all_coords && !mem.empty())
            info.coord = {cx / static_cast<double>(mem.size()), cy / static_cast<double>(mem.size())};
        red.locations.push_back(std::move(info));
    }
    red.agents = model.agents;
    red.params = model.params;
    red.initial = aggregate_initial_state(model, cm);

    const int n = model.num_agents();
    struct Pending {
        std::vector<std::pair<int, std::int64_t>> update;
        std::vector<ExprPtr> rates;
        std::vector<std::string> sources;
    };
    std::vector<Pending> pending;
    std::map<std::vector<std::pair<int, std::int64_t>>, std::size_t> by_update;

    for (const auto& tr : model.transitions) {
        std::map<int, std::int64_t> agg;
        for (const auto& [idx, delta] : tr.update) {
            int c = cm.assignment[static_cast<std::size_t>(model.location_of(idx))];
            agg[c * n + model.agent_of(idx)] += delta;
        }
        std::vector<std::pair<int, std::int64_t>> update;
        for (const auto& [idx, delta] : agg)
            if (delta != 0) update.emplace_back(idx, delta);
        if (update.empty()) continue; // redundant after aggregation

        ExprPtr rate = reduce_detail::rewrite_expr(*tr.rate, model, cm, sizes, n);
        auto it = by_update.find(update);
        if (it == by_update.end()) {
            by_update[update] = pending.size();
            pending.push_back({std::move(update), {std::move(rate)}, {tr.label}});
        } else {
            pending[it->second].rates.push_back(std::move(rate));
            pending[it->second].sources.push_back(tr.label);
        }
    }

    std::set<std::string> used_labels;
    for (auto& p : pending) {
        Transition tr;
        tr.update = p.update;
        tr.rate = reduce_detail::merge_rates(p.rates);
        tr.label = p.sources.size() == 1 ? p.sources.front() : p.sources.front() + "_agg";
        while (!used_labels.insert(tr.label).second) tr.label += "_";
        red.transitions.push_back(std::move(tr));
        out.provenance.push_back(std::move(p.sources));
    }
    return out;
}

/// Carries an observable over to the reduced model. Weights must be uniform
/// per (agent, cluster); mixed weights are averaged with a warning.
inline Observable reduce_observable(const SpatialModel& model, const Observable& obs,
                                    const ClusterMap& cm) {
    const int n = model.num_agents();
    std::map<int, std::vector<double>> gathered; // reduced flat index -> member weights
    std::map<int, double> weight_of;
    for (const auto& [idx, w] : obs.weights)
        weight_of[idx] = w;
    auto members = cm.members();
    for (int c = 0; c < cm.k; ++c)
        for (int a = 0; a < n; ++a) {
            std::vector<double> ws;
            bool any = false;
            for (int loc : members[static_cast<std::size_t>(c)]) {
                auto it = weight_of.find(model.pop_index(a, loc));
                double w = it == weight_of.end() ? 0.0 : it->second;
                if (w != 0.0) any = true;
                ws.push_back(w);
            }
            if (any) gathered[c * n + a] = std::move(ws);
        }

    Observable out;
    out.name = obs.name;
    for (const auto& [flat, ws] : gathered) {
        bool uniform = true;
        for (double w : ws)
            if (w != ws.front()) uniform = false;
        double w;
        if (uniform) {
            w = ws.front();
        } else {
            warn_once("approxobs:" + obs.name,
                      "observable '" + obs.name + "' has mixed weights within a cluster; averaging");
            double sum = 0.0;
            for (double x : ws) sum += x;
            w = sum / static_cast<double>(ws.size());
        }
        if (w != 0.0) out.weights.emplace_back(flat, w);
    }
    return out;
}

/// Provenance comment block for serialized reduced models.
inline std::vector<std::string> provenance_comments(const ReducedModel& rm,
                                                    const SpatialModel& original) {
    std::vector<std::string> lines;
    lines.push_back("reduced model: " + std::to_string(rm.cluster_map.k) + " clusters from " +
                    std::to_string(original.num_locations()) + " locations");
    auto members = rm.cluster_map.members();
    for (int c = 0; c < rm.cluster_map.k; ++c) {
        std::string line = "cluster " + rm.cluster_labels[static_cast<std::size_t>(c)] + " <-";
        for (int loc : members[static_cast<std::size_t>(c)])
            line += " " + original.locations[static_cast<std::size_t>(loc)].label;
        lines.push_back(std::move(line));
    }
    for (std::size_t t = 0; t < rm.provenance.size(); ++t) {
        if (rm.provenance[t].size() < 2) continue;
        std::string line = "transition " + rm.model.transitions[t].label + " <-";
        for (const auto& src : rm.provenance[t]) line += " " + src;
        lines.push_back(std::move(line));
    }
    return lines;
}

} // namespace spm
