#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "spm/errors.hpp"
#include "spm/expr.hpp"
#include "spm/model.hpp"
#include "spm/ode.hpp"
#include "spm/rng.hpp"
#include "spm/warn.hpp"

namespace spm {

struct SimConfig {
    double t_end = 10.0;
    std::vector<double> grid;              // strictly increasing, within [0, t_end]
    int replications = 1;
    std::uint64_t seed = 1;
    std::vector<Observable> observables;
    int threads = 0;                       // 0 = hardware concurrency
    std::string stream_stage = "ssa";      // rng stream family; replication r uses (seed, stage, r)
};

/// Pointwise ensemble statistics on a fixed time grid, plus run metadata.
/// mean/variance are row-major time x observable.
struct TrajectoryEnsemble {
    std::vector<double> times;
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> variance;
    int replications = 0;
    double wall_clock_s = 0.0;

    double at_mean(std::size_t t, std::size_t o) const { return mean[t * names.size() + o]; }
    double at_var(std::size_t t, std::size_t o) const { return variance[t * names.size() + o]; }
};

namespace sim_detail {

struct CompiledTransition {
    CompiledExpr rate;
    std::vector<std::pair<int, std::int64_t>> update;
    std::string label;
};

struct CompiledModel {
    std::vector<CompiledTransition> transitions;
    std::vector<std::int64_t> initial;

    explicit CompiledModel(const SpatialModel& m) {
        auto params = m.param_values();
        for (const auto& tr : m.transitions)
            transitions.push_back({compile_expr(*tr.rate, params),
                                   {tr.update.begin(), tr.update.end()},
                                   tr.label});
        initial = m.initial;
    }
};

} // namespace sim_detail

inline void validate_grid(const SimConfig& cfg) {
    if (cfg.grid.empty()) throw ConfigError("sample grid is empty");
    double prev = -1.0;
    for (double t : cfg.grid) {
        if (t < 0.0 || t > cfg.t_end + 1e-12)
            throw ConfigError("grid point outside [0, t_end]");
        if (t <= prev) throw ConfigError("grid must be strictly increasing");
        prev = t;
    }
    if (cfg.replications < 1) throw ConfigError("replications must be >= 1");
    if (cfg.observables.empty()) throw ConfigError("no observables configured");
}

/// One exact SSA realization (direct method, full rate recomputation each
/// step). Returns observable values at every grid point, row-major
/// grid x observable. Transitions whose firing would drive a count negative
/// contribute rate zero; negative rate values clamp to zero.
inline std::vector<double> ssa_run(const sim_detail::CompiledModel& cm, const SimConfig& cfg,
                                   std::mt19937_64& rng) {
    const std::size_t m = cm.transitions.size();
    const std::size_t n_obs = cfg.observables.size();
    const std::size_t n_grid = cfg.grid.size();
    std::vector<std::int64_t> state = cm.initial;
    std::vector<double> state_real(state.begin(), state.end());
    std::vector<double> rates(m);
    std::vector<double> scratch;
    std::vector<double> out(n_grid * n_obs, 0.0);

    std::size_t grid_pos = 0;
    double t = 0.0;
    auto record_until = [&](double horizon) {
        while (grid_pos < n_grid && cfg.grid[grid_pos] < horizon) {
            for (std::size_t o = 0; o < n_obs; ++o)
                out[grid_pos * n_obs + o] = eval_observable(cfg.observables[o], state);
            ++grid_pos;
        }
    };

    while (grid_pos < n_grid) {
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const auto& tr = cm.transitions[i];
            bool blocked = false;
            for (const auto& [idx, delta] : tr.update) {
                if (delta < 0 && state[static_cast<std::size_t>(idx)] + delta < 0) {
                    blocked = true;
                    break;
                }
            }
            double r = 0.0;
            if (!blocked) {
                try {
                    r = tr.rate.eval(state_real, scratch);
                } catch (const EvaluationError& e) {
                    throw EvaluationError(std::string(e.what()) + " in rate of '" + tr.label +
                                          "' at simulation time " + std::to_string(t));
                }
                if (r < 0.0) {
                    warn_once("negrate:" + tr.label,
                              "rate of '" + tr.label + "' evaluated negative during SSA; clamped to 0");
                    r = 0.0;
                }
            }
            rates[i] = r;
            total += r;
        }
        if (total <= 0.0) {
            record_until(std::numeric_limits<double>::infinity());
            break;
        }
        double dt = -std::log(uniform01_open(rng)) / total;
        double t_next = t + dt;
        record_until(t_next);
        if (grid_pos >= n_grid) break;
        t = t_next;
        double u = uniform01(rng) * total;
        double cum = 0.0;
        std::size_t chosen = m - 1;
        for (std::size_t i = 0; i < m; ++i) {
            cum += rates[i];
            if (u < cum) {
                chosen = i;
                break;
            }
        }
        for (const auto& [idx, delta] : cm.transitions[chosen].update) {
            state[static_cast<std::size_t>(idx)] += delta;
            state_real[static_cast<std::size_t>(idx)] = static_cast<double>(state[static_cast<std::size_t>(idx)]);
        }
    }
    return out;
}

/// Single SSA realization of a model on a caller-supplied stream.
inline std::vector<double> ssa_run(const SpatialModel& model, const SimConfig& cfg,
                                   std::mt19937_64& rng) {
    validate_grid(cfg);
    sim_detail::CompiledModel cm(model);
    return ssa_run(cm, cfg, rng);
}

/// Runs `replications` independent SSA realizations on deterministically
/// derived rng streams and reduces them to pointwise means and unbiased
/// variances. Replications run in parallel; the reduction is performed in
/// replication order, so results do not depend on scheduling or thread count.
inline TrajectoryEnsemble simulate_ensemble(const SpatialModel& model, const SimConfig& cfg) {
    validate_grid(cfg);
    auto t_start = std::chrono::steady_clock::now();
    sim_detail::CompiledModel cm(model);

    const std::size_t reps = static_cast<std::size_t>(cfg.replications);
    const std::size_t cells = cfg.grid.size() * cfg.observables.size();
    std::vector<std::vector<double>> runs(reps);

    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    std::size_t n_threads = cfg.threads > 0 ? static_cast<std::size_t>(cfg.threads)
                                            : std::min<std::size_t>(hw, reps);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&]() {
        for (;;) {
            std::size_t rep = next.fetch_add(1);
            if (rep >= reps) return;
            try {
                auto rng = derive_stream(cfg.seed, cfg.stream_stage, rep);
                runs[rep] = ssa_run(cm, cfg, rng);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    TrajectoryEnsemble ens;
    ens.times = cfg.grid;
    for (const auto& o : cfg.observables) ens.names.push_back(o.name);
    ens.replications = cfg.replications;
    ens.mean.assign(cells, 0.0);
    ens.variance.assign(cells, 0.0);
    for (std::size_t rep = 0; rep < reps; ++rep)
        for (std::size_t c = 0; c < cells; ++c) ens.mean[c] += runs[rep][c];
    for (std::size_t c = 0; c < cells; ++c) ens.mean[c] /= static_cast<double>(reps);
    if (reps > 1) {
        for (std::size_t rep = 0; rep < reps; ++rep)
            for (std::size_t c = 0; c < cells; ++c) {
                double d = runs[rep][c] - ens.mean[c];
                ens.variance[c] += d * d;
            }
        for (std::size_t c = 0; c < cells; ++c) ens.variance[c] /= static_cast<double>(reps - 1);
    }
    ens.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return ens;
}

/// One observable per population, named "<agent>@<location>".
inline std::vector<Observable> per_population_observables(const SpatialModel& model) {
    std::vector<Observable> obs;
    for (int i = 0; i < model.num_populations(); ++i)
        obs.push_back({model.population_label(i), {{i, 1.0}}});
    return obs;
}

/// Total count of one agent type across all locations.
inline Observable total_observable(const SpatialModel& model, int agent, std::string name = {}) {
    Observable o;
    o.name = name.empty() ? "total_" + model.agents[static_cast<std::size_t>(agent)].label : std::move(name);
    for (int l = 0; l < model.num_locations(); ++l)
        o.weights.emplace_back(model.pop_index(agent, l), 1.0);
    return o;
}

} // namespace spm
