#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spm/csv.hpp"
#include "spm/distance.hpp"
#include "spm/errors.hpp"
#include "spm/generators.hpp"
#include "spm/meanfield.hpp"
#include "spm/model.hpp"
#include "spm/moments.hpp"
#include "spm/reduce.hpp"
#include "spm/simulate.hpp"
#include "spm/spectral.hpp"
#include "spm/spm_format.hpp"

namespace spm {

struct PipelineConfig {
    // model source: exactly one of these
    std::optional<std::string> model_file;
    std::optional<SisConfig> sis;
    std::optional<BikeConfig> bike;

    DistanceMetric metric = DistanceMetric::LinearNoise;
    std::optional<double> sigma;      // kernel width; empty = median heuristic
    std::optional<int> k;             // explicit cluster count; empty = eigengap
    int k_min = 2;
    int k_max = 0;                    // 0 = graph size - 1
    std::vector<std::string> pin_labels;
    bool latlon = false;              // physical metric: haversine on (lat,lon)

    SteadyOptions steady;             // fluid analysis options (incl. fixed_time)

    double t_end = 10.0;
    double grid_step = 0.0;           // 0 = t_end / 100
    int runs = 200;
    int threads = 0;
    std::uint64_t seed = 42;

    std::string out_dir;              // empty = no artifacts on disk
    int top = 10;                     // eigenvalues exported for plots
};

struct ComparisonReport {
    std::vector<std::pair<std::string, double>> error_ratios; // per paired observable
    double error_ratio_mean = 0.0;
    int transitions_original = 0;
    int transitions_reduced = 0;
    double wall_original_s = 0.0;
    double wall_reduced_s = 0.0;       // includes aggregation cost
    double aggregation_s = 0.0;
    double speedup = 0.0;
    int k = 0;          // total clusters, pinned singletons included
    int k_selected = 0; // explicit --k or the eigengap choice, before pinning
    DistanceMetric metric = DistanceMetric::LinearNoise;
    bool metric_fell_back = false;     // linear-noise requested but closure unsupported
    double sigma_used = 0.0;
    std::uint64_t seed = 0;
};

struct PipelineResult {
    SpatialModel model;
    SteadyState steady;
    DistanceMatrix distance;
    std::vector<double> eigenvalues;
    ClusterMap clusters;
    ReducedModel reduced;
    TrajectoryEnsemble original_runs;
    TrajectoryEnsemble reduced_runs;
    ComparisonReport report;
};

/// Time-averaged relative error of each paired observable:
///   (1/|grid+|) * sum over t with |x(t)| > 1e-9 of |xhat(t) - x(t)| / |x(t)|.
inline std::vector<double> error_ratios(const TrajectoryEnsemble& orig, const TrajectoryEnsemble& red) {
    if (orig.times.size() != red.times.size()) throw GridMismatch("ensembles have different grids");
    for (std::size_t t = 0; t < orig.times.size(); ++t)
        if (std::abs(orig.times[t] - red.times[t]) > 1e-12)
            throw GridMismatch("ensembles have different grids");
    if (orig.names.size() != red.names.size())
        throw GridMismatch("ensembles have different observable sets");
    constexpr double kEps0 = 1e-9;
    std::vector<double> out(orig.names.size(), 0.0);
    for (std::size_t o = 0; o < orig.names.size(); ++o) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t t = 0; t < orig.times.size(); ++t) {
            double x = orig.at_mean(t, o);
            if (std::abs(x) <= kEps0) continue;
            sum += std::abs(red.at_mean(t, o) - x) / std::abs(x);
            ++count;
        }
        out[o] = count ? sum / static_cast<double>(count) : 0.0;
    }
    return out;
}

inline std::string report_text(const ComparisonReport& r) {
    std::string out;
    out += "metric: " + std::string(metric_name(r.metric)) + (r.metric_fell_back ? " (fallback from linear-noise)" : "") + "\n";
    out += "k: " + std::to_string(r.k) + "\n";
    out += "k_selected: " + std::to_string(r.k_selected) + "\n";
    out += "sigma: " + format_real(r.sigma_used) + "\n";
    out += "seed: " + std::to_string(r.seed) + "\n";
    out += "transitions_original: " + std::to_string(r.transitions_original) + "\n";
    out += "transitions_reduced: " + std::to_string(r.transitions_reduced) + "\n";
    out += "wall_original_s: " + format_real(r.wall_original_s) + "\n";
    out += "wall_reduced_s: " + format_real(r.wall_reduced_s) + "\n";
    out += "aggregation_s: " + format_real(r.aggregation_s) + "\n";
    out += "speedup: " + format_real(r.speedup) + "\n";
    out += "error_ratio_mean: " + format_real(r.error_ratio_mean) + "\n";
    for (const auto& [name, ratio] : r.error_ratios)
        out += "error_ratio[" + name + "]: " + format_real(ratio) + "\n";
    return out;
}

inline std::string distance_csv(const DistanceMatrix& d, const SpatialModel& m) {
    std::string out = "location";
    for (const auto& loc : m.locations) out += "," + loc.label;
    out += "\n";
    for (int i = 0; i < d.n; ++i) {
        out += m.locations[static_cast<std::size_t>(i)].label;
        for (int j = 0; j < d.n; ++j) out += "," + format_real(d.at(i, j));
        out += "\n";
    }
    return out;
}

inline std::string similarity_csv(const SimilarityMatrix& sim, const SpatialModel& m) {
    std::string out = "location";
    for (int j = 0; j < sim.n; ++j)
        out += "," + m.locations[static_cast<std::size_t>(sim.index_map[static_cast<std::size_t>(j)])].label;
    out += "\n";
    for (int i = 0; i < sim.n; ++i) {
        out += m.locations[static_cast<std::size_t>(sim.index_map[static_cast<std::size_t>(i)])].label;
        for (int j = 0; j < sim.n; ++j) out += "," + format_real(sim.at(i, j));
        out += "\n";
    }
    return out;
}

inline std::string eigenvalues_csv(const std::vector<double>& ev, int top) {
    std::string out = "index,lambda\n";
    int count = std::min<int>(top, static_cast<int>(ev.size()));
    for (int i = 0; i < count; ++i)
        out += std::to_string(i + 1) + "," + format_real(ev[static_cast<std::size_t>(i)]) + "\n";
    return out;
}

inline std::string assignments_csv(const ClusterMap& cm, const SpatialModel& m,
                                   const std::vector<std::string>& cluster_labels) {
    std::string out = "location,cluster,cluster_label,pinned\n";
    std::set<int> pins(cm.pinned.begin(), cm.pinned.end());
    for (std::size_t loc = 0; loc < cm.assignment.size(); ++loc) {
        int c = cm.assignment[loc];
        out += m.locations[loc].label + "," + std::to_string(c) + "," +
               cluster_labels[static_cast<std::size_t>(c)] + "," +
               (pins.count(static_cast<int>(loc)) ? "1" : "0") + "\n";
    }
    return out;
}

inline std::string steady_csv(const SteadyState& ss, const SpatialModel& m) {
    std::string out = "population,mean,variance\n";
    for (int i = 0; i < m.num_populations(); ++i) {
        out += m.population_label(i) + "," + format_real(ss.mean[static_cast<std::size_t>(i)]) + ",";
        out += ss.variance.empty() ? "" : format_real(ss.variance[static_cast<std::size_t>(i)]);
        out += "\n";
    }
    return out;
}

/// Per-(cluster, agent) comparison observables: on the original model the sum
/// of member populations, on the reduced model the aggregated population.
/// Both sides share names "<agent>@<cluster_label>".
inline std::pair<std::vector<Observable>, std::vector<Observable>>
paired_observables(const SpatialModel& model, const ReducedModel& rm) {
    std::vector<Observable> orig, red;
    auto members = rm.cluster_map.members();
    const int n = model.num_agents();
    for (int c = 0; c < rm.cluster_map.k; ++c)
        for (int a = 0; a < n; ++a) {
            Observable o;
            o.name = model.agents[static_cast<std::size_t>(a)].label + "@" +
                     rm.cluster_labels[static_cast<std::size_t>(c)];
            for (int loc : members[static_cast<std::size_t>(c)])
                o.weights.emplace_back(model.pop_index(a, loc), 1.0);
            orig.push_back(o);
            red.push_back(reduce_observable(model, o, rm.cluster_map));
        }
    return {std::move(orig), std::move(red)};
}

/// Emits eigengap and trajectory-overlay plot data. Overlay CSVs have columns
/// time,orig_mean,reduced_mean; pinned locations additionally get a
/// pinned_<label>.csv copy. Throws MissingArtifact when inputs are absent.
inline void emit_plot_data(const PipelineResult& res, const std::filesystem::path& dir, int top) {
    if (res.eigenvalues.empty()) throw MissingArtifact("no eigenvalues to plot");
    if (res.original_runs.times.empty() || res.reduced_runs.times.empty())
        throw MissingArtifact("no trajectories to plot");
    write_text_file(dir / "eigenvalues.csv", eigenvalues_csv(res.eigenvalues, top));
    std::set<std::string> pinned_labels;
    for (int loc : res.clusters.pinned)
        pinned_labels.insert(res.model.locations[static_cast<std::size_t>(loc)].label);
    for (std::size_t o = 0; o < res.original_runs.names.size(); ++o) {
        std::string csv = "time,orig_mean,reduced_mean\n";
        for (std::size_t t = 0; t < res.original_runs.times.size(); ++t)
            csv += format_real(res.original_runs.times[t]) + "," +
                   format_real(res.original_runs.at_mean(t, o)) + "," +
                   format_real(res.reduced_runs.at_mean(t, o)) + "\n";
        const std::string& name = res.original_runs.names[o];
        write_text_file(dir / ("overlay_" + name + ".csv"), csv);
        auto at = name.find('@');
        if (at != std::string::npos && pinned_labels.count(name.substr(at + 1)))
            write_text_file(dir / ("pinned_" + name.substr(at + 1) + "_" + name.substr(0, at) + ".csv"), csv);
    }
}

/// Runs the whole pipeline: build/load the model, fluid analysis, distance,
/// spectral clustering (with optional pinning), reduction, paired ensemble
/// simulation and error-ratio reporting. Artifacts are written to
/// cfg.out_dir stage by stage; a stage failure leaves earlier artifacts plus
/// error.txt behind and rethrows.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
    int sources = (cfg.model_file ? 1 : 0) + (cfg.sis ? 1 : 0) + (cfg.bike ? 1 : 0);
    if (sources != 1) throw ConfigError("exactly one model source required (file, gen-sis or gen-bike)");
    if (cfg.runs < 1) throw ConfigError("runs must be >= 1");
    if (cfg.t_end <= 0.0) throw ConfigError("t-end must be positive");

    std::filesystem::path dir;
    bool artifacts = !cfg.out_dir.empty();
    if (artifacts) {
        dir = cfg.out_dir;
        std::filesystem::create_directories(dir);
    }

    PipelineResult res;
    std::string stage = "setup";
    auto fail_dump = [&](const std::string& what) {
        if (artifacts) write_text_file(dir / "error.txt", "stage: " + stage + "\nerror: " + what + "\n");
    };

    try {
        stage = "model";
        if (cfg.model_file)
            res.model = parse_model(read_text_file(*cfg.model_file));
        else if (cfg.sis)
            res.model = gen_sis(*cfg.sis);
        else
            res.model = gen_bike(*cfg.bike);
        if (artifacts) write_text_file(dir / "model.spm", serialize_model(res.model));

        std::vector<int> pinned;
        for (const auto& label : cfg.pin_labels) {
            int loc = res.model.find_location(label);
            if (loc < 0) throw ConfigError("pinned location '" + label + "' not in the model");
            pinned.push_back(loc);
        }

        auto agg_start = std::chrono::steady_clock::now();
        ComparisonReport& rep = res.report;
        rep.metric = cfg.metric;
        rep.seed = cfg.seed;

        stage = "fluid";
        if (cfg.metric != DistanceMetric::Physical) {
            if (cfg.metric == DistanceMetric::LinearNoise) {
                try {
                    res.steady = moment_closure_steady(res.model, cfg.steady);
                } catch (const UnsupportedRate& e) {
                    warn_once("closure-fallback", std::string("moment closure unavailable (") + e.what() +
                                                      "); falling back to the mean-field distance");
                    rep.metric = DistanceMetric::MeanField;
                    rep.metric_fell_back = true;
                    res.steady = mean_field_steady(res.model, cfg.steady);
                }
            } else {
                res.steady = mean_field_steady(res.model, cfg.steady);
            }
            if (artifacts) write_text_file(dir / "steady.csv", steady_csv(res.steady, res.model));
        }

        stage = "distance";
        switch (rep.metric) {
            case DistanceMetric::LinearNoise: res.distance = linear_noise_distance(res.steady, res.model); break;
            case DistanceMetric::MeanField: res.distance = mean_field_distance(res.steady, res.model); break;
            case DistanceMetric::Physical: res.distance = physical_distance(res.model, cfg.latlon); break;
        }
        if (artifacts) write_text_file(dir / "distance.csv", distance_csv(res.distance, res.model));

        stage = "cluster";
        // A location farther than ~12 kernel widths from everything has a
        // numerically zero similarity row. Such a location is maximally
        // dissimilar, so it is pinned into its own singleton cluster and the
        // decomposition retried on the rest.
        SimilarityMatrix sim;
        SpectralDecomposition dec;
        for (;;) {
            sim = build_similarity(res.distance, cfg.sigma, pinned);
            try {
                dec = spectral_decompose(sim);
                break;
            } catch (const IsolatedVertex& iv) {
                warn_once("autopin:" + std::to_string(iv.index),
                          "location '" + res.model.locations[static_cast<std::size_t>(iv.index)].label +
                              "' is isolated under the similarity kernel; pinned as a singleton");
                pinned.push_back(iv.index);
            }
        }
        rep.sigma_used = sim.sigma;
        res.eigenvalues = dec.eigenvalues;
        if (artifacts) {
            write_text_file(dir / "similarity.csv", similarity_csv(sim, res.model));
            write_text_file(dir / "eigenvalues.csv", eigenvalues_csv(res.eigenvalues, cfg.top));
        }
        int k;
        if (cfg.k) {
            k = *cfg.k;
            if (k < 1 || k > sim.n) throw ConfigError("explicit k outside [1, graph size]");
        } else {
            int k_max = cfg.k_max > 0 ? cfg.k_max : sim.n - 1;
            k = choose_k(dec.eigenvalues, cfg.k_min, k_max);
        }
        res.clusters = njw_cluster(dec, k, pinned, cfg.seed, res.model.num_locations(), &res.distance);
        rep.k = res.clusters.k;
        rep.k_selected = k;

        stage = "reduce";
        res.reduced = rewrite_transitions(res.model, res.clusters);
        rep.transitions_original = static_cast<int>(res.model.transitions.size());
        rep.transitions_reduced = static_cast<int>(res.reduced.model.transitions.size());
        if (artifacts) {
            write_text_file(dir / "assignments.csv",
                            assignments_csv(res.clusters, res.model, res.reduced.cluster_labels));
            write_text_file(dir / "reduced.spm",
                            serialize_model(res.reduced.model, provenance_comments(res.reduced, res.model)));
        }
        rep.aggregation_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - agg_start).count();

        stage = "simulate";
        auto [obs_orig, obs_red] = paired_observables(res.model, res.reduced);
        SimConfig sim_cfg;
        sim_cfg.t_end = cfg.t_end;
        double step = cfg.grid_step > 0.0 ? cfg.grid_step : cfg.t_end / 100.0;
        sim_cfg.grid = make_uniform_grid(cfg.t_end, step);
        sim_cfg.replications = cfg.runs;
        sim_cfg.seed = cfg.seed;
        sim_cfg.threads = cfg.threads;
        sim_cfg.stream_stage = "ssa"; // same streams both sides: identity reductions match exactly
        sim_cfg.observables = obs_orig;
        res.original_runs = simulate_ensemble(res.model, sim_cfg);
        sim_cfg.observables = obs_red;
        res.reduced_runs = simulate_ensemble(res.reduced.model, sim_cfg);
        if (artifacts) {
            write_text_file(dir / "trajectory_original.csv", trajectory_csv(res.original_runs));
            write_text_file(dir / "trajectory_original.meta.txt", trajectory_metadata(res.original_runs, cfg.seed));
            write_text_file(dir / "trajectory_reduced.csv", trajectory_csv(res.reduced_runs));
            write_text_file(dir / "trajectory_reduced.meta.txt", trajectory_metadata(res.reduced_runs, cfg.seed));
        }

        stage = "report";
        auto ratios = error_ratios(res.original_runs, res.reduced_runs);
        double sum = 0.0;
        for (std::size_t o = 0; o < ratios.size(); ++o) {
            rep.error_ratios.emplace_back(res.original_runs.names[o], ratios[o]);
            sum += ratios[o];
        }
        rep.error_ratio_mean = ratios.empty() ? 0.0 : sum / static_cast<double>(ratios.size());
        rep.wall_original_s = res.original_runs.wall_clock_s;
        rep.wall_reduced_s = rep.aggregation_s + res.reduced_runs.wall_clock_s;
        rep.speedup = rep.wall_reduced_s > 0.0 ? rep.wall_original_s / rep.wall_reduced_s : 0.0;
        if (artifacts) {
            write_text_file(dir / "report.txt", report_text(rep));
            emit_plot_data(res, dir, cfg.top);
        }
    } catch (const ConfigError&) {
        throw; // configuration problems are the caller's to fix; no stage wrap
    } catch (const Error& e) {
        fail_dump(e.what());
        throw Error("stage '" + stage + "' failed: " + e.what());
    }
    return res;
}

} // namespace spm
