// spm: spatial population model reduction toolkit.
//
// Generates, analyzes, clusters, reduces and simulates spatial population
// CTMC models; see README.md for the full workflow.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spm/csv.hpp"
#include "spm/generators.hpp"
#include "spm/meanfield.hpp"
#include "spm/moments.hpp"
#include "spm/pipeline.hpp"
#include "spm/reduce.hpp"
#include "spm/simulate.hpp"
#include "spm/spm_format.hpp"

namespace fs = std::filesystem;

namespace {

struct SteadyFlags {
    double t_max = 1000.0;
    double t_eval = -1.0; // < 0: detect equilibrium
    double eps_abs = 1e-8;
    double eps_rel = 1e-6;
    double eps_osc = 1e-4;
    double window_frac = 0.10;

    void attach(CLI::App* cmd) {
        cmd->add_option("--t-max", t_max, "fluid analysis time horizon")->capture_default_str();
        cmd->add_option("--t-eval", t_eval, "evaluate fluid state at this fixed time instead of detecting equilibrium");
        cmd->add_option("--eps-abs", eps_abs, "equilibrium residual absolute tolerance")->capture_default_str();
        cmd->add_option("--eps-rel", eps_rel, "equilibrium residual relative tolerance")->capture_default_str();
        cmd->add_option("--eps-osc", eps_osc, "oscillation window-average tolerance")->capture_default_str();
        cmd->add_option("--window-frac", window_frac, "averaging window as a fraction of t-max")->capture_default_str();
    }

    spm::SteadyOptions options() const {
        spm::SteadyOptions o;
        o.t_max = t_max;
        o.eps_abs = eps_abs;
        o.eps_rel = eps_rel;
        o.eps_osc = eps_osc;
        o.window_frac = window_frac;
        if (t_eval >= 0.0) o.fixed_time = t_eval;
        return o;
    }
};

struct BikeFlags {
    int stations = 30;
    bool uniform = false;
    bool gen_journeys = false;
    bool uniform_dest = false;
    std::string journeys_file;
    std::string coords_file;
    double horizon = 50.0;
    double lambda = 2.0;
    double trip_minutes = 15.0;
    int groups = 5;
    double base_rate = 1.0;
    double rate_factor = 2.0;
    double trip_base = 10.0;
    double trip_step = 6.0;
    double cross_prob = 0.2;
    std::int64_t slots = 20;
    std::int64_t bikes = 10;

    void attach(CLI::App* cmd) {
        cmd->add_option("--stations", stations, "number of bike stations")->capture_default_str();
        cmd->add_flag("--uniform", uniform, "uniform full destination matrix (incl. self trips)");
        cmd->add_flag("--gen-journeys", gen_journeys, "synthesize a journey file first");
        cmd->add_flag("--uniform-dest", uniform_dest,
                      "synthetic journeys: uniform destinations (unbalanced stations) instead of closed cycles");
        cmd->add_option("--journeys", journeys_file, "journey CSV (start,end,duration_sec)");
        cmd->add_option("--coords", coords_file, "station coordinates CSV (label,x,y)");
        cmd->add_option("--horizon", horizon, "observation horizon for rate estimation, hours")->capture_default_str();
        cmd->add_option("--lambda", lambda, "uniform mode: pickup rate per station, 1/hour")->capture_default_str();
        cmd->add_option("--trip-minutes", trip_minutes, "uniform mode: mean trip duration")->capture_default_str();
        cmd->add_option("--groups", groups, "synthetic journeys: latent demand groups")->capture_default_str();
        cmd->add_option("--base-rate", base_rate, "synthetic journeys: base pickup intensity")->capture_default_str();
        cmd->add_option("--rate-factor", rate_factor, "synthetic journeys: per-group intensity factor")->capture_default_str();
        cmd->add_option("--trip-base", trip_base, "synthetic journeys: group-0 mean trip minutes")->capture_default_str();
        cmd->add_option("--trip-step", trip_step, "synthetic journeys: per-group extra trip minutes")->capture_default_str();
        cmd->add_option("--cross-prob", cross_prob, "synthetic journeys: cross-group trip probability")->capture_default_str();
        cmd->add_option("--slots", slots, "slots per station")->capture_default_str();
        cmd->add_option("--bikes", bikes, "initial bikes per station")->capture_default_str();
    }

    spm::BikeConfig build(std::uint64_t seed, const fs::path& out_dir) const {
        if (uniform)
            return spm::uniform_bike_config(stations, lambda, trip_minutes, slots, bikes, seed);
        std::vector<spm::JourneyRecord> records;
        std::vector<std::string> labels;
        if (gen_journeys) {
            spm::SyntheticJourneyConfig jc;
            jc.stations = stations;
            jc.groups = groups;
            jc.horizon_hours = horizon;
            jc.base_rate = base_rate;
            jc.rate_factor = rate_factor;
            jc.trip_minutes_base = trip_base;
            jc.trip_minutes_step = trip_step;
            jc.cross_group_prob = cross_prob;
            jc.uniform_destinations = uniform_dest;
            jc.seed = seed;
            records = spm::generate_journeys(jc);
            for (int i = 0; i < stations; ++i) labels.push_back("s" + std::to_string(i + 1));
            if (!out_dir.empty()) {
                fs::create_directories(out_dir);
                spm::write_text_file(out_dir / "journeys.csv", spm::journeys_csv(records));
            }
        } else if (!journeys_file.empty()) {
            records = spm::parse_journeys_csv(spm::read_text_file(journeys_file));
        } else {
            throw spm::ConfigError("gen-bike needs --uniform, --journeys or --gen-journeys");
        }
        auto cfg = spm::estimate_bike_rates(records, horizon, labels, slots, bikes);
        if (!coords_file.empty()) {
            auto coords = spm::parse_coords_csv(spm::read_text_file(coords_file));
            for (const auto& [label, xy] : coords) {
                for (std::size_t i = 0; i < cfg.labels.size(); ++i)
                    if (cfg.labels[i] == label) cfg.coords[i] = xy;
            }
        } else if (gen_journeys) {
            cfg.coords = spm::random_coords(stations, seed + 1);
            if (!out_dir.empty())
                spm::write_text_file(out_dir / "coords.csv", spm::coords_csv(cfg.labels, cfg.coords));
        }
        return cfg;
    }
};

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

spm::SpatialModel load_model(const std::string& path) {
    return spm::parse_model(spm::read_text_file(path));
}

fs::path ensure_dir(const std::string& out) {
    if (out.empty()) throw spm::ConfigError("--out <dir> is required");
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

spm::ClusterMap read_assignments(const std::string& path, const spm::SpatialModel& model,
                                 std::vector<std::string>& cluster_labels) {
    std::string text = spm::read_text_file(path);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    spm::ClusterMap cm;
    cm.assignment.assign(static_cast<std::size_t>(model.num_locations()), -1);
    std::map<int, std::string> labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto parts = split_csv_list(line);
        if (parts.size() != 4) throw spm::ConfigError("bad assignments row: " + line);
        int loc = model.find_location(parts[0]);
        if (loc < 0) throw spm::ConfigError("assignments reference unknown location '" + parts[0] + "'");
        int c = std::stoi(parts[1]);
        cm.assignment[static_cast<std::size_t>(loc)] = c;
        labels[c] = parts[2];
        cm.k = std::max(cm.k, c + 1);
        if (parts[3] == "1") cm.pinned.push_back(loc);
    }
    for (int a : cm.assignment)
        if (a < 0) throw spm::ConfigError("assignments do not cover every location");
    cluster_labels.clear();
    for (int c = 0; c < cm.k; ++c) {
        auto it = labels.find(c);
        cluster_labels.push_back(it == labels.end() ? "cl" + std::to_string(c) : it->second);
    }
    cm.validate();
    return cm;
}

/// Fluid trajectory dump in the simulator CSV schema.
template <class System>
std::string fluid_trajectory_csv(const System& sys, const std::vector<double>& y0,
                                 const std::vector<double>& grid, const spm::SpatialModel& model,
                                 bool closure) {
    std::string out = "time";
    for (int i = 0; i < model.num_populations(); ++i) {
        out += "," + model.population_label(i) + "_mean";
        out += "," + model.population_label(i) + "_var";
    }
    out += "\n";
    spm::integrate_grid(sys, y0, grid, spm::OdeOptions{}, [&](std::size_t, double t, const std::vector<double>& y) {
        out += spm::format_real(t);
        for (int i = 0; i < model.num_populations(); ++i) {
            double mean, var = 0.0;
            if constexpr (std::is_same_v<System, spm::MomentSystem>) {
                mean = y[static_cast<std::size_t>(i)];
                var = sys.variances_of(y)[static_cast<std::size_t>(i)];
            } else {
                mean = y[static_cast<std::size_t>(i)];
            }
            (void)closure;
            out += "," + spm::format_real(mean) + "," + spm::format_real(var);
        }
        out += "\n";
    });
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatial population model reduction toolkit"};
    app.require_subcommand(1);

    // ----- gen-sis -----------------------------------------------------
    spm::SisConfig sis;
    std::string out_dir;
    std::uint64_t seed = 1;
    auto* cmd_sis = app.add_subcommand("gen-sis", "generate a community SIS model");
    cmd_sis->add_option("--m", sis.communities, "communities")->capture_default_str();
    cmd_sis->add_option("--connectivity", sis.connectivity, "movement partners per community")->capture_default_str();
    cmd_sis->add_option("--mu", sis.mu, "recovery rate")->capture_default_str();
    cmd_sis->add_option("--beta-min", sis.beta_min)->capture_default_str();
    cmd_sis->add_option("--beta-max", sis.beta_max)->capture_default_str();
    cmd_sis->add_option("--rate-min", sis.rate_min)->capture_default_str();
    cmd_sis->add_option("--rate-max", sis.rate_max)->capture_default_str();
    cmd_sis->add_option("--population", sis.population, "individuals per community")->capture_default_str();
    cmd_sis->add_option("--infected", sis.infected, "initially infected per community")->capture_default_str();
    cmd_sis->add_option("--seed", seed)->capture_default_str();
    cmd_sis->add_option("--out", out_dir, "output directory");
    cmd_sis->callback([&] {
        sis.seed = seed;
        auto model = spm::gen_sis(sis);
        auto dir = ensure_dir(out_dir);
        spm::write_text_file(dir / "model.spm", spm::serialize_model(model));
        std::cout << "wrote " << (dir / "model.spm").string() << " with "
                  << model.transitions.size() << " transitions\n";
    });

    // ----- gen-bike ----------------------------------------------------
    BikeFlags bike;
    auto* cmd_bike = app.add_subcommand("gen-bike", "generate a bike-sharing model");
    bike.attach(cmd_bike);
    cmd_bike->add_option("--seed", seed)->capture_default_str();
    cmd_bike->add_option("--out", out_dir, "output directory");
    cmd_bike->callback([&] {
        auto dir = ensure_dir(out_dir);
        auto cfg = bike.build(seed, dir);
        auto model = spm::gen_bike(cfg);
        spm::write_text_file(dir / "model.spm", spm::serialize_model(model));
        std::cout << "wrote " << (dir / "model.spm").string() << " with "
                  << model.transitions.size() << " transitions\n";
    });

    // ----- estimate-rates ----------------------------------------------
    std::string journeys_file;
    double horizon = 50.0;
    auto* cmd_est = app.add_subcommand("estimate-rates", "estimate bike demand from journey data");
    cmd_est->add_option("--journeys", journeys_file, "journey CSV")->required();
    cmd_est->add_option("--horizon", horizon, "observation horizon, hours")->capture_default_str();
    cmd_est->add_option("--out", out_dir, "output directory");
    cmd_est->callback([&] {
        auto records = spm::parse_journeys_csv(spm::read_text_file(journeys_file));
        auto cfg = spm::estimate_bike_rates(records, horizon);
        auto dir = ensure_dir(out_dir);
        std::string lam = "label,lambda\n";
        for (std::size_t i = 0; i < cfg.labels.size(); ++i)
            lam += cfg.labels[i] + "," + spm::format_real(cfg.lambda[i]) + "\n";
        spm::write_text_file(dir / "lambda.csv", lam);
        auto matrix_csv = [&cfg](const std::vector<std::vector<double>>& mtx) {
            std::string out = "from";
            for (const auto& l : cfg.labels) out += "," + l;
            out += "\n";
            for (std::size_t i = 0; i < cfg.labels.size(); ++i) {
                out += cfg.labels[i];
                for (std::size_t j = 0; j < cfg.labels.size(); ++j)
                    out += "," + spm::format_real(mtx[i][j]);
                out += "\n";
            }
            return out;
        };
        spm::write_text_file(dir / "dest_prob.csv", matrix_csv(cfg.dest_prob));
        spm::write_text_file(dir / "trip_rate.csv", matrix_csv(cfg.trip_rate));
        std::cout << "estimated rates for " << cfg.labels.size() << " stations\n";
    });

    // ----- simulate ------------------------------------------------------
    std::string model_file;
    double t_end = 10.0, grid_step = 0.0;
    int runs = 200, threads = 0;
    auto* cmd_simulate = app.add_subcommand("simulate", "SSA ensemble of a model");
    cmd_simulate->add_option("--model", model_file, ".spm model file")->required();
    cmd_simulate->add_option("--runs", runs)->capture_default_str();
    cmd_simulate->add_option("--t-end", t_end)->capture_default_str();
    cmd_simulate->add_option("--grid-step", grid_step, "0 = t-end/100")->capture_default_str();
    cmd_simulate->add_option("--seed", seed)->capture_default_str();
    cmd_simulate->add_option("--threads", threads, "0 = hardware")->capture_default_str();
    cmd_simulate->add_option("--out", out_dir, "output directory");
    cmd_simulate->callback([&] {
        auto model = load_model(model_file);
        spm::SimConfig cfg;
        cfg.t_end = t_end;
        cfg.grid = spm::make_uniform_grid(t_end, grid_step > 0.0 ? grid_step : t_end / 100.0);
        cfg.replications = runs;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.observables = spm::per_population_observables(model);
        auto ens = spm::simulate_ensemble(model, cfg);
        auto dir = ensure_dir(out_dir);
        spm::write_text_file(dir / "trajectory.csv", spm::trajectory_csv(ens));
        spm::write_text_file(dir / "trajectory.meta.txt", spm::trajectory_metadata(ens, seed));
        std::cout << runs << " runs in " << ens.wall_clock_s << " s\n";
    });

    // ----- meanfield / moments -------------------------------------------
    auto* cmd_mf = app.add_subcommand("meanfield", "mean-field ODE trajectory");
    cmd_mf->add_option("--model", model_file)->required();
    cmd_mf->add_option("--t-end", t_end)->capture_default_str();
    cmd_mf->add_option("--grid-step", grid_step, "0 = t-end/100")->capture_default_str();
    cmd_mf->add_option("--out", out_dir);
    cmd_mf->callback([&] {
        auto model = load_model(model_file);
        spm::MeanFieldSystem sys(model);
        auto grid = spm::make_uniform_grid(t_end, grid_step > 0.0 ? grid_step : t_end / 100.0);
        auto dir = ensure_dir(out_dir);
        spm::write_text_file(dir / "meanfield.csv",
                             fluid_trajectory_csv(sys, model.initial_real(), grid, model, false));
        std::cout << "wrote " << (dir / "meanfield.csv").string() << "\n";
    });

    auto* cmd_mom = app.add_subcommand("moments", "normal moment-closure trajectory");
    cmd_mom->add_option("--model", model_file)->required();
    cmd_mom->add_option("--t-end", t_end)->capture_default_str();
    cmd_mom->add_option("--grid-step", grid_step, "0 = t-end/100")->capture_default_str();
    cmd_mom->add_option("--out", out_dir);
    cmd_mom->callback([&] {
        auto model = load_model(model_file);
        spm::MomentSystem sys(model);
        auto grid = spm::make_uniform_grid(t_end, grid_step > 0.0 ? grid_step : t_end / 100.0);
        auto dir = ensure_dir(out_dir);
        spm::write_text_file(dir / "moments.csv",
                             fluid_trajectory_csv(sys, sys.initial_state(model.initial_real()), grid, model, true));
        std::cout << "wrote " << (dir / "moments.csv").string() << "\n";
    });

    // ----- distance -------------------------------------------------------
    std::string metric_str = "linear-noise";
    SteadyFlags steady_flags;
    bool latlon = false;
    auto* cmd_dist = app.add_subcommand("distance", "location distance matrix");
    cmd_dist->add_option("--model", model_file)->required();
    cmd_dist->add_option("--metric", metric_str, "mean-field | linear-noise | physical")->capture_default_str();
    cmd_dist->add_flag("--latlon", latlon, "treat coordinates as (lat,lon); haversine distance");
    steady_flags.attach(cmd_dist);
    cmd_dist->add_option("--out", out_dir);
    cmd_dist->callback([&] {
        auto model = load_model(model_file);
        auto metric = spm::metric_from_name(metric_str);
        auto dir = ensure_dir(out_dir);
        spm::DistanceMatrix d;
        if (metric == spm::DistanceMetric::Physical) {
            d = spm::physical_distance(model, latlon);
        } else {
            spm::SteadyState ss = metric == spm::DistanceMetric::LinearNoise
                                      ? spm::moment_closure_steady(model, steady_flags.options())
                                      : spm::mean_field_steady(model, steady_flags.options());
            spm::write_text_file(dir / "steady.csv", spm::steady_csv(ss, model));
            d = metric == spm::DistanceMetric::LinearNoise ? spm::linear_noise_distance(ss, model)
                                                           : spm::mean_field_distance(ss, model);
        }
        spm::write_text_file(dir / "distance.csv", spm::distance_csv(d, model));
        std::cout << "wrote " << (dir / "distance.csv").string() << "\n";
    });

    // ----- cluster ---------------------------------------------------------
    double sigma = 0.0;
    int k_opt = 0, k_min = 2, k_max = 0, top = 10;
    std::string pin_list;
    auto* cmd_cluster = app.add_subcommand("cluster", "spectral clustering of locations");
    cmd_cluster->add_option("--model", model_file)->required();
    cmd_cluster->add_option("--metric", metric_str)->capture_default_str();
    cmd_cluster->add_option("--sigma", sigma, "kernel width; 0 = median heuristic")->capture_default_str();
    cmd_cluster->add_option("--k", k_opt, "cluster count; 0 = eigengap")->capture_default_str();
    cmd_cluster->add_option("--k-min", k_min)->capture_default_str();
    cmd_cluster->add_option("--k-max", k_max, "0 = graph size - 1")->capture_default_str();
    cmd_cluster->add_option("--pin", pin_list, "comma-separated labels forced to singleton clusters");
    cmd_cluster->add_option("--seed", seed)->capture_default_str();
    cmd_cluster->add_option("--top", top, "eigenvalues to export")->capture_default_str();
    cmd_cluster->add_flag("--latlon", latlon);
    steady_flags.attach(cmd_cluster);
    cmd_cluster->add_option("--out", out_dir);
    cmd_cluster->callback([&] {
        spm::PipelineConfig pc; // reuse the pipeline stages up to clustering
        pc.model_file = model_file;
        pc.metric = spm::metric_from_name(metric_str);
        if (sigma > 0.0) pc.sigma = sigma;
        if (k_opt > 0) pc.k = k_opt;
        pc.k_min = k_min;
        pc.k_max = k_max;
        pc.pin_labels = split_csv_list(pin_list);
        pc.latlon = latlon;
        pc.steady = steady_flags.options();
        pc.seed = seed;

        auto model = load_model(model_file);
        auto dir = ensure_dir(out_dir);
        std::vector<int> pinned;
        for (const auto& label : pc.pin_labels) {
            int loc = model.find_location(label);
            if (loc < 0) throw spm::ConfigError("pinned location '" + label + "' not in the model");
            pinned.push_back(loc);
        }
        spm::DistanceMatrix d;
        if (pc.metric == spm::DistanceMetric::Physical) {
            d = spm::physical_distance(model, latlon);
        } else {
            spm::SteadyState ss = pc.metric == spm::DistanceMetric::LinearNoise
                                      ? spm::moment_closure_steady(model, pc.steady)
                                      : spm::mean_field_steady(model, pc.steady);
            spm::write_text_file(dir / "steady.csv", spm::steady_csv(ss, model));
            d = pc.metric == spm::DistanceMetric::LinearNoise ? spm::linear_noise_distance(ss, model)
                                                              : spm::mean_field_distance(ss, model);
        }
        spm::write_text_file(dir / "distance.csv", spm::distance_csv(d, model));
        auto sim = spm::build_similarity(d, pc.sigma, pinned);
        auto dec = spm::spectral_decompose(sim);
        spm::write_text_file(dir / "similarity.csv", spm::similarity_csv(sim, model));
        spm::write_text_file(dir / "eigenvalues.csv", spm::eigenvalues_csv(dec.eigenvalues, top));
        int k = pc.k ? *pc.k : spm::choose_k(dec.eigenvalues, pc.k_min,
                                             pc.k_max > 0 ? pc.k_max : sim.n - 1);
        auto cm = spm::njw_cluster(dec, k, pinned, seed, model.num_locations(), &d);
        auto rm = spm::rewrite_transitions(model, cm); // for canonical cluster labels
        spm::write_text_file(dir / "assignments.csv", spm::assignments_csv(cm, model, rm.cluster_labels));
        std::cout << "k = " << cm.k << " clusters (sigma = " << sim.sigma << ")\n";
    });

    // ----- reduce ----------------------------------------------------------
    std::string assignments_file;
    auto* cmd_reduce = app.add_subcommand("reduce", "build the reduced model for an assignment");
    cmd_reduce->add_option("--model", model_file)->required();
    cmd_reduce->add_option("--assignments", assignments_file, "assignments.csv from `cluster`")->required();
    cmd_reduce->add_option("--out", out_dir);
    cmd_reduce->callback([&] {
        auto model = load_model(model_file);
        std::vector<std::string> labels;
        auto cm = read_assignments(assignments_file, model, labels);
        auto rm = spm::rewrite_transitions(model, cm);
        auto dir = ensure_dir(out_dir);
        spm::write_text_file(dir / "reduced.spm",
                             spm::serialize_model(rm.model, spm::provenance_comments(rm, model)));
        std::cout << "reduced " << model.transitions.size() << " -> " << rm.model.transitions.size()
                  << " transitions over " << cm.k << " clusters\n";
    });

    // ----- compare -----------------------------------------------------------
    std::string original_file, reduced_file;
    auto* cmd_compare = app.add_subcommand("compare", "simulate original and reduced models; report error ratios");
    cmd_compare->add_option("--original", original_file)->required();
    cmd_compare->add_option("--reduced", reduced_file)->required();
    cmd_compare->add_option("--assignments", assignments_file)->required();
    cmd_compare->add_option("--runs", runs)->capture_default_str();
    cmd_compare->add_option("--t-end", t_end)->capture_default_str();
    cmd_compare->add_option("--grid-step", grid_step)->capture_default_str();
    cmd_compare->add_option("--seed", seed)->capture_default_str();
    cmd_compare->add_option("--threads", threads)->capture_default_str();
    cmd_compare->add_option("--out", out_dir);
    cmd_compare->callback([&] {
        auto model = load_model(original_file);
        auto reduced = load_model(reduced_file);
        std::vector<std::string> labels;
        auto cm = read_assignments(assignments_file, model, labels);

        spm::SimConfig cfg;
        cfg.t_end = t_end;
        cfg.grid = spm::make_uniform_grid(t_end, grid_step > 0.0 ? grid_step : t_end / 100.0);
        cfg.replications = runs;
        cfg.seed = seed;
        cfg.threads = threads;

        auto members = cm.members();
        std::vector<spm::Observable> obs_orig, obs_red;
        for (int c = 0; c < cm.k; ++c)
            for (int a = 0; a < model.num_agents(); ++a) {
                int red_loc = reduced.find_location(labels[static_cast<std::size_t>(c)]);
                if (red_loc < 0)
                    throw spm::ConfigError("reduced model lacks cluster location '" +
                                           labels[static_cast<std::size_t>(c)] + "'");
                spm::Observable o;
                o.name = model.agents[static_cast<std::size_t>(a)].label + "@" + labels[static_cast<std::size_t>(c)];
                for (int loc : members[static_cast<std::size_t>(c)])
                    o.weights.emplace_back(model.pop_index(a, loc), 1.0);
                obs_orig.push_back(o);
                obs_red.push_back({o.name, {{reduced.pop_index(a, red_loc), 1.0}}});
            }
        cfg.observables = obs_orig;
        auto orig_ens = spm::simulate_ensemble(model, cfg);
        cfg.observables = obs_red;
        auto red_ens = spm::simulate_ensemble(reduced, cfg);
        auto ratios = spm::error_ratios(orig_ens, red_ens);

        spm::ComparisonReport rep;
        rep.metric = spm::DistanceMetric::LinearNoise;
        rep.seed = seed;
        rep.k = cm.k;
        rep.transitions_original = static_cast<int>(model.transitions.size());
        rep.transitions_reduced = static_cast<int>(reduced.transitions.size());
        rep.wall_original_s = orig_ens.wall_clock_s;
        rep.wall_reduced_s = red_ens.wall_clock_s;
        rep.speedup = red_ens.wall_clock_s > 0 ? orig_ens.wall_clock_s / red_ens.wall_clock_s : 0.0;
        double sum = 0.0;
        for (std::size_t o = 0; o < ratios.size(); ++o) {
            rep.error_ratios.emplace_back(orig_ens.names[o], ratios[o]);
            sum += ratios[o];
        }
        rep.error_ratio_mean = ratios.empty() ? 0.0 : sum / static_cast<double>(ratios.size());

        auto dir = ensure_dir(out_dir);
        spm::write_text_file(dir / "trajectory_original.csv", spm::trajectory_csv(orig_ens));
        spm::write_text_file(dir / "trajectory_reduced.csv", spm::trajectory_csv(red_ens));
        spm::write_text_file(dir / "report.txt", spm::report_text(rep));
        std::cout << "mean error ratio: " << rep.error_ratio_mean << "\n";
    });

    // ----- pipeline -----------------------------------------------------------
    bool use_gen_sis = false, use_gen_bike = false;
    model_file.clear();
    auto* cmd_pipe = app.add_subcommand("pipeline", "generate/load, analyze, cluster, reduce, simulate, compare");
    cmd_pipe->add_option("--model", model_file, "load a .spm model");
    cmd_pipe->add_flag("--gen-sis", use_gen_sis, "generate a SIS model");
    cmd_pipe->add_flag("--gen-bike", use_gen_bike, "generate a bike model");
    cmd_pipe->add_option("--m", sis.communities, "SIS communities")->capture_default_str();
    cmd_pipe->add_option("--connectivity", sis.connectivity)->capture_default_str();
    cmd_pipe->add_option("--mu", sis.mu)->capture_default_str();
    cmd_pipe->add_option("--population", sis.population)->capture_default_str();
    cmd_pipe->add_option("--infected", sis.infected)->capture_default_str();
    BikeFlags pipe_bike;
    pipe_bike.attach(cmd_pipe);
    cmd_pipe->add_option("--metric", metric_str)->capture_default_str();
    cmd_pipe->add_option("--sigma", sigma, "0 = median heuristic")->capture_default_str();
    cmd_pipe->add_option("--k", k_opt, "0 = eigengap")->capture_default_str();
    cmd_pipe->add_option("--k-min", k_min)->capture_default_str();
    cmd_pipe->add_option("--k-max", k_max)->capture_default_str();
    cmd_pipe->add_option("--pin", pin_list);
    cmd_pipe->add_option("--runs", runs)->capture_default_str();
    cmd_pipe->add_option("--t-end", t_end)->capture_default_str();
    cmd_pipe->add_option("--grid-step", grid_step)->capture_default_str();
    cmd_pipe->add_option("--seed", seed)->capture_default_str();
    cmd_pipe->add_option("--threads", threads)->capture_default_str();
    cmd_pipe->add_option("--top", top)->capture_default_str();
    cmd_pipe->add_flag("--latlon", latlon);
    steady_flags.attach(cmd_pipe);
    cmd_pipe->add_option("--out", out_dir);
    cmd_pipe->callback([&] {
        spm::PipelineConfig pc;
        if (!model_file.empty()) pc.model_file = model_file;
        if (use_gen_sis) {
            sis.seed = seed;
            pc.sis = sis;
        }
        if (use_gen_bike) pc.bike = pipe_bike.build(seed, out_dir);
        pc.metric = spm::metric_from_name(metric_str);
        if (sigma > 0.0) pc.sigma = sigma;
        if (k_opt > 0) pc.k = k_opt;
        pc.k_min = k_min;
        pc.k_max = k_max;
        pc.pin_labels = split_csv_list(pin_list);
        pc.latlon = latlon;
        pc.steady = steady_flags.options();
        pc.t_end = t_end;
        pc.grid_step = grid_step;
        pc.runs = runs;
        pc.threads = threads;
        pc.seed = seed;
        pc.out_dir = out_dir;
        pc.top = top;
        auto res = spm::run_pipeline(pc);
        std::cout << spm::report_text(res.report);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const spm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const spm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
