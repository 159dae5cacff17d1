#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spm/errors.hpp"
#include "spm/model.hpp"
#include "spm/rng.hpp"
#include "spm/warn.hpp"

namespace spm {

namespace gen_detail {

inline Transition make_transition(std::string label, ExprPtr rate,
                                  std::vector<std::pair<int, std::int64_t>> update) {
    std::map<int, std::int64_t> merged;
    for (const auto& [idx, delta] : update) merged[idx] += delta;
    Transition t;
    t.label = std::move(label);
    t.rate = std::move(rate);
    for (const auto& [idx, delta] : merged)
        if (delta != 0) t.update.emplace_back(idx, delta);
    return t;
}

/// Random simple `degree`-regular graph on m vertices (pairing model with
/// rejection). Returns the sorted list of undirected edges (i < j).
inline std::vector<std::pair<int, int>> random_regular_graph(int m, int degree, std::mt19937_64& rng) {
    if (degree == 0) return {};
    if (degree >= m) throw ConfigError("connectivity must be smaller than the community count");
    if ((static_cast<long long>(m) * degree) % 2 != 0)
        throw ConfigError("community count times connectivity must be even");
    if (degree == m - 1) { // complete graph; the pairing model would thrash
        std::vector<std::pair<int, int>> edges;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) edges.emplace_back(i, j);
        return edges;
    }
    std::vector<int> stubs;
    stubs.reserve(static_cast<std::size_t>(m) * static_cast<std::size_t>(degree));
    for (int attempt = 0; attempt < 5000; ++attempt) {
        stubs.clear();
        for (int v = 0; v < m; ++v)
            for (int d = 0; d < degree; ++d) stubs.push_back(v);
        for (std::size_t i = stubs.size(); i > 1; --i)
            std::swap(stubs[i - 1], stubs[uniform_below(rng, i)]);
        std::set<std::pair<int, int>> edges;
        bool ok = true;
        for (std::size_t i = 0; i + 1 < stubs.size(); i += 2) {
            int a = stubs[i], b = stubs[i + 1];
            if (a == b) { ok = false; break; }
            auto e = std::minmax(a, b);
            if (!edges.insert({e.first, e.second}).second) { ok = false; break; }
        }
        if (ok) return {edges.begin(), edges.end()};
    }
    throw ConfigError("failed to sample a simple regular movement graph; relax connectivity");
}

} // namespace gen_detail

// ---------------------------------------------------------------------------
// SIS epidemic over communities
// ---------------------------------------------------------------------------

struct SisConfig {
    int communities = 30;        // m
    int connectivity = 3;        // movement partners per community
    double mu = 0.1;             // recovery rate
    double beta_min = 0.0;       // infection rate range
    double beta_max = 1.0;
    double rate_min = 0.0;       // movement rate range
    double rate_max = 1.0;
    std::int64_t population = 200; // per community
    std::int64_t infected = 10;    // initially infected per community
    std::uint64_t seed = 1;

    void validate() const {
        if (communities < 1) throw ConfigError("communities must be >= 1");
        if (connectivity < 0 || connectivity >= communities)
            throw ConfigError("connectivity must be in [0, communities)");
        if (mu <= 0.0) throw ConfigError("mu must be positive");
        if (beta_min < 0.0 || beta_max < beta_min) throw ConfigError("bad beta range");
        if (rate_min < 0.0 || rate_max < rate_min) throw ConfigError("bad movement rate range");
        if (population < 1 || infected < 0 || infected > population)
            throw ConfigError("need 0 <= infected <= population");
    }
};

/// Builds the community SIS model: per-community infection and recovery plus
/// S/I movement along a random connectivity-regular community graph, with
/// independent rates per direction. Transition count is
/// 2*m + 2*|directed edges| = 2*m + 2*m*connectivity.
inline SpatialModel gen_sis(const SisConfig& cfg) {
    cfg.validate();
    SpatialModel m;
    const int mc = cfg.communities;
    for (int i = 0; i < mc; ++i) m.locations.push_back({"c" + std::to_string(i + 1), std::nullopt});
    m.agents.push_back({"S"});
    m.agents.push_back({"I"});

    auto rng = derive_stream(cfg.seed, "gen-sis");
    m.params.emplace_back("mu", cfg.mu);
    const int p_mu = 0;
    std::vector<int> p_beta(static_cast<std::size_t>(mc));
    for (int i = 0; i < mc; ++i) {
        p_beta[static_cast<std::size_t>(i)] = static_cast<int>(m.params.size());
        m.params.emplace_back("beta_" + std::to_string(i + 1),
                              uniform_range(rng, cfg.beta_min, cfg.beta_max));
    }
    auto edges = gen_detail::random_regular_graph(mc, cfg.connectivity, rng);
    std::vector<std::pair<int, int>> directed;
    for (auto [a, b] : edges) {
        directed.emplace_back(a, b);
        directed.emplace_back(b, a);
    }
    std::sort(directed.begin(), directed.end());
    std::map<std::pair<int, int>, int> p_move;
    for (auto [a, b] : directed) {
        p_move[{a, b}] = static_cast<int>(m.params.size());
        m.params.emplace_back("r_" + std::to_string(a + 1) + "_" + std::to_string(b + 1),
                              uniform_range(rng, cfg.rate_min, cfg.rate_max));
    }

    m.initial.assign(static_cast<std::size_t>(m.num_populations()), 0);
    const int S = 0, I = 1;
    for (int i = 0; i < mc; ++i) {
        m.initial[static_cast<std::size_t>(m.pop_index(S, i))] = cfg.population - cfg.infected;
        m.initial[static_cast<std::size_t>(m.pop_index(I, i))] = cfg.infected;
    }

    auto pname = [&m](int p) { return m.params[static_cast<std::size_t>(p)].first; };
    for (int i = 0; i < mc; ++i) {
        std::string ci = std::to_string(i + 1);
        ExprPtr rate = ex::mul(ex::mul(ex::param(p_beta[static_cast<std::size_t>(i)], pname(p_beta[static_cast<std::size_t>(i)])),
                                       ex::population(m.pop_index(S, i), S, i)),
                               ex::population(m.pop_index(I, i), I, i));
        m.transitions.push_back(gen_detail::make_transition(
            "infect_" + ci, std::move(rate),
            {{m.pop_index(S, i), -1}, {m.pop_index(I, i), +1}}));
    }
    for (int i = 0; i < mc; ++i) {
        std::string ci = std::to_string(i + 1);
        ExprPtr rate = ex::mul(ex::param(p_mu, "mu"), ex::population(m.pop_index(I, i), I, i));
        m.transitions.push_back(gen_detail::make_transition(
            "recover_" + ci, std::move(rate),
            {{m.pop_index(I, i), -1}, {m.pop_index(S, i), +1}}));
    }
    for (auto [a, b] : directed) {
        std::string tag = std::to_string(a + 1) + "_" + std::to_string(b + 1);
        int p = p_move[{a, b}];
        m.transitions.push_back(gen_detail::make_transition(
            "moveS_" + tag,
            ex::mul(ex::param(p, pname(p)), ex::population(m.pop_index(S, a), S, a)),
            {{m.pop_index(S, a), -1}, {m.pop_index(S, b), +1}}));
        m.transitions.push_back(gen_detail::make_transition(
            "moveI_" + tag,
            ex::mul(ex::param(p, pname(p)), ex::population(m.pop_index(I, a), I, a)),
            {{m.pop_index(I, a), -1}, {m.pop_index(I, b), +1}}));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Bike sharing over zones
// ---------------------------------------------------------------------------

struct BikeConfig {
    std::vector<std::string> labels;
    std::vector<std::optional<std::array<double, 2>>> coords; // per station, optional
    std::vector<double> lambda;                    // pickup rate per station (1/hour)
    std::vector<std::vector<double>> dest_prob;    // p[i][j], rows sum to 1 where lambda_i > 0
    std::vector<std::vector<double>> trip_rate;    // mu[i][j] (1/hour), > 0 wherever p > 0
    std::vector<std::int64_t> slots;               // capacity per station
    std::vector<std::int64_t> bikes;               // initial bikes per station

    std::size_t size() const { return labels.size(); }

    void validate() const {
        std::size_t n = labels.size();
        if (n == 0) throw ConfigError("bike config has no stations");
        if (coords.size() != n || lambda.size() != n || dest_prob.size() != n ||
            trip_rate.size() != n || slots.size() != n || bikes.size() != n)
            throw ConfigError("bike config field sizes disagree");
        for (std::size_t i = 0; i < n; ++i) {
            if (lambda[i] < 0.0) throw ConfigError("lambda must be nonnegative");
            if (dest_prob[i].size() != n || trip_rate[i].size() != n)
                throw ConfigError("bike config matrices must be square");
            double rowsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                double p = dest_prob[i][j];
                if (p < 0.0) throw ConfigError("destination probabilities must be nonnegative");
                if (p > 0.0 && trip_rate[i][j] <= 0.0)
                    throw ConfigError("trip rate must be positive where trips occur");
                rowsum += p;
            }
            if (lambda[i] > 0.0 && std::abs(rowsum - 1.0) > 1e-9)
                throw ConfigError("destination probabilities of station '" + labels[i] +
                                  "' sum to " + std::to_string(rowsum));
            if (slots[i] < 0 || bikes[i] < 0 || bikes[i] > slots[i])
                throw ConfigError("need 0 <= bikes <= slots per station");
        }
    }
};

/// Builds the bike-sharing model. Agent types are Bike, Slot and one
/// in-transit type BikeTo_<zone> per destination zone, so n = 2 + stations.
/// Pickup at i toward j fires at the constant demand rate lambda_i * p_ij
/// (the simulator guard idles it when the station is empty); the return fires
/// at #BikeTo_j(l_i) * mu_ij. Pairs with p_ij = 0 emit no transitions.
inline SpatialModel gen_bike(const BikeConfig& cfg) {
    cfg.validate();
    SpatialModel m;
    const int ns = static_cast<int>(cfg.size());
    for (int i = 0; i < ns; ++i)
        m.locations.push_back({cfg.labels[static_cast<std::size_t>(i)],
                               cfg.coords[static_cast<std::size_t>(i)]});
    m.agents.push_back({"Bike"});
    m.agents.push_back({"Slot"});
    for (int j = 0; j < ns; ++j)
        m.agents.push_back({"BikeTo_" + cfg.labels[static_cast<std::size_t>(j)]});
    const int Bike = 0, Slot = 1;
    auto bike_to = [](int j) { return 2 + j; };

    m.initial.assign(static_cast<std::size_t>(m.num_populations()), 0);
    for (int i = 0; i < ns; ++i) {
        m.initial[static_cast<std::size_t>(m.pop_index(Bike, i))] = cfg.bikes[static_cast<std::size_t>(i)];
        m.initial[static_cast<std::size_t>(m.pop_index(Slot, i))] =
            cfg.slots[static_cast<std::size_t>(i)] - cfg.bikes[static_cast<std::size_t>(i)];
    }

    for (int i = 0; i < ns; ++i)
        for (int j = 0; j < ns; ++j) {
            double p = cfg.dest_prob[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (p <= 0.0) continue;
            double demand = cfg.lambda[static_cast<std::size_t>(i)] * p;
            m.transitions.push_back(gen_detail::make_transition(
                "pickup_" + cfg.labels[static_cast<std::size_t>(i)] + "_" + cfg.labels[static_cast<std::size_t>(j)],
                ex::constant(demand),
                {{m.pop_index(Bike, i), -1}, {m.pop_index(Slot, i), +1}, {m.pop_index(bike_to(j), i), +1}}));
        }
    for (int i = 0; i < ns; ++i)
        for (int j = 0; j < ns; ++j) {
            double p = cfg.dest_prob[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (p <= 0.0) continue;
            double mu = cfg.trip_rate[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            m.transitions.push_back(gen_detail::make_transition(
                "return_" + cfg.labels[static_cast<std::size_t>(i)] + "_" + cfg.labels[static_cast<std::size_t>(j)],
                ex::mul(ex::constant(mu), ex::population(m.pop_index(bike_to(j), i), bike_to(j), i)),
                {{m.pop_index(bike_to(j), i), -1}, {m.pop_index(Slot, j), -1}, {m.pop_index(Bike, j), +1}}));
        }
    return m;
}

/// Uniform full-matrix demand over `stations` zones (every ordered pair,
/// self-trips included): 2 * stations^2 transitions.
inline BikeConfig uniform_bike_config(int stations, double lambda_per_station = 2.0,
                                      double trip_minutes = 15.0, std::int64_t slots = 20,
                                      std::int64_t bikes = 10, std::uint64_t seed = 1) {
    if (stations < 1) throw ConfigError("stations must be >= 1");
    BikeConfig cfg;
    auto rng = derive_stream(seed, "gen-bike-coords");
    std::size_t n = static_cast<std::size_t>(stations);
    for (int i = 0; i < stations; ++i) {
        cfg.labels.push_back("s" + std::to_string(i + 1));
        cfg.coords.push_back(std::array<double, 2>{uniform_range(rng, 0.0, 10.0),
                                                   uniform_range(rng, 0.0, 10.0)});
    }
    cfg.lambda.assign(n, lambda_per_station);
    cfg.dest_prob.assign(n, std::vector<double>(n, 1.0 / static_cast<double>(stations)));
    cfg.trip_rate.assign(n, std::vector<double>(n, 60.0 / trip_minutes));
    cfg.slots.assign(n, slots);
    cfg.bikes.assign(n, bikes);
    return cfg;
}

// ---------------------------------------------------------------------------
// Journey ingestion
// ---------------------------------------------------------------------------

struct JourneyRecord {
    std::string start;
    std::string end;
    double duration_sec = 0.0;
};

/// Estimates bike demand from journey records over an observation horizon:
///   lambda_i = departures_i / horizon            (1/hour)
///   p_ij     = trips_ij / departures_i
///   mu_ij    = 3600 / mean duration_sec of i->j  (1/hour)
/// Stations with no departures keep lambda = 0 (EmptyStation warning).
/// `labels` fixes the station set and order; when empty it is derived from
/// the records (sorted).
inline BikeConfig estimate_bike_rates(const std::vector<JourneyRecord>& records, double horizon_hours,
                                      std::vector<std::string> labels = {},
                                      std::int64_t slots = 20, std::int64_t bikes = 10) {
    if (records.empty()) throw ConfigError("no journey records");
    if (horizon_hours <= 0.0) throw ConfigError("horizon must be positive");
    if (labels.empty()) {
        std::set<std::string> seen;
        for (const auto& r : records) {
            seen.insert(r.start);
            seen.insert(r.end);
        }
        labels.assign(seen.begin(), seen.end());
    }
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = static_cast<int>(i);
    std::size_t n = labels.size();

    std::vector<std::vector<std::int64_t>> trips(n, std::vector<std::int64_t>(n, 0));
    std::vector<std::vector<double>> dur_sum(n, std::vector<double>(n, 0.0));
    for (const auto& r : records) {
        auto is = index.find(r.start);
        auto ie = index.find(r.end);
        if (is == index.end() || ie == index.end())
            throw ConfigError("journey references unknown station '" +
                              (is == index.end() ? r.start : r.end) + "'");
        if (r.duration_sec <= 0.0) throw ConfigError("journey durations must be positive");
        trips[static_cast<std::size_t>(is->second)][static_cast<std::size_t>(ie->second)] += 1;
        dur_sum[static_cast<std::size_t>(is->second)][static_cast<std::size_t>(ie->second)] += r.duration_sec;
    }

    BikeConfig cfg;
    cfg.labels = labels;
    cfg.coords.assign(n, std::nullopt);
    cfg.lambda.assign(n, 0.0);
    cfg.dest_prob.assign(n, std::vector<double>(n, 0.0));
    cfg.trip_rate.assign(n, std::vector<double>(n, 0.0));
    cfg.slots.assign(n, slots);
    cfg.bikes.assign(n, bikes);
    for (std::size_t i = 0; i < n; ++i) {
        std::int64_t departures = std::accumulate(trips[i].begin(), trips[i].end(), std::int64_t{0});
        if (departures == 0) {
            warn_once("emptystation:" + labels[i], "station '" + labels[i] + "' has no departures; lambda = 0");
            continue;
        }
        cfg.lambda[i] = static_cast<double>(departures) / horizon_hours;
        for (std::size_t j = 0; j < n; ++j) {
            if (trips[i][j] == 0) continue;
            cfg.dest_prob[i][j] = static_cast<double>(trips[i][j]) / static_cast<double>(departures);
            double mean_sec = dur_sum[i][j] / static_cast<double>(trips[i][j]);
            cfg.trip_rate[i][j] = 3600.0 / mean_sec;
        }
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Synthetic journey data (stands in for live feeds)
// ---------------------------------------------------------------------------

struct SyntheticJourneyConfig {
    int stations = 30;
    int groups = 5;               // latent demand groups; station i belongs to group i % groups
    double horizon_hours = 50.0;
    double base_rate = 1.0;       // group g pickup intensity = base_rate * rate_factor^g
    double rate_factor = 2.0;
    double trip_minutes_base = 10.0;
    double trip_minutes_step = 6.0; // group g trips take base + g*step minutes on average
    double cross_group_prob = 0.2;
    // Balanced mode (default) emits closed cycles: every station's arrivals
    // equal its departures and fleets hover around their initial levels.
    // Uniform-destination mode instead spreads each station's departures over
    // the whole map, so high-demand stations drain and low-demand stations
    // fill, the way rush-hour data looks.
    bool uniform_destinations = false;
    std::uint64_t seed = 1;
};

/// Generates balanced synthetic journeys. One full sweep over every ordered
/// station pair (self trips included) activates the whole destination
/// matrix and is balanced by construction; the remaining volume is emitted
/// along closed station cycles, so every station's arrival count equals its
/// departure count throughout. Stations in the same latent group share
/// pickup intensity, trip duration and destination habits; group membership
/// is independent of the station coordinates drawn by callers.
inline std::vector<JourneyRecord> generate_journeys(const SyntheticJourneyConfig& cfg) {
    if (cfg.stations < 2 || cfg.groups < 1 || cfg.groups > cfg.stations)
        throw ConfigError("need stations >= 2 and 1 <= groups <= stations");
    if (cfg.horizon_hours <= 0.0 || cfg.base_rate <= 0.0)
        throw ConfigError("horizon and base rate must be positive");
    auto rng = derive_stream(cfg.seed, "journeys");
    const int ns = cfg.stations;
    auto group_of = [&cfg](int i) { return i % cfg.groups; };
    auto label_of = [](int i) { return "s" + std::to_string(i + 1); };

    std::vector<double> quota(static_cast<std::size_t>(ns));
    for (int i = 0; i < ns; ++i)
        quota[static_cast<std::size_t>(i)] =
            cfg.base_rate * std::pow(cfg.rate_factor, group_of(i)) * cfg.horizon_hours;

    auto trip_minutes = [&](int origin) {
        double base = cfg.trip_minutes_base + cfg.trip_minutes_step * group_of(origin);
        return base * uniform_range(rng, 0.8, 1.2);
    };
    auto pick_partner = [&](int origin) {
        bool cross = uniform01(rng) < cfg.cross_group_prob;
        for (int tries = 0; tries < 64; ++tries) {
            int cand = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(ns)));
            if (cand == origin) continue;
            bool same = group_of(cand) == group_of(origin);
            if (same != cross) return cand;
        }
        return (origin + 1) % ns;
    };

    std::vector<JourneyRecord> out;
    // Full sweep over every ordered pair (self trips included): activates the
    // whole destination matrix and contributes equal arrivals and departures
    // everywhere.
    for (int i = 0; i < ns; ++i)
        for (int j = 0; j < ns; ++j) {
            out.push_back({label_of(i), label_of(j), trip_minutes(i) * 60.0});
            quota[static_cast<std::size_t>(i)] -= 1.0;
        }
    if (cfg.uniform_destinations) {
        for (int start = 0; start < ns; ++start)
            while (quota[static_cast<std::size_t>(start)] > 0.0) {
                int dest = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(ns)));
                out.push_back({label_of(start), label_of(dest), trip_minutes(start) * 60.0});
                quota[static_cast<std::size_t>(start)] -= 1.0;
            }
        return out;
    }
    for (int start = 0; start < ns; ++start) {
        while (quota[static_cast<std::size_t>(start)] > 0.0) {
            // Closed cycle of 1..3 hops starting and ending at `start`.
            int hops = 1 + static_cast<int>(uniform_below(rng, 3));
            std::vector<int> path{start};
            for (int h = 1; h < hops; ++h) path.push_back(pick_partner(path.back()));
            path.push_back(start);
            for (std::size_t h = 0; h + 1 < path.size(); ++h) {
                int a = path[h], b = path[h + 1];
                out.push_back({label_of(a), label_of(b), trip_minutes(a) * 60.0});
                quota[static_cast<std::size_t>(a)] -= 1.0;
            }
        }
    }
    return out;
}

/// Random planar coordinates, intentionally unrelated to demand structure.
inline std::vector<std::optional<std::array<double, 2>>> random_coords(int stations, std::uint64_t seed) {
    auto rng = derive_stream(seed, "coords");
    std::vector<std::optional<std::array<double, 2>>> out;
    for (int i = 0; i < stations; ++i)
        out.push_back(std::array<double, 2>{uniform_range(rng, 0.0, 10.0), uniform_range(rng, 0.0, 10.0)});
    return out;
}

} // namespace spm
