#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spm/errors.hpp"
#include "spm/generators.hpp"
#include "spm/simulate.hpp"
#include "spm/spm_format.hpp"

namespace spm {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Trajectory CSV: time,<obs>_mean,<obs>_var,...
inline std::string trajectory_csv(const TrajectoryEnsemble& ens) {
    std::string out = "time";
    for (const auto& name : ens.names) out += "," + name + "_mean," + name + "_var";
    out += "\n";
    for (std::size_t t = 0; t < ens.times.size(); ++t) {
        out += format_real(ens.times[t]);
        for (std::size_t o = 0; o < ens.names.size(); ++o)
            out += "," + format_real(ens.at_mean(t, o)) + "," + format_real(ens.at_var(t, o));
        out += "\n";
    }
    return out;
}

/// Plain-text metadata sidecar for a trajectory ensemble.
inline std::string trajectory_metadata(const TrajectoryEnsemble& ens, std::uint64_t seed) {
    std::string out;
    out += "seed: " + std::to_string(seed) + "\n";
    out += "replications: " + std::to_string(ens.replications) + "\n";
    out += "wall_clock_s: " + format_real(ens.wall_clock_s) + "\n";
    out += "rng: mt19937_64, stream seed = splitmix64-chain(master, fnv1a(stage), replication)\n";
    return out;
}

/// Journey CSV: header start,end,duration_sec.
inline std::string journeys_csv(const std::vector<JourneyRecord>& records) {
    std::string out = "start,end,duration_sec\n";
    for (const auto& r : records)
        out += r.start + "," + r.end + "," + format_real(r.duration_sec) + "\n";
    return out;
}

inline std::vector<JourneyRecord> parse_journeys_csv(const std::string& text) {
    std::vector<JourneyRecord> out;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            if (line != "start,end,duration_sec")
                throw ParseError("journey CSV must start with 'start,end,duration_sec'", lineno, 1);
            first = false;
            continue;
        }
        auto c1 = line.find(',');
        auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ParseError("journey row needs 3 comma-separated fields", lineno, 1);
        JourneyRecord r;
        r.start = line.substr(0, c1);
        r.end = line.substr(c1 + 1, c2 - c1 - 1);
        try {
            r.duration_sec = std::stod(line.substr(c2 + 1));
        } catch (const std::exception&) {
            throw ParseError("bad duration", lineno, static_cast<int>(c2 + 2));
        }
        if (r.duration_sec <= 0.0) throw ParseError("duration must be positive", lineno, 1);
        out.push_back(std::move(r));
    }
    if (out.empty()) throw ParseError("journey CSV has no rows", lineno, 1);
    return out;
}

/// Station coordinates CSV: header label,x,y.
inline std::string coords_csv(const std::vector<std::string>& labels,
                              const std::vector<std::optional<std::array<double, 2>>>& coords) {
    std::string out = "label,x,y\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out += labels[i];
        if (coords[i]) out += "," + format_real((*coords[i])[0]) + "," + format_real((*coords[i])[1]);
        out += "\n";
    }
    return out;
}

inline std::vector<std::pair<std::string, std::array<double, 2>>> parse_coords_csv(const std::string& text) {
    std::vector<std::pair<std::string, std::array<double, 2>>> out;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            if (line != "label,x,y") throw ParseError("coords CSV must start with 'label,x,y'", lineno, 1);
            first = false;
            continue;
        }
        auto c1 = line.find(',');
        auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ParseError("coords row needs 3 comma-separated fields", lineno, 1);
        try {
            out.push_back({line.substr(0, c1),
                           {std::stod(line.substr(c1 + 1, c2 - c1 - 1)), std::stod(line.substr(c2 + 1))}});
        } catch (const std::exception&) {
            throw ParseError("bad coordinate", lineno, 1);
        }
    }
    return out;
}

} // namespace spm
