#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "spm/errors.hpp"
#include "spm/meanfield.hpp"
#include "spm/model.hpp"
#include "spm/warn.hpp"

namespace spm {

enum class DistanceMetric { MeanField, LinearNoise, Physical };

inline const char* metric_name(DistanceMetric m) {
    switch (m) {
        case DistanceMetric::MeanField: return "mean-field";
        case DistanceMetric::LinearNoise: return "linear-noise";
        case DistanceMetric::Physical: return "physical";
    }
    return "?";
}

inline DistanceMetric metric_from_name(const std::string& s) {
    if (s == "mean-field") return DistanceMetric::MeanField;
    if (s == "linear-noise") return DistanceMetric::LinearNoise;
    if (s == "physical") return DistanceMetric::Physical;
    throw ConfigError("unknown metric '" + s + "' (use mean-field | linear-noise | physical)");
}

/// Symmetric nonnegative location-by-location distance matrix.
struct DistanceMatrix {
    int n = 0;
    DistanceMetric metric = DistanceMetric::MeanField;
    std::vector<double> d; // row-major n*n

    DistanceMatrix() = default;
    DistanceMatrix(int n_, DistanceMetric m_) : n(n_), metric(m_), d(static_cast<std::size_t>(n_) * n_, 0.0) {}
    double& at(int i, int j) { return d[static_cast<std::size_t>(i) * n + j]; }
    double at(int i, int j) const { return d[static_cast<std::size_t>(i) * n + j]; }
};

/// Bhattacharyya distance between two Gaussians (closed form).
inline double bhattacharyya_gaussian(double mean1, double var1, double mean2, double var2) {
    double ratio = var1 / var2 + var2 / var1 + 2.0;
    double dmean = mean1 - mean2;
    return 0.25 * std::log(0.25 * ratio) + 0.25 * (dmean * dmean) / (var1 + var2);
}

constexpr double kVarianceFloor = 1e-12;

namespace dist_detail {

inline void require_usable(const SteadyState& ss) {
    if (!ss.converged)
        throw NotConverged("steady-state analysis did not converge; rerun with a larger t-max "
                           "or use a fixed evaluation time");
}

} // namespace dist_detail

/// Mean-field distance: Euclidean distance between per-location steady-state
/// mean vectors over the agent-type coordinates.
inline DistanceMatrix mean_field_distance(const SteadyState& ss, const SpatialModel& model) {
    dist_detail::require_usable(ss);
    const int l = model.num_locations(), n = model.num_agents();
    DistanceMatrix out(l, DistanceMetric::MeanField);
    for (int i = 0; i < l; ++i)
        for (int j = i + 1; j < l; ++j) {
            double sq = 0.0;
            for (int a = 0; a < n; ++a) {
                double diff = ss.mean[static_cast<std::size_t>(model.pop_index(a, i))] -
                              ss.mean[static_cast<std::size_t>(model.pop_index(a, j))];
                sq += diff * diff;
            }
            out.at(i, j) = out.at(j, i) = std::sqrt(sq);
        }
    return out;
}

/// Linear-noise distance: average over agent types of the Gaussian
/// Bhattacharyya distance between per-population steady-state marginals.
/// Variances below the floor are lifted to it (with a warning).
inline DistanceMatrix linear_noise_distance(const SteadyState& ss, const SpatialModel& model) {
    dist_detail::require_usable(ss);
    if (ss.variance.empty())
        throw ConfigError("linear-noise distance needs variances from moment closure");
    const int l = model.num_locations(), n = model.num_agents();
    auto floored = [&model, &ss](int idx) {
        double v = ss.variance[static_cast<std::size_t>(idx)];
        if (v < kVarianceFloor) {
            warn_once("varfloor:" + model.population_label(idx),
                      "variance of " + model.population_label(idx) + " floored to 1e-12 for d_L");
            return kVarianceFloor;
        }
        return v;
    };
    DistanceMatrix out(l, DistanceMetric::LinearNoise);
    for (int i = 0; i < l; ++i)
        for (int j = i + 1; j < l; ++j) {
            double sum = 0.0;
            for (int a = 0; a < n; ++a) {
                int pi = model.pop_index(a, i), pj = model.pop_index(a, j);
                sum += bhattacharyya_gaussian(ss.mean[static_cast<std::size_t>(pi)], floored(pi),
                                              ss.mean[static_cast<std::size_t>(pj)], floored(pj));
            }
            out.at(i, j) = out.at(j, i) = sum / static_cast<double>(n);
        }
    return out;
}

/// Great-circle distance in kilometers from (lat, lon) pairs in degrees.
inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
    constexpr double kRadiusKm = 6371.0;
    constexpr double kDeg = 3.14159265358979323846 / 180.0;
    double dlat = (lat2 - lat1) * kDeg, dlon = (lon2 - lon1) * kDeg;
    double s = std::sin(0.5 * dlat), t = std::sin(0.5 * dlon);
    double h = s * s + std::cos(lat1 * kDeg) * std::cos(lat2 * kDeg) * t * t;
    return 2.0 * kRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

/// Physical-position baseline: pairwise planar Euclidean (or haversine)
/// distance between location coordinates.
inline DistanceMatrix physical_distance(const SpatialModel& model, bool latlon = false) {
    const int l = model.num_locations();
    for (const auto& loc : model.locations)
        if (!loc.coord) throw MissingCoordinates("location '" + loc.label + "' has no coordinates");
    DistanceMatrix out(l, DistanceMetric::Physical);
    for (int i = 0; i < l; ++i)
        for (int j = i + 1; j < l; ++j) {
            const auto& a = *model.locations[static_cast<std::size_t>(i)].coord;
            const auto& b = *model.locations[static_cast<std::size_t>(j)].coord;
            double dist = latlon ? haversine_km(a[0], a[1], b[0], b[1])
                                 : std::hypot(a[0] - b[0], a[1] - b[1]);
            out.at(i, j) = out.at(j, i) = dist;
        }
    return out;
}

} // namespace spm
