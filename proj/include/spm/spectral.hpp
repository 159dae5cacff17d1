#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spm/distance.hpp"
#include "spm/errors.hpp"
#include "spm/linalg.hpp"
#include "spm/rng.hpp"
#include "spm/warn.hpp"

namespace spm {

/// Gaussian-kernel similarity over a (sub)set of locations. `index_map[r]`
/// is the original location index of row r (pinned locations are removed
/// before similarity construction).
struct SimilarityMatrix {
    int n = 0;
    double sigma = 0.0;
    std::vector<double> a; // row-major, zero diagonal
    std::vector<int> index_map;

    double at(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }
};

/// Eigensystem of the normalized Laplacian L = I - D^{-1/2} A D^{-1/2}.
struct SpectralDecomposition {
    std::vector<double> eigenvalues; // ascending
    Matrix eigenvectors;             // column k matches eigenvalues[k]
    std::vector<int> index_map;      // row -> original location index
};

/// Assignment of every original location to a cluster in [0, k).
/// Pinned locations are singleton clusters.
struct ClusterMap {
    std::vector<int> assignment;
    int k = 0;
    std::vector<int> pinned; // location indices

    std::vector<std::vector<int>> members() const {
        std::vector<std::vector<int>> out(static_cast<std::size_t>(k));
        for (std::size_t loc = 0; loc < assignment.size(); ++loc)
            out[static_cast<std::size_t>(assignment[loc])].push_back(static_cast<int>(loc));
        return out;
    }

    std::vector<int> cluster_sizes() const {
        std::vector<int> out(static_cast<std::size_t>(k), 0);
        for (int c : assignment) ++out[static_cast<std::size_t>(c)];
        return out;
    }

    void validate() const {
        for (int s : cluster_sizes())
            if (s == 0) throw EmptyCluster("cluster map has an empty cluster");
        for (int loc : pinned) {
            auto sizes = cluster_sizes();
            if (sizes[static_cast<std::size_t>(assignment[static_cast<std::size_t>(loc)])] != 1)
                throw Error("pinned location is not a singleton cluster");
        }
    }
};

/// Identity partition: every location is its own cluster.
inline ClusterMap identity_cluster_map(int locations) {
    ClusterMap cm;
    cm.k = locations;
    cm.assignment.resize(static_cast<std::size_t>(locations));
    for (int i = 0; i < locations; ++i) cm.assignment[static_cast<std::size_t>(i)] = i;
    return cm;
}

/// Gaussian-kernel similarity A_ij = exp(-d_ij^2 / (2 sigma^2)), A_ii = 0.
/// With no explicit sigma the median of the positive off-diagonal distances
/// is used. Rows/columns listed in `exclude` are dropped (pinning).
inline SimilarityMatrix build_similarity(const DistanceMatrix& dist,
                                         std::optional<double> sigma = std::nullopt,
                                         const std::vector<int>& exclude = {}) {
    std::set<int> skip(exclude.begin(), exclude.end());
    SimilarityMatrix out;
    for (int i = 0; i < dist.n; ++i)
        if (!skip.count(i)) out.index_map.push_back(i);
    out.n = static_cast<int>(out.index_map.size());
    if (out.n < 2) throw ConfigError("similarity graph needs at least 2 locations after pinning");

    double width;
    if (sigma) {
        if (*sigma <= 0.0) throw ConfigError("sigma must be positive");
        width = *sigma;
    } else {
        std::vector<double> offdiag;
        for (int i = 0; i < out.n; ++i)
            for (int j = i + 1; j < out.n; ++j) {
                double d = dist.at(out.index_map[static_cast<std::size_t>(i)],
                                   out.index_map[static_cast<std::size_t>(j)]);
                if (d > 0.0) offdiag.push_back(d);
            }
        if (offdiag.empty())
            throw AllZeroDistances("all pairwise distances are zero; pass an explicit sigma");
        width = median(std::move(offdiag));
    }
    out.sigma = width;
    out.a.assign(static_cast<std::size_t>(out.n) * out.n, 0.0);
    for (int i = 0; i < out.n; ++i)
        for (int j = i + 1; j < out.n; ++j) {
            double d = dist.at(out.index_map[static_cast<std::size_t>(i)],
                               out.index_map[static_cast<std::size_t>(j)]);
            double w = std::exp(-d * d / (2.0 * width * width));
            out.a[static_cast<std::size_t>(i) * out.n + j] = w;
            out.a[static_cast<std::size_t>(j) * out.n + i] = w;
        }
    return out;
}

/// Normalized-Laplacian eigendecomposition (cyclic Jacobi). Rejects rows of
/// near-zero degree (IsolatedVertex) since D^{-1/2} would blow up.
inline SpectralDecomposition spectral_decompose(const SimilarityMatrix& sim) {
    const int n = sim.n;
    std::vector<double> degree(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) degree[static_cast<std::size_t>(i)] += sim.at(i, j);
        if (degree[static_cast<std::size_t>(i)] < 1e-12)
            throw IsolatedVertex(sim.index_map.empty() ? i : sim.index_map[static_cast<std::size_t>(i)]);
    }
    Matrix lap(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double di = 1.0 / std::sqrt(degree[static_cast<std::size_t>(i)]);
        for (int j = 0; j < n; ++j) {
            double dj = 1.0 / std::sqrt(degree[static_cast<std::size_t>(j)]);
            lap.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
                (i == j ? 1.0 : 0.0) - di * sim.at(i, j) * dj;
        }
    }
    SymEigen eig = jacobi_eigen(std::move(lap));
    SpectralDecomposition out;
    out.eigenvalues = std::move(eig.values);
    out.eigenvectors = std::move(eig.vectors);
    out.index_map = sim.index_map;
    return out;
}

/// Eigengap heuristic: k in [k_min, k_max] maximizing lambda_{k+1} - lambda_k
/// (eigenvalues ascending, 1-based); ties break toward smaller k.
inline int choose_k(const std::vector<double>& eigenvalues, int k_min, int k_max) {
    const int l = static_cast<int>(eigenvalues.size());
    if (k_min < 2) throw ConfigError("k-min must be >= 2");
    k_max = std::min(k_max, l - 1);
    if (k_max < k_min) throw ConfigError("empty k range for the eigengap search");
    int best_k = k_min;
    double best_gap = -1.0;
    for (int k = k_min; k <= k_max; ++k) {
        double gap = eigenvalues[static_cast<std::size_t>(k)] - eigenvalues[static_cast<std::size_t>(k - 1)];
        if (gap > best_gap) {
            best_gap = gap;
            best_k = k;
        }
    }
    return best_k;
}

struct KMeansResult {
    std::vector<int> assignment;
    double inertia = 0.0;
};

namespace spectral_detail {

inline double sq_dist_row(const Matrix& pts, std::size_t row, const std::vector<double>& center) {
    double s = 0.0;
    for (std::size_t c = 0; c < pts.cols; ++c) {
        double d = pts.at(row, c) - center[c];
        s += d * d;
    }
    return s;
}

/// One Lloyd run from a k-means++ seeding. Returns nullopt if a cluster
/// empties (the caller restarts with fresh seeding).
inline std::optional<KMeansResult> kmeans_once(const Matrix& pts, int k, std::mt19937_64& rng,
                                               int max_iter) {
    const std::size_t n = pts.rows, dim = pts.cols;
    std::vector<std::vector<double>> centers;
    centers.reserve(static_cast<std::size_t>(k));
    std::size_t first = uniform_below(rng, n);
    centers.push_back({pts.a.begin() + static_cast<std::ptrdiff_t>(first * dim),
                       pts.a.begin() + static_cast<std::ptrdiff_t>((first + 1) * dim)});

    std::vector<double> d2(n);
    while (centers.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : centers) best = std::min(best, sq_dist_row(pts, i, c));
            d2[i] = best;
            total += best;
        }
        std::size_t chosen;
        if (total <= 0.0) {
            chosen = uniform_below(rng, n); // all points coincide with centers
        } else {
            double u = uniform01(rng) * total;
            double cum = 0.0;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (u < cum) {
                    chosen = i;
                    break;
                }
            }
        }
        centers.push_back({pts.a.begin() + static_cast<std::ptrdiff_t>(chosen * dim),
                           pts.a.begin() + static_cast<std::ptrdiff_t>((chosen + 1) * dim)});
    }

    std::vector<int> assign(n, -1);
    double prev_inertia = std::numeric_limits<double>::max();
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best_c = 0;
            double best = std::numeric_limits<double>::max();
            for (int c = 0; c < k; ++c) {
                double d = sq_dist_row(pts, i, centers[static_cast<std::size_t>(c)]);
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            if (assign[i] != best_c) {
                assign[i] = best_c;
                changed = true;
            }
            inertia += best;
        }
        if (inertia > prev_inertia * (1.0 + 1e-12) + 1e-15)
            throw Error("k-means inertia increased across an iteration");
        prev_inertia = inertia;
        if (!changed) return KMeansResult{assign, inertia};

        std::vector<std::vector<double>> sums(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[static_cast<std::size_t>(assign[i])];
            for (std::size_t c = 0; c < dim; ++c)
                sums[static_cast<std::size_t>(assign[i])][c] += pts.at(i, c);
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] == 0) return std::nullopt;
            for (std::size_t j = 0; j < dim; ++j)
                centers[static_cast<std::size_t>(c)][j] =
                    sums[static_cast<std::size_t>(c)][j] / counts[static_cast<std::size_t>(c)];
        }
    }
    return KMeansResult{assign, prev_inertia};
}

} // namespace spectral_detail

/// k-means with k-means++ seeding and restarts; the best run (lowest inertia,
/// ties by restart index) wins. Throws EmptyCluster if every restart
/// collapses.
inline KMeansResult kmeans(const Matrix& points, int k, std::mt19937_64& rng, int restarts = 20,
                           int max_iter = 300) {
    if (k < 1 || static_cast<std::size_t>(k) > points.rows)
        throw ConfigError("k must be in [1, number of points]");
    std::optional<KMeansResult> best;
    for (int r = 0; r < restarts; ++r) {
        auto res = spectral_detail::kmeans_once(points, k, rng, max_iter);
        if (!res) continue;
        if (!best || res->inertia < best->inertia) best = std::move(res);
    }
    if (!best) throw EmptyCluster("k-means produced an empty cluster in every restart");
    return *best;
}

/// NJW clustering step: embed each graph vertex into the first k eigenvector
/// coordinates, renormalize rows to unit length, k-means the rows, map the
/// labels back to original location indices and append pinned locations as
/// singleton clusters. Non-pinned clusters are renumbered by their smallest
/// member so the output is stable under k-means label permutation.
/// `fallback_distance`, when given, reassigns zero-norm embedding rows to the
/// cluster of their nearest neighbor in distance space.
inline ClusterMap njw_cluster(const SpectralDecomposition& dec, int k, const std::vector<int>& pinned,
                              std::uint64_t seed, int total_locations,
                              const DistanceMatrix* fallback_distance = nullptr) {
    const int n = static_cast<int>(dec.index_map.size());
    if (k < 1 || k > n) throw ConfigError("k must be in [1, graph size]");

    Matrix embed(static_cast<std::size_t>(n), static_cast<std::size_t>(k));
    std::vector<int> zero_rows;
    for (int i = 0; i < n; ++i) {
        double norm_sq = 0.0;
        for (int c = 0; c < k; ++c) {
            double u = dec.eigenvectors.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c));
            embed.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) = u;
            norm_sq += u * u;
        }
        if (norm_sq < 1e-24) {
            zero_rows.push_back(i);
            warn_once("zeronorm:" + std::to_string(dec.index_map[static_cast<std::size_t>(i)]),
                      "zero-norm spectral embedding row for location index " +
                          std::to_string(dec.index_map[static_cast<std::size_t>(i)]));
            continue;
        }
        double inv = 1.0 / std::sqrt(norm_sq);
        for (int c = 0; c < k; ++c)
            embed.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) *= inv;
    }

    auto rng = derive_stream(seed, "kmeans");
    KMeansResult km = kmeans(embed, k, rng);

    if (!zero_rows.empty() && fallback_distance) {
        std::set<int> zero_set(zero_rows.begin(), zero_rows.end());
        for (int zr : zero_rows) {
            int orig = dec.index_map[static_cast<std::size_t>(zr)];
            int best_row = -1;
            double best_d = std::numeric_limits<double>::max();
            for (int j = 0; j < n; ++j) {
                if (j == zr || zero_set.count(j)) continue;
                double d = fallback_distance->at(orig, dec.index_map[static_cast<std::size_t>(j)]);
                if (d < best_d) {
                    best_d = d;
                    best_row = j;
                }
            }
            if (best_row >= 0) km.assignment[static_cast<std::size_t>(zr)] =
                km.assignment[static_cast<std::size_t>(best_row)];
        }
    }

    // Canonical renumbering by smallest member location index.
    std::vector<int> first_member(static_cast<std::size_t>(k), std::numeric_limits<int>::max());
    for (int i = 0; i < n; ++i) {
        int c = km.assignment[static_cast<std::size_t>(i)];
        first_member[static_cast<std::size_t>(c)] =
            std::min(first_member[static_cast<std::size_t>(c)], dec.index_map[static_cast<std::size_t>(i)]);
    }
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&first_member](int a, int b) {
        return first_member[static_cast<std::size_t>(a)] < first_member[static_cast<std::size_t>(b)];
    });
    std::vector<int> renumber(static_cast<std::size_t>(k));
    for (int newc = 0; newc < k; ++newc) renumber[static_cast<std::size_t>(order[static_cast<std::size_t>(newc)])] = newc;

    ClusterMap cm;
    cm.assignment.assign(static_cast<std::size_t>(total_locations), -1);
    for (int i = 0; i < n; ++i)
        cm.assignment[static_cast<std::size_t>(dec.index_map[static_cast<std::size_t>(i)])] =
            renumber[static_cast<std::size_t>(km.assignment[static_cast<std::size_t>(i)])];
    std::vector<int> sorted_pins = pinned;
    std::sort(sorted_pins.begin(), sorted_pins.end());
    int next = k;
    for (int loc : sorted_pins) {
        if (loc < 0 || loc >= total_locations) throw ConfigError("pinned location index out of range");
        if (cm.assignment[static_cast<std::size_t>(loc)] != -1)
            throw ConfigError("pinned location also present in the similarity graph");
        cm.assignment[static_cast<std::size_t>(loc)] = next++;
    }
    for (int a : cm.assignment)
        if (a < 0) throw Error("cluster map does not cover every location");
    cm.k = next;
    cm.pinned = sorted_pins;
    cm.validate();
    return cm;
}

} // namespace spm
