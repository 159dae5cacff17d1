#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spm/linalg.hpp"
#include "spm/rng.hpp"
#include "spm/spectral.hpp"
#include "test_util.hpp"

using namespace spm;

namespace {

/// Well-separated planar blocks: within-block spread ~0.1, across ~10.
struct Blocks {
    DistanceMatrix dist;
    std::vector<int> truth;
};

Blocks make_blocks(const std::vector<int>& sizes, std::mt19937_64& rng) {
    std::vector<std::pair<double, double>> centers = {{0.0, 0.0}, {10.0, 0.0}, {5.0, 8.66}, {15.0, 8.66}};
    std::vector<std::pair<double, double>> pts;
    Blocks out;
    for (std::size_t b = 0; b < sizes.size(); ++b)
        for (int i = 0; i < sizes[b]; ++i) {
            pts.push_back({centers[b].first + uniform_range(rng, -0.035, 0.035),
                           centers[b].second + uniform_range(rng, -0.035, 0.035)});
            out.truth.push_back(static_cast<int>(b));
        }
    int n = static_cast<int>(pts.size());
    out.dist = DistanceMatrix(n, DistanceMetric::Physical);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out.dist.at(i, j) = std::hypot(pts[static_cast<std::size_t>(i)].first - pts[static_cast<std::size_t>(j)].first,
                                           pts[static_cast<std::size_t>(i)].second - pts[static_cast<std::size_t>(j)].second);
    return out;
}

DistanceMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    DistanceMatrix d(static_cast<int>(rows.size()), DistanceMetric::Physical);
    for (int i = 0; i < d.n; ++i)
        for (int j = 0; j < d.n; ++j) d.at(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return d;
}

} // namespace

TEST_CASE("similarity kernel values") {
    auto d = from_rows({{0.0, 0.0}, {0.0, 0.0}});
    auto sim = build_similarity(d, 1.0);
    CHECK(sim.at(0, 1) == doctest::Approx(1.0)); // exp(0)
    CHECK(sim.at(0, 0) == 0.0);
    CHECK(sim.at(1, 1) == 0.0);

    double s = 0.7;
    auto d2 = from_rows({{0.0, s * std::sqrt(2.0)}, {s * std::sqrt(2.0), 0.0}});
    auto sim2 = build_similarity(d2, s);
    CHECK(sim2.at(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("median sigma rule uses positive off-diagonal distances") {
    auto d = from_rows({{0.0, 1.0, 3.0}, {1.0, 0.0, 5.0}, {3.0, 5.0, 0.0}});
    auto sim = build_similarity(d);
    CHECK(sim.sigma == doctest::Approx(3.0));
    auto zero = from_rows({{0.0, 0.0}, {0.0, 0.0}});
    CHECK_THROWS_AS(build_similarity(zero), AllZeroDistances);
    CHECK_NOTHROW(build_similarity(zero, 1.0));
}

TEST_CASE("two-node Laplacian has eigenvalues 0 and 2") {
    auto d = from_rows({{0.0, 1.0}, {1.0, 0.0}});
    auto sim = build_similarity(d, 1.0);
    // force unit similarity to match the hand computation
    sim.a = {0.0, 1.0, 1.0, 0.0};
    auto dec = spectral_decompose(sim);
    CHECK(dec.eigenvalues[0] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(dec.eigenvalues[1] == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("eigen residual and orthonormality hold on random similarity graphs") {
    auto rng = derive_stream(8, "eig");
    const int n = 12;
    DistanceMatrix d(n, DistanceMetric::Physical);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) d.at(i, j) = d.at(j, i) = uniform_range(rng, 0.2, 4.0);
    auto sim = build_similarity(d);
    auto dec = spectral_decompose(sim);

    // rebuild L to evaluate the residual
    std::vector<double> degree(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) degree[static_cast<std::size_t>(i)] += sim.at(i, j);
    Matrix lap(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            lap.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
                (i == j ? 1.0 : 0.0) -
                sim.at(i, j) / std::sqrt(degree[static_cast<std::size_t>(i)] * degree[static_cast<std::size_t>(j)]);

    for (int k = 0; k < n; ++k) {
        double resid = 0.0;
        for (int i = 0; i < n; ++i) {
            double lu = 0.0;
            for (int j = 0; j < n; ++j)
                lu += lap.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                      dec.eigenvectors.at(static_cast<std::size_t>(j), static_cast<std::size_t>(k));
            resid = std::max(resid, std::abs(lu - dec.eigenvalues[static_cast<std::size_t>(k)] *
                                                      dec.eigenvectors.at(static_cast<std::size_t>(i),
                                                                          static_cast<std::size_t>(k))));
        }
        CHECK(resid <= 1e-8);
        for (int k2 = 0; k2 < n; ++k2) {
            double dot = 0.0;
            for (int i = 0; i < n; ++i)
                dot += dec.eigenvectors.at(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) *
                       dec.eigenvectors.at(static_cast<std::size_t>(i), static_cast<std::size_t>(k2));
            CHECK(std::abs(dot - (k == k2 ? 1.0 : 0.0)) <= 1e-8);
        }
    }

    // lambda_1 ~ 0 with eigenvector proportional to D^(1/2) * 1
    CHECK(std::abs(dec.eigenvalues[0]) <= 1e-10);
    std::vector<double> ref(n);
    double norm = 0.0;
    for (int i = 0; i < n; ++i) {
        ref[static_cast<std::size_t>(i)] = std::sqrt(degree[static_cast<std::size_t>(i)]);
        norm += degree[static_cast<std::size_t>(i)];
    }
    norm = std::sqrt(norm);
    double sign = dec.eigenvectors.at(0, 0) > 0 ? 1.0 : -1.0;
    for (int i = 0; i < n; ++i)
        CHECK(dec.eigenvectors.at(static_cast<std::size_t>(i), 0) * sign ==
              doctest::Approx(ref[static_cast<std::size_t>(i)] / norm).epsilon(1e-6));
}

TEST_CASE("zero eigenvalue multiplicity counts connected components") {
    // three disjoint cliques: cross-block similarity is exactly zero
    const std::vector<int> sizes = {4, 3, 5};
    int n = std::accumulate(sizes.begin(), sizes.end(), 0);
    SimilarityMatrix sim;
    sim.n = n;
    sim.sigma = 1.0;
    sim.a.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) sim.index_map.push_back(i);
    auto block_of = [&sizes](int v) {
        int b = 0, acc = 0;
        while (v >= acc + sizes[static_cast<std::size_t>(b)]) acc += sizes[static_cast<std::size_t>(b++)];
        return b;
    };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && block_of(i) == block_of(j)) sim.a[static_cast<std::size_t>(i) * n + j] = 0.9;
    auto dec = spectral_decompose(sim);
    int zeros = 0;
    for (double ev : dec.eigenvalues)
        if (std::abs(ev) < 1e-10) ++zeros;
    CHECK(zeros == 3);
}

TEST_CASE("isolated vertices are rejected with their index") {
    SimilarityMatrix sim;
    sim.n = 3;
    sim.sigma = 1.0;
    sim.a = {0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    sim.index_map = {5, 6, 7};
    try {
        spectral_decompose(sim);
        FAIL("expected IsolatedVertex");
    } catch (const IsolatedVertex& e) {
        CHECK(e.index == 7);
    }
}

TEST_CASE("eigengap selection on the documented spectra") {
    CHECK(choose_k({0.0, 0.01, 0.02, 0.03, 0.90, 0.95, 0.97, 0.99}, 2, 7) == 4);
    CHECK(choose_k({0.0, 1.0, 1.01, 1.02, 1.03}, 2, 4) == 2);
    CHECK(choose_k({0.0, 0.25, 0.5, 0.75, 1.0}, 2, 4) == 2); // all gaps equal: tie to k_min
}

TEST_CASE("k-means recovers three blocks and matches brute force on 9 points") {
    auto rng = derive_stream(4, "blocks");
    auto blocks = make_blocks({3, 3, 3}, rng);
    auto sim = build_similarity(blocks.dist);
    auto dec = spectral_decompose(sim);
    auto cm = njw_cluster(dec, 3, {}, 99, 9, &blocks.dist);
    CHECK(testutil::canonical_partition(cm.assignment) == testutil::canonical_partition(blocks.truth));

    // brute-force best partition by embedded-space inertia
    Matrix embed(9, 3);
    for (int i = 0; i < 9; ++i) {
        double norm = 0.0;
        for (int c = 0; c < 3; ++c) {
            double u = dec.eigenvectors.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c));
            embed.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) = u;
            norm += u * u;
        }
        norm = std::sqrt(norm);
        for (int c = 0; c < 3; ++c)
            embed.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) /= norm;
    }
    double best_inertia = std::numeric_limits<double>::max();
    std::vector<int> best_assign;
    std::vector<int> assign(9, 0);
    // enumerate all 3^9 labelings; skip ones missing a label
    for (int code = 0; code < 19683; ++code) {
        int c = code;
        bool seen[3] = {false, false, false};
        for (int i = 0; i < 9; ++i) {
            assign[static_cast<std::size_t>(i)] = c % 3;
            seen[c % 3] = true;
            c /= 3;
        }
        if (!(seen[0] && seen[1] && seen[2])) continue;
        double centers[3][3] = {};
        int counts[3] = {};
        for (int i = 0; i < 9; ++i) {
            ++counts[assign[static_cast<std::size_t>(i)]];
            for (int d = 0; d < 3; ++d)
                centers[assign[static_cast<std::size_t>(i)]][d] +=
                    embed.at(static_cast<std::size_t>(i), static_cast<std::size_t>(d));
        }
        for (int g = 0; g < 3; ++g)
            for (int d = 0; d < 3; ++d) centers[g][d] /= counts[g];
        double inertia = 0.0;
        for (int i = 0; i < 9; ++i)
            for (int d = 0; d < 3; ++d) {
                double diff = embed.at(static_cast<std::size_t>(i), static_cast<std::size_t>(d)) -
                              centers[assign[static_cast<std::size_t>(i)]][d];
                inertia += diff * diff;
            }
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_assign = assign;
        }
    }
    CHECK(testutil::canonical_partition(cm.assignment) == testutil::canonical_partition(best_assign));
}

TEST_CASE("clustering is invariant under location relabeling") {
    auto rng = derive_stream(12, "perm");
    auto blocks = make_blocks({4, 5, 3}, rng);
    const int n = 12;
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_below(rng, i)]);

    DistanceMatrix permuted(n, DistanceMetric::Physical);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            permuted.at(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]) =
                blocks.dist.at(i, j);

    auto cm1 = njw_cluster(spectral_decompose(build_similarity(blocks.dist)), 3, {}, 7, n, &blocks.dist);
    auto cm2 = njw_cluster(spectral_decompose(build_similarity(permuted)), 3, {}, 7, n, &permuted);
    std::vector<int> mapped(n);
    for (int i = 0; i < n; ++i)
        mapped[static_cast<std::size_t>(i)] = cm2.assignment[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    CHECK(testutil::canonical_partition(mapped) == testutil::canonical_partition(cm1.assignment));
}

TEST_CASE("k equal to the point count gives singleton clusters") {
    auto rng = derive_stream(3, "singl");
    const int n = 6;
    DistanceMatrix d(n, DistanceMetric::Physical);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) d.at(i, j) = d.at(j, i) = uniform_range(rng, 1.0, 3.0);
    auto cm = njw_cluster(spectral_decompose(build_similarity(d)), n, {}, 1, n, &d);
    CHECK(cm.k == n);
    auto sizes = cm.cluster_sizes();
    for (int s : sizes) CHECK(s == 1);
}

TEST_CASE("pinned locations come back as appended singleton clusters") {
    auto rng = derive_stream(21, "pin");
    auto blocks = make_blocks({4, 4, 4}, rng);
    std::vector<int> pinned = {5};
    auto sim = build_similarity(blocks.dist, std::nullopt, pinned);
    CHECK(sim.n == 11);
    auto dec = spectral_decompose(sim);
    auto cm = njw_cluster(dec, 4, pinned, 11, 12, &blocks.dist);
    CHECK(cm.k == 5);
    auto sizes = cm.cluster_sizes();
    CHECK(sizes[static_cast<std::size_t>(cm.assignment[5])] == 1);
    CHECK(cm.pinned == pinned);
    CHECK_NOTHROW(cm.validate());
}

TEST_CASE("k-means reports EmptyCluster when every restart collapses") {
    // identical points: ties send everything to the first cluster
    Matrix pts(5, 2, 1.0);
    auto rng = derive_stream(1, "km");
    CHECK_THROWS_AS(kmeans(pts, 2, rng), EmptyCluster);
}

TEST_CASE("jacobi matches hand eigenvalues on a fixed symmetric matrix") {
    Matrix m(2, 2);
    m.at(0, 0) = 2.0;
    m.at(0, 1) = m.at(1, 0) = 1.0;
    m.at(1, 1) = 2.0;
    auto eig = jacobi_eigen(m);
    CHECK(eig.values[0] == doctest::Approx(1.0));
    CHECK(eig.values[1] == doctest::Approx(3.0));
}

TEST_CASE("median helper") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == doctest::Approx(2.5));
    CHECK_THROWS_AS(median({}), Error);
}
