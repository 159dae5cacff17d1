#pragma once

// Shared test-only oracles. These deliberately avoid the library's own code
// paths for the quantities they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace testutil {

/// Bhattacharyya distance between two Gaussians by composite-Simpson
/// quadrature of -ln integral sqrt(p q): independent of the closed form.
inline double bhattacharyya_quadrature(double m1, double v1, double m2, double v2) {
    double s1 = std::sqrt(v1), s2 = std::sqrt(v2);
    double lo = std::min(m1, m2) - 15.0 * std::max(s1, s2);
    double hi = std::max(m1, m2) + 15.0 * std::max(s1, s2);
    const int n = 1 << 16; // even
    double h = (hi - lo) / n;
    auto f = [&](double x) {
        double p = std::exp(-0.5 * (x - m1) * (x - m1) / v1) / std::sqrt(2.0 * M_PI * v1);
        double q = std::exp(-0.5 * (x - m2) * (x - m2) / v2) / std::sqrt(2.0 * M_PI * v2);
        return std::sqrt(p * q);
    };
    double sum = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) sum += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    double integral = sum * h / 3.0;
    return -std::log(integral);
}

/// Canonical form of a partition: member lists sorted, ordered by first member.
inline std::vector<std::vector<int>> canonical_partition(const std::vector<int>& assignment) {
    int k = 0;
    for (int a : assignment) k = std::max(k, a + 1);
    std::vector<std::vector<int>> groups(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < assignment.size(); ++i)
        groups[static_cast<std::size_t>(assignment[i])].push_back(static_cast<int>(i));
    groups.erase(std::remove_if(groups.begin(), groups.end(),
                                [](const std::vector<int>& g) { return g.empty(); }),
                 groups.end());
    std::sort(groups.begin(), groups.end());
    return groups;
}

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

inline MeanSd mean_sd(const std::vector<double>& xs) {
    MeanSd out;
    for (double x : xs) out.mean += x;
    out.mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
    return out;
}

} // namespace testutil
