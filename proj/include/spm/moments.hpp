#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "spm/errors.hpp"
#include "spm/expr.hpp"
#include "spm/meanfield.hpp"
#include "spm/model.hpp"
#include "spm/ode.hpp"

namespace spm {

/// Sparse polynomial of total degree <= 2 over population variables.
struct Poly2 {
    double c0 = 0.0;
    std::vector<std::pair<int, double>> lin;             // index -> coefficient
    std::vector<std::tuple<int, int, double>> quad;      // (p <= q) -> coefficient
};

namespace poly_detail {

struct Builder {
    double c0 = 0.0;
    std::map<int, double> lin;
    std::map<std::pair<int, int>, double> quad;
};

inline Builder combine(const Builder& a, const Builder& b, double sign) {
    Builder out = a;
    out.c0 += sign * b.c0;
    for (const auto& [k, v] : b.lin) out.lin[k] += sign * v;
    for (const auto& [k, v] : b.quad) out.quad[k] += sign * v;
    return out;
}

inline Builder multiply(const Builder& a, const Builder& b) {
    if ((!a.quad.empty() && (!b.lin.empty() || !b.quad.empty())) ||
        (!b.quad.empty() && !a.lin.empty()))
        throw UnsupportedRate("rate polynomial exceeds degree 2");
    Builder out;
    out.c0 = a.c0 * b.c0;
    for (const auto& [k, v] : a.lin) out.lin[k] += v * b.c0;
    for (const auto& [k, v] : b.lin) out.lin[k] += v * a.c0;
    for (const auto& [k, v] : a.quad) out.quad[k] += v * b.c0;
    for (const auto& [k, v] : b.quad) out.quad[k] += v * a.c0;
    for (const auto& [ka, va] : a.lin)
        for (const auto& [kb, vb] : b.lin) {
            auto key = std::minmax(ka, kb);
            out.quad[{key.first, key.second}] += va * vb;
        }
    return out;
}

inline Builder extract(const Expr& e, std::span<const double> params) {
    switch (e.kind) {
        case ExprKind::Constant: {
            Builder b;
            b.c0 = e.value;
            return b;
        }
        case ExprKind::Param: {
            Builder b;
            b.c0 = params[static_cast<std::size_t>(e.param)];
            return b;
        }
        case ExprKind::Population: {
            Builder b;
            b.lin[e.pop] = 1.0;
            return b;
        }
        case ExprKind::Add: return combine(extract(*e.lhs, params), extract(*e.rhs, params), 1.0);
        case ExprKind::Sub: return combine(extract(*e.lhs, params), extract(*e.rhs, params), -1.0);
        case ExprKind::Mul: return multiply(extract(*e.lhs, params), extract(*e.rhs, params));
        case ExprKind::Div: throw UnsupportedRate("quotient rates are not closeable");
        case ExprKind::Min:
        case ExprKind::Max: throw UnsupportedRate("min/max rates are not closeable");
    }
    throw UnsupportedRate("corrupt expression node");
}

} // namespace poly_detail

/// Expands a rate expression into polynomial form with parameters resolved.
/// Throws UnsupportedRate for min/max/quotient nodes or degree > 2.
inline Poly2 extract_poly2(const Expr& e, std::span<const double> params) {
    poly_detail::Builder b = poly_detail::extract(e, params);
    Poly2 p;
    p.c0 = b.c0;
    for (const auto& [k, v] : b.lin)
        if (v != 0.0) p.lin.emplace_back(k, v);
    for (const auto& [k, v] : b.quad)
        if (v != 0.0) p.quad.emplace_back(k.first, k.second, v);
    return p;
}

/// Second-order normal moment closure: state is the N means followed by the
/// upper triangle of the raw second-moment matrix M = E[X X^T]. Third-order
/// raw moments are closed by the zero-third-central-moment rule
///   E[Xa Xb Xc] = mu_a M_bc + mu_b M_ac + mu_c M_ab - 2 mu_a mu_b mu_c.
class MomentSystem {
public:
    explicit MomentSystem(const SpatialModel& model) {
        n_ = static_cast<std::size_t>(model.num_populations());
        auto params = model.param_values();
        for (const auto& tr : model.transitions) {
            Entry e;
            try {
                e.rate = extract_poly2(*tr.rate, params);
            } catch (const UnsupportedRate& ex) {
                throw UnsupportedRate("transition '" + tr.label + "': " + ex.what());
            }
            e.update.assign(tr.update.begin(), tr.update.end());
            transitions_.push_back(std::move(e));
        }
    }

    std::size_t num_populations() const { return n_; }
    std::size_t size() const { return n_ + n_ * (n_ + 1) / 2; }

    /// Index of M_ij (i <= j) within the state vector.
    std::size_t tri_index(std::size_t i, std::size_t j) const {
        return n_ + i * n_ - i * (i - 1) / 2 + (j - i);
    }

    /// Deterministic initial condition: means x0, M_ij = x0_i * x0_j.
    std::vector<double> initial_state(const std::vector<double>& x0) const {
        std::vector<double> y(size());
        for (std::size_t i = 0; i < n_; ++i) y[i] = x0[i];
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i; j < n_; ++j) y[tri_index(i, j)] = x0[i] * x0[j];
        return y;
    }

    void drift(const std::vector<double>& y, std::vector<double>& dy) const {
        const std::size_t n = n_;
        thread_local std::vector<double> full, acc, erow;
        full.assign(n * n, 0.0);
        acc.assign(n * n, 0.0);
        erow.resize(n);
        dy.assign(size(), 0.0);

        const double* mu = y.data();
        // Unpack the triangular second moments into a full matrix so inner
        // loops stay contiguous.
        {
            std::size_t pos = n;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i; j < n; ++j, ++pos) {
                    full[i * n + j] = y[pos];
                    full[j * n + i] = y[pos];
                }
        }

        for (const auto& tr : transitions_) {
            const Poly2& r = tr.rate;
            // E[r] = c0 + sum c1_k mu_k + sum c2_pq M_pq
            double er = r.c0;
            for (const auto& [k, c] : r.lin) er += c * mu[k];
            for (const auto& [p, q, c] : r.quad) er += c * full[static_cast<std::size_t>(p) * n + static_cast<std::size_t>(q)];

            for (const auto& [idx, delta] : tr.update)
                dy[static_cast<std::size_t>(idx)] += static_cast<double>(delta) * er;

            // Row vector E[X_j r] for all j, built from mu and rows of M.
            double mu_coef = r.c0;
            for (const auto& [p, q, c] : r.quad) {
                double mup = mu[p], muq = mu[q];
                mu_coef += c * (full[static_cast<std::size_t>(p) * n + static_cast<std::size_t>(q)] - 2.0 * mup * muq);
            }
            for (std::size_t j = 0; j < n; ++j) erow[j] = mu_coef * mu[j];
            for (const auto& [k, c] : r.lin) {
                const double* row = &full[static_cast<std::size_t>(k) * n];
                for (std::size_t j = 0; j < n; ++j) erow[j] += c * row[j];
            }
            for (const auto& [p, q, c] : r.quad) {
                const double* rowq = &full[static_cast<std::size_t>(q) * n];
                const double* rowp = &full[static_cast<std::size_t>(p) * n];
                double cp = c * mu[p], cq = c * mu[q];
                for (std::size_t j = 0; j < n; ++j) erow[j] += cp * rowq[j] + cq * rowp[j];
            }

            // acc[i][j] += D_i * E[X_j r]; pair term split evenly so that
            // dM_ij = acc[i][j] + acc[j][i].
            for (const auto& [idx, delta] : tr.update) {
                double d = static_cast<double>(delta);
                double* row = &acc[static_cast<std::size_t>(idx) * n];
                for (std::size_t j = 0; j < n; ++j) row[j] += d * erow[j];
                for (const auto& [jdx, jdelta] : tr.update)
                    row[static_cast<std::size_t>(jdx)] += 0.5 * d * static_cast<double>(jdelta) * er;
            }
        }

        std::size_t pos = n;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j, ++pos)
                dy[pos] = acc[i * n + j] + acc[j * n + i];
    }

    std::vector<double> means_of(const std::vector<double>& y) const {
        return {y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n_)};
    }

    /// Per-population variances M_ii - mu_i^2 (not floored).
    std::vector<double> variances_of(const std::vector<double>& y) const {
        std::vector<double> v(n_);
        for (std::size_t i = 0; i < n_; ++i) v[i] = y[tri_index(i, i)] - y[i] * y[i];
        return v;
    }

private:
    struct Entry {
        Poly2 rate;
        std::vector<std::pair<int, std::int64_t>> update;
    };
    std::size_t n_ = 0;
    std::vector<Entry> transitions_;
};

inline MomentSystem build_moment_closure(const SpatialModel& model) {
    return MomentSystem(model);
}

/// Integrates the closure ODEs to steady state (or fixed time) and returns
/// per-population means and variances.
inline SteadyState moment_closure_steady(const SpatialModel& model, const SteadyOptions& opts = {}) {
    MomentSystem sys(model);
    SteadyResult r = integrate_to_steady(sys, sys.initial_state(model.initial_real()), opts);
    SteadyState ss;
    ss.mean = sys.means_of(r.state);
    ss.variance = sys.variances_of(r.state);
    ss.t_reached = r.t_reached;
    ss.converged = r.converged;
    ss.oscillatory = r.oscillatory;
    return ss;
}

} // namespace spm
