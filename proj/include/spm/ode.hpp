#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "spm/errors.hpp"

namespace spm {

struct OdeOptions {
    double atol = 1e-8;
    double rtol = 1e-6;
    double h_init = 1e-4;
    double h_min = 1e-14;
    double bound = 1e12;              // Divergence guard on the sup norm
    std::size_t max_steps = 200'000'000;
};

struct SteadyOptions {
    double eps_abs = 1e-8;            // residual test: ||F||_inf <= eps_abs + eps_rel*||x||_inf
    double eps_rel = 1e-6;
    double eps_osc = 1e-4;            // window-average comparison tolerance
    double t_max = 1000.0;
    double window_frac = 0.10;        // W as a fraction of t_max
    std::optional<double> fixed_time; // evaluate at this time instead of detecting equilibrium
    OdeOptions ode;
};

struct SteadyResult {
    std::vector<double> state;
    double t_reached = 0.0;
    bool converged = false;
    bool oscillatory = false;
};

inline double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

/// Adaptive Dormand-Prince 5(4) stepper for autonomous systems.
/// System must expose size() and drift(const vector<double>&, vector<double>&).
template <class System>
class Dopri5 {
public:
    Dopri5(const System& sys, std::vector<double> y0, const OdeOptions& opts)
        : sys_(sys), opts_(opts), y_(std::move(y0)) {
        const std::size_t n = y_.size();
        k1_.resize(n); k2_.resize(n); k3_.resize(n); k4_.resize(n);
        k5_.resize(n); k6_.resize(n); k7_.resize(n);
        ytmp_.resize(n); ynew_.resize(n);
        sys_.drift(y_, k1_);
        h_nat_ = opts_.h_init;
    }

    double t() const { return t_; }
    const std::vector<double>& y() const { return y_; }
    /// F(y) at the current point (maintained via first-same-as-last).
    const std::vector<double>& current_drift() const { return k1_; }

    /// Advances until t == target. After every accepted step calls
    /// cb(t_prev, t_now, y_now); a true return stops early.
    template <class Cb>
    bool advance_until(double target, Cb&& cb) {
        while (t_ < target) {
            double h = std::min(h_nat_, target - t_);
            bool clipped = h < h_nat_;
            double err = attempt(h);
            if (++steps_ > opts_.max_steps)
                throw Error("ODE integrator exceeded the step budget");
            double factor = err > 0.0 ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0) : 5.0;
            if (err <= 1.0) {
                double t_prev = t_;
                t_ = clipped ? target : t_ + h;
                y_.swap(ynew_);
                k1_.swap(k7_); // FSAL: k7 = F(y_new)
                if (inf_norm(y_) > opts_.bound)
                    throw Divergence("ODE state exceeded bound " + std::to_string(opts_.bound) +
                                     " at t=" + std::to_string(t_));
                if (!clipped)
                    h_nat_ = h * factor;
                else if (err > 1e-30)
                    h_nat_ = std::min(h_nat_, h * factor);
                if (cb(t_prev, t_, y_)) return true;
            } else {
                h_nat_ = h * factor;
                if (h_nat_ < opts_.h_min)
                    throw Error("ODE step size underflow at t=" + std::to_string(t_));
            }
        }
        return false;
    }

    void advance_to(double target) {
        advance_until(target, [](double, double, const std::vector<double>&) { return false; });
    }

private:
    /// One trial step; returns the scaled error norm. On success ynew_ holds
    /// the 5th-order solution and k7_ its drift.
    double attempt(double h) {
        const std::size_t n = y_.size();
        auto comb2 = [&](double a1, const std::vector<double>& v1) {
            for (std::size_t i = 0; i < n; ++i) ytmp_[i] = y_[i] + h * a1 * v1[i];
        };
        comb2(1.0 / 5.0, k1_);
        sys_.drift(ytmp_, k2_);
        for (std::size_t i = 0; i < n; ++i)
            ytmp_[i] = y_[i] + h * ((3.0 / 40.0) * k1_[i] + (9.0 / 40.0) * k2_[i]);
        sys_.drift(ytmp_, k3_);
        for (std::size_t i = 0; i < n; ++i)
            ytmp_[i] = y_[i] + h * ((44.0 / 45.0) * k1_[i] - (56.0 / 15.0) * k2_[i] + (32.0 / 9.0) * k3_[i]);
        sys_.drift(ytmp_, k4_);
        for (std::size_t i = 0; i < n; ++i)
            ytmp_[i] = y_[i] + h * ((19372.0 / 6561.0) * k1_[i] - (25360.0 / 2187.0) * k2_[i] +
                                    (64448.0 / 6561.0) * k3_[i] - (212.0 / 729.0) * k4_[i]);
        sys_.drift(ytmp_, k5_);
        for (std::size_t i = 0; i < n; ++i)
            ytmp_[i] = y_[i] + h * ((9017.0 / 3168.0) * k1_[i] - (355.0 / 33.0) * k2_[i] +
                                    (46732.0 / 5247.0) * k3_[i] + (49.0 / 176.0) * k4_[i] -
                                    (5103.0 / 18656.0) * k5_[i]);
        sys_.drift(ytmp_, k6_);
        for (std::size_t i = 0; i < n; ++i)
            ynew_[i] = y_[i] + h * ((35.0 / 384.0) * k1_[i] + (500.0 / 1113.0) * k3_[i] +
                                    (125.0 / 192.0) * k4_[i] - (2187.0 / 6784.0) * k5_[i] +
                                    (11.0 / 84.0) * k6_[i]);
        sys_.drift(ynew_, k7_);
        double err_sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double y4 = y_[i] + h * ((5179.0 / 57600.0) * k1_[i] + (7571.0 / 16695.0) * k3_[i] +
                                     (393.0 / 640.0) * k4_[i] - (92097.0 / 339200.0) * k5_[i] +
                                     (187.0 / 2100.0) * k6_[i] + (1.0 / 40.0) * k7_[i]);
            double sc = opts_.atol + opts_.rtol * std::max(std::abs(y_[i]), std::abs(ynew_[i]));
            double e = (ynew_[i] - y4) / sc;
            err_sq += e * e;
        }
        return std::sqrt(err_sq / static_cast<double>(n));
    }

    const System& sys_;
    OdeOptions opts_;
    std::vector<double> y_;
    std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_, ynew_;
    double t_ = 0.0;
    double h_nat_ = 1e-4;
    std::size_t steps_ = 0;
};

/// Integrates to a fixed time and returns y(t_end).
template <class System>
std::vector<double> integrate_to_time(const System& sys, std::vector<double> y0, double t_end,
                                      const OdeOptions& opts = {}) {
    if (t_end < 0.0) throw ConfigError("t_end must be nonnegative");
    Dopri5<System> stepper(sys, std::move(y0), opts);
    stepper.advance_to(t_end);
    return stepper.y();
}

/// Integrates over an ascending grid, invoking cb(index, t, y) at each point.
/// Grid points are hit exactly (steps are clipped, no interpolation).
template <class System, class Cb>
void integrate_grid(const System& sys, std::vector<double> y0, const std::vector<double>& grid,
                    const OdeOptions& opts, Cb&& cb) {
    Dopri5<System> stepper(sys, std::move(y0), opts);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (grid[g] > stepper.t()) stepper.advance_to(grid[g]);
        cb(g, grid[g], stepper.y());
    }
}

/// Runs a system until one of, in order of precedence:
///   - opts.fixed_time is set: integrate exactly there (converged=true);
///   - the drift residual passes the equilibrium test (converged=true);
///   - two successive window averages agree (converged=true, oscillatory=true,
///     state is the last window average);
///   - t_max is reached (converged=false, state as of t_max).
template <class System>
SteadyResult integrate_to_steady(const System& sys, std::vector<double> y0,
                                 const SteadyOptions& opts = {}) {
    SteadyResult res;
    if (opts.fixed_time) {
        res.state = integrate_to_time(sys, std::move(y0), *opts.fixed_time, opts.ode);
        res.t_reached = *opts.fixed_time;
        res.converged = true;
        return res;
    }
    const std::size_t n = y0.size();
    auto residual_ok = [&opts](const std::vector<double>& drift, const std::vector<double>& y) {
        return inf_norm(drift) <= opts.eps_abs + opts.eps_rel * inf_norm(y);
    };

    Dopri5<System> stepper(sys, std::move(y0), opts.ode);
    if (residual_ok(stepper.current_drift(), stepper.y())) {
        res.state = stepper.y();
        res.t_reached = 0.0;
        res.converged = true;
        return res;
    }

    const double W = opts.window_frac * opts.t_max;
    std::vector<double> window_sum(n, 0.0), prev_avg, y_prev = stepper.y(), avg(n);
    bool have_prev = false;
    bool settled = false;

    for (double chunk_end = W; chunk_end <= opts.t_max + 1e-12 && !settled; chunk_end += W) {
        double target = std::min(chunk_end, opts.t_max);
        double chunk_start = stepper.t();
        std::fill(window_sum.begin(), window_sum.end(), 0.0);
        bool stopped = stepper.advance_until(target, [&](double t0, double t1, const std::vector<double>& y) {
            for (std::size_t i = 0; i < n; ++i)
                window_sum[i] += 0.5 * (t1 - t0) * (y_prev[i] + y[i]);
            y_prev = y;
            return residual_ok(stepper.current_drift(), y);
        });
        if (stopped) {
            res.state = stepper.y();
            res.t_reached = stepper.t();
            res.converged = true;
            return res;
        }
        double width = stepper.t() - chunk_start;
        if (width <= 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) avg[i] = window_sum[i] / width;
        if (have_prev) {
            double diff = 0.0, scale = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                diff = std::max(diff, std::abs(avg[i] - prev_avg[i]));
                scale = std::max(scale, std::abs(avg[i]));
            }
            if (diff <= opts.eps_osc * (1.0 + scale)) {
                res.state = avg;
                res.t_reached = stepper.t();
                res.converged = true;
                res.oscillatory = true;
                return res;
            }
        }
        prev_avg = avg;
        have_prev = true;
    }
    res.state = stepper.y();
    res.t_reached = stepper.t();
    res.converged = false;
    return res;
}

/// Uniform grid {0, step, 2*step, ..., t_end}; the endpoint is always present.
inline std::vector<double> make_uniform_grid(double t_end, double step) {
    if (t_end <= 0.0 || step <= 0.0) throw ConfigError("grid requires t_end > 0 and step > 0");
    std::vector<double> grid;
    for (double t = 0.0; t < t_end - 1e-9 * t_end; t += step) grid.push_back(t);
    grid.push_back(t_end);
    return grid;
}

} // namespace spm
