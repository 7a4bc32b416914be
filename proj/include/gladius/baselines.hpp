#pragma once

#include "gladius/dataset.hpp"
#include "gladius/errors.hpp"
#include "gladius/mdp.hpp"
#include "gladius/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace gladius {

struct NelderMeadOptions {
    double tolerance = 1e-6;  // simplex diameter at which the search stops
    std::size_t max_iterations = 5000;
    double initial_step = 0.5;
    std::array<double, 2> lower{-100.0, -100.0};
    std::array<double, 2> upper{100.0, 100.0};
};

struct NelderMeadResult {
    std::array<double, 2> x{};
    double value = 0.0;
    std::size_t iterations = 0;
};

/// Derivative-free minimisation of f over a box in R^2. Points leaving the box are clamped.
/// Throws ConvergenceError when the simplex has not shrunk below the tolerance in time.
inline NelderMeadResult nelder_mead_2d(const std::function<double(const std::array<double, 2>&)>& f,
                                       std::array<double, 2> start, const NelderMeadOptions& opt = {}) {
    using Point = std::array<double, 2>;
    const auto clamp = [&](Point p) {
        for (std::size_t i = 0; i < 2; ++i) p[i] = std::clamp(p[i], opt.lower[i], opt.upper[i]);
        return p;
    };
    struct Vertex {
        Point x;
        double f;
    };
    std::array<Vertex, 3> v;
    start = clamp(start);
    v[0] = {start, f(start)};
    for (std::size_t i = 0; i < 2; ++i) {
        Point p = start;
        p[i] += (p[i] + opt.initial_step <= opt.upper[i]) ? opt.initial_step : -opt.initial_step;
        p = clamp(p);
        v[i + 1] = {p, f(p)};
    }
    const auto diameter = [&] {
        double d = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i + 1; j < 3; ++j)
                d = std::max(d, std::hypot(v[i].x[0] - v[j].x[0], v[i].x[1] - v[j].x[1]));
        return d;
    };
    const auto along = [](const Point& c, const Point& w, double t) {
        return Point{c[0] + t * (w[0] - c[0]), c[1] + t * (w[1] - c[1])};
    };

    for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
        std::sort(v.begin(), v.end(), [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
        if (diameter() < opt.tolerance) return {v[0].x, v[0].f, it};
        const Point c{(v[0].x[0] + v[1].x[0]) / 2.0, (v[0].x[1] + v[1].x[1]) / 2.0};
        const Point xr = clamp(along(c, v[2].x, -1.0));
        const double fr = f(xr);
        if (fr < v[0].f) {
            const Point xe = clamp(along(c, v[2].x, -2.0));
            const double fe = f(xe);
            v[2] = fe < fr ? Vertex{xe, fe} : Vertex{xr, fr};
        } else if (fr < v[1].f) {
            v[2] = {xr, fr};
        } else {
            const bool outside = fr < v[2].f;
            const Point xc = clamp(along(c, outside ? xr : v[2].x, 0.5));
            const double fc = f(xc);
            if (fc < std::min(fr, v[2].f)) {
                v[2] = {xc, fc};
            } else {
                for (std::size_t i = 1; i < 3; ++i) {
                    v[i].x = along(v[0].x, v[i].x, 0.5);
                    v[i].f = f(v[i].x);
                }
            }
        }
    }
    throw ConvergenceError("nelder_mead_2d: iteration cap reached", diameter());
}

// ---------------------------------------------------------------------------
// NFXP

struct NfxpOptions {
    std::array<double, 2> init{1.0, 1.0};  // (theta_maintain, theta_replace)
    double inner_tolerance = 1e-10;
    std::size_t inner_max_iters = 100000;
    NelderMeadOptions outer{};
};

struct NfxpResult {
    std::array<double, 2> theta_hat{};  // (theta_maintain, theta_replace)
    double neg_log_likelihood = 0.0;      // mean over records
    std::size_t iterations = 0;
    /// The estimate is not identified: an action is never observed, or the optimum sits on
    /// the search box because the likelihood keeps improving towards the boundary.
    bool flat_likelihood = false;
};

namespace detail {

/// Visit counts n[s][a] over mileage-only records.
inline Table choice_counts(const TransitionDataset& dataset, std::size_t n_states, std::size_t n_actions) {
    Table counts(n_states, n_actions);
    for (const auto& r : dataset.records) {
        if (r.state.size() != 1) throw InvalidArgument("nfxp_fit: dataset must be mileage-only (no dummies)");
        const auto s = static_cast<std::size_t>(r.mileage() - 1);
        const auto a = static_cast<std::size_t>(r.action);
        if (s >= n_states || a >= n_actions) throw InvalidArgument("nfxp_fit: record outside the model's domain");
        counts(s, a) += 1.0;
    }
    return counts;
}

}  // namespace detail

/// Rewards r(m, maintain) = -theta0 * m, r(., replace) = -theta1 on the bus-engine kernel.
inline TabularMDP bus_engine_with_theta(const BusEngineConfig& env, double theta_maintain, double theta_replace) {
    BusEngineConfig c = env;
    c.n_dummy = 0;
    c.theta_maintain = theta_maintain;
    c.theta_replace = theta_replace;
    return build_bus_engine(c);
}

/// Mean negative log-likelihood of the observed choices under the soft-optimal policy for theta.
/// `warm` (optional) carries the previous fixed point between calls.
inline double nfxp_neg_log_likelihood(const Table& counts, const BusEngineConfig& env, std::array<double, 2> theta,
                                      const NfxpOptions& opt = {}, QTable* warm = nullptr) {
    const auto mdp = bus_engine_with_theta(env, theta[0], theta[1]);
    QTable init = warm && warm->values.same_shape(counts) ? *warm : QTable{Table(mdp.n_states(), mdp.n_actions())};
    const auto q = soft_value_iteration(mdp, opt.inner_tolerance, opt.inner_max_iters, std::move(init));
    if (warm) *warm = q;
    double nll = 0.0, n = 0.0;
    for (std::size_t s = 0; s < counts.rows(); ++s) {
        const double lse = log_sum_exp(q.values.row(s));
        for (std::size_t a = 0; a < counts.cols(); ++a) {
            nll += counts(s, a) * (lse - q.values(s, a));
            n += counts(s, a);
        }
    }
    return n > 0.0 ? nll / n : 0.0;
}

/// Nested fixed point maximum likelihood with known transitions: Nelder-Mead over
/// (theta_maintain, theta_replace), soft value iteration inside every likelihood evaluation.
inline NfxpResult nfxp_fit(const TransitionDataset& dataset, const BusEngineConfig& env, const NfxpOptions& opt = {}) {
    if (dataset.records.empty()) throw InvalidArgument("nfxp_fit: empty dataset");
    const auto n_states = static_cast<std::size_t>(env.max_mileage);
    const auto counts = detail::choice_counts(dataset, n_states, BusEngineConfig::kActions);
    QTable warm{Table(n_states, BusEngineConfig::kActions)};
    const auto objective = [&](const std::array<double, 2>& theta) {
        return nfxp_neg_log_likelihood(counts, env, theta, opt, &warm);
    };
    const auto nm = nelder_mead_2d(objective, opt.init, opt.outer);
    NfxpResult out{nm.x, nm.value, nm.iterations, false};
    for (std::size_t a = 0; a < counts.cols(); ++a) {
        double n = 0.0;
        for (std::size_t s = 0; s < counts.rows(); ++s) n += counts(s, a);
        if (n == 0.0) out.flat_likelihood = true;
    }
    const double slack = 10.0 * opt.outer.tolerance;
    for (std::size_t i = 0; i < 2; ++i)
        if (nm.x[i] <= opt.outer.lower[i] + slack || nm.x[i] >= opt.outer.upper[i] - slack) out.flat_likelihood = true;
    return out;
}

/// Reward estimates for each record from a fitted theta.
inline std::vector<double> nfxp_rewards(const NfxpResult& fit, const std::vector<TransitionRecord>& records) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records)
        out.push_back(r.action == static_cast<int>(BusEngineConfig::kReplace) ? -fit.theta_hat[1]
                                                                               : -fit.theta_hat[0] * r.mileage());
    return out;
}

// ---------------------------------------------------------------------------
// Behavioral cloning

/// NLL-only training of the Q network. Rewards are read through the deterministic identity
/// r = Q(s,a) - beta * V_Q(s') with the observed next state, which is biased by construction.
inline TrainedModel bc_fit(const TransitionDataset& dataset, const TrainingConfig& config,
                           const InputScaling& scaling = {}) {
    TrainingConfig cfg = config;
    cfg.deterministic_mode = false;
    return detail::train_impl(dataset, AnchorSpec{-1, {}}, cfg, scaling, false, false, "bc");
}

}  // namespace gladius
