#pragma once

#include "gladius/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gladius {

/// ln sum_i exp(v_i), shifted by the maximum so large magnitudes do not overflow.
inline double log_sum_exp(std::span<const double> values) {
    if (values.empty()) throw InvalidArgument("log_sum_exp: empty input");
    const double top = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(top)) throw InvalidArgument("log_sum_exp: non-finite input");
    double acc = 0.0;
    for (double v : values) acc += std::exp(v - top);
    return top + std::log(acc);
}

/// Dense row-major table indexed by (state, action).
class Table {
public:
    Table() = default;
    Table(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const Table& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Table&, const Table&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Q[s][a].
struct QTable {
    Table values;
};

/// pi[s][a]; each row is a full-support distribution.
struct PolicyTable {
    Table probs;
};

/// Finite MDP with dense kernel P[s][a][s'], reward r[s][a] and discount in [0, 1).
class TabularMDP {
public:
    TabularMDP(std::size_t n_states, std::size_t n_actions, double discount)
        : n_states_(n_states),
          n_actions_(n_actions),
          discount_(discount),
          transition_(n_states * n_actions * n_states, 0.0),
          reward_(n_states, n_actions, 0.0) {
        if (n_states == 0 || n_actions == 0)
            throw InvalidArgument("TabularMDP: state and action counts must be positive");
        if (!(discount >= 0.0 && discount < 1.0))
            throw InvalidArgument("TabularMDP: discount must lie in [0, 1)");
    }

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_actions() const noexcept { return n_actions_; }
    double discount() const noexcept { return discount_; }
    void set_discount(double discount) {
        if (!(discount >= 0.0 && discount < 1.0))
            throw InvalidArgument("TabularMDP: discount must lie in [0, 1)");
        discount_ = discount;
    }

    double& prob(std::size_t s, std::size_t a, std::size_t next) {
        return transition_[(s * n_actions_ + a) * n_states_ + next];
    }
    double prob(std::size_t s, std::size_t a, std::size_t next) const {
        return transition_[(s * n_actions_ + a) * n_states_ + next];
    }
    std::span<const double> next_distribution(std::size_t s, std::size_t a) const {
        return {transition_.data() + (s * n_actions_ + a) * n_states_, n_states_};
    }

    double& reward(std::size_t s, std::size_t a) { return reward_(s, a); }
    double reward(std::size_t s, std::size_t a) const { return reward_(s, a); }
    const Table& rewards() const noexcept { return reward_; }

    /// Throws InvalidArgument unless every kernel row is a distribution and rewards are finite.
    void validate() const {
        for (std::size_t s = 0; s < n_states_; ++s) {
            for (std::size_t a = 0; a < n_actions_; ++a) {
                double total = 0.0;
                for (double p : next_distribution(s, a)) {
                    if (!(p >= 0.0)) throw InvalidArgument("TabularMDP: negative transition mass");
                    total += p;
                }
                if (std::abs(total - 1.0) > 1e-12)
                    throw InvalidArgument("TabularMDP: transition row (" + std::to_string(s) + ", " +
                                          std::to_string(a) + ") sums to " + std::to_string(total));
                if (!std::isfinite(reward_(s, a)))
                    throw InvalidArgument("TabularMDP: non-finite reward");
            }
        }
    }

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    double discount_;
    std::vector<double> transition_;
    Table reward_;
};

/// Mileage increment with its probability.
struct MileageJump {
    int increment = 1;
    double probability = 0.0;

    friend bool operator==(const MileageJump&, const MileageJump&) = default;
};

/// Rust's bus-engine replacement problem. Action 0 maintains, action 1 replaces.
struct BusEngineConfig {
    double theta_maintain = 1.0;
    double theta_replace = 5.0;
    int max_mileage = 20;
    std::vector<MileageJump> jump_support{{1, 0.25}, {2, 0.25}, {3, 0.25}, {4, 0.25}};
    double discount = 0.95;
    int n_dummy = 0;
    int dummy_min = -10;
    int dummy_max = 10;
    /// Dummies redrawn every period (true) or once per trajectory (false).
    bool dummy_per_period = true;

    static constexpr std::size_t kMaintain = 0;
    static constexpr std::size_t kReplace = 1;
    static constexpr std::size_t kActions = 2;

    void validate() const {
        if (max_mileage < 2) throw InvalidArgument("BusEngineConfig: max_mileage must be >= 2");
        if (n_dummy < 0) throw InvalidArgument("BusEngineConfig: n_dummy must be >= 0");
        if (dummy_min > dummy_max) throw InvalidArgument("BusEngineConfig: empty dummy support");
        if (!(discount >= 0.0 && discount < 1.0))
            throw InvalidArgument("BusEngineConfig: discount must lie in [0, 1)");
        if (jump_support.empty()) throw InvalidArgument("BusEngineConfig: empty jump support");
        double total = 0.0;
        for (const auto& j : jump_support) {
            if (j.probability < 0.0 || j.increment < 0)
                throw InvalidArgument("BusEngineConfig: invalid jump entry");
            total += j.probability;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw InvalidArgument("BusEngineConfig: jump probabilities must sum to 1");
    }

    /// Per-period utility of taking `action` at `mileage` (1-based).
    double reward(int mileage, std::size_t action) const {
        return action == kReplace ? -theta_replace : -theta_maintain * mileage;
    }

    friend bool operator==(const BusEngineConfig&, const BusEngineConfig&) = default;
};

/// Mileage m is state index m - 1. Jumps beyond max_mileage pile up on max_mileage.
inline TabularMDP build_bus_engine(const BusEngineConfig& config) {
    config.validate();
    if (config.n_dummy != 0)
        throw InvalidArgument("build_bus_engine: dummies are added at the dataset layer, n_dummy must be 0");
    const auto n = static_cast<std::size_t>(config.max_mileage);
    TabularMDP mdp(n, BusEngineConfig::kActions, config.discount);
    for (std::size_t s = 0; s < n; ++s) {
        const int mileage = static_cast<int>(s) + 1;
        mdp.reward(s, BusEngineConfig::kMaintain) = config.reward(mileage, BusEngineConfig::kMaintain);
        mdp.reward(s, BusEngineConfig::kReplace) = config.reward(mileage, BusEngineConfig::kReplace);
        for (const auto& jump : config.jump_support) {
            const int landed = std::min(mileage + jump.increment, config.max_mileage);
            mdp.prob(s, BusEngineConfig::kMaintain, static_cast<std::size_t>(landed - 1)) += jump.probability;
        }
        mdp.prob(s, BusEngineConfig::kReplace, 0) = 1.0;
    }
    mdp.validate();
    return mdp;
}

/// V_Q(s) = ln sum_a exp Q(s, a).
inline std::vector<double> state_value(const QTable& q) {
    std::vector<double> v(q.values.rows());
    for (std::size_t s = 0; s < v.size(); ++s) v[s] = log_sum_exp(q.values.row(s));
    return v;
}

/// Row-wise softmax.
inline PolicyTable soft_policy(const QTable& q) {
    PolicyTable pi{Table(q.values.rows(), q.values.cols())};
    for (std::size_t s = 0; s < q.values.rows(); ++s) {
        const auto row = q.values.row(s);
        const double lse = log_sum_exp(row);
        for (std::size_t a = 0; a < row.size(); ++a) pi.probs(s, a) = std::exp(row[a] - lse);
    }
    return pi;
}

inline void check_dimensions(const TabularMDP& mdp, const QTable& q) {
    if (q.values.rows() != mdp.n_states() || q.values.cols() != mdp.n_actions())
        throw InvalidArgument("QTable dimensions do not match the MDP");
}

/// Soft Bellman operator: (TQ)(s,a) = r(s,a) + beta * E_{s'}[V_Q(s')].
inline QTable soft_bellman(const TabularMDP& mdp, const QTable& q) {
    check_dimensions(mdp, q);
    const auto v = state_value(q);
    QTable out{Table(mdp.n_states(), mdp.n_actions())};
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            const auto next = mdp.next_distribution(s, a);
            double expected = 0.0;
            for (std::size_t sp = 0; sp < next.size(); ++sp) expected += next[sp] * v[sp];
            out.values(s, a) = mdp.reward(s, a) + mdp.discount() * expected;
        }
    }
    return out;
}

/// TQ - Q using the exact kernel.
inline Table bellman_residual(const TabularMDP& mdp, const QTable& q) {
    auto tq = soft_bellman(mdp, q);
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) tq.values(s, a) -= q.values(s, a);
    return std::move(tq.values);
}

/// One-sample TD error r(s,a) + beta V_Q(s') - Q(s,a).
inline double td_error(const TabularMDP& mdp, const QTable& q, std::size_t s, std::size_t a,
                       std::size_t next) {
    return mdp.reward(s, a) + mdp.discount() * log_sum_exp(q.values.row(next)) - q.values(s, a);
}

inline double sup_norm_distance(const Table& x, const Table& y) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.data().size(); ++i)
        worst = std::max(worst, std::abs(x.data()[i] - y.data()[i]));
    return worst;
}

struct SoftValueIterationStats {
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Iterates the soft Bellman operator from `init` and returns the last image TQ once it is
/// provably within `tolerance` of the fixed point: beta / (1 - beta) * ||TQ - Q||_inf <= tolerance.
/// The stopping residual is never looser than `tolerance` itself.
inline QTable soft_value_iteration(const TabularMDP& mdp, double tolerance, std::size_t max_iters,
                                   QTable init, SoftValueIterationStats* stats = nullptr) {
    if (!(tolerance > 0.0)) throw InvalidArgument("soft_value_iteration: tolerance must be positive");
    check_dimensions(mdp, init);
    QTable q = std::move(init);
    const double beta = mdp.discount();
    const double stop = beta > 0.0 ? tolerance * std::min(1.0, (1.0 - beta) / beta) : tolerance;
    double residual = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= max_iters; ++it) {
        QTable next = soft_bellman(mdp, q);
        residual = sup_norm_distance(next.values, q.values);
        q = std::move(next);
        if (residual <= stop) {
            if (stats) *stats = {it, residual};
            return q;
        }
    }
    throw ConvergenceError("soft_value_iteration: no convergence after " + std::to_string(max_iters) +
                               " iterations",
                           residual);
}

inline QTable soft_value_iteration(const TabularMDP& mdp, double tolerance, std::size_t max_iters,
                                   SoftValueIterationStats* stats = nullptr) {
    return soft_value_iteration(mdp, tolerance, max_iters,
                                QTable{Table(mdp.n_states(), mdp.n_actions())}, stats);
}

}  // namespace gladius
