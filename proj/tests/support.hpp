#pragma once

#include "gladius/dataset.hpp"
#include "gladius/mdp.hpp"
#include "gladius/rng.hpp"
#include "gladius/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>

namespace gladius::fixtures {

/// Dense random kernel and rewards in [-3, 3].
inline TabularMDP random_mdp(std::size_t n_states, std::size_t n_actions, double discount, std::uint64_t seed) {
    Engine gen(seed);
    std::uniform_real_distribution<double> u(0.05, 1.0), r(-3.0, 3.0);
    TabularMDP mdp(n_states, n_actions, discount);
    for (std::size_t s = 0; s < n_states; ++s) {
        for (std::size_t a = 0; a < n_actions; ++a) {
            mdp.reward(s, a) = r(gen);
            double total = 0.0;
            for (std::size_t sp = 0; sp < n_states; ++sp) total += mdp.prob(s, a, sp) = u(gen);
            for (std::size_t sp = 0; sp < n_states; ++sp) mdp.prob(s, a, sp) /= total;
        }
    }
    return mdp;
}

inline QTable random_q(std::size_t n_states, std::size_t n_actions, std::uint64_t seed, double scale = 5.0) {
    Engine gen(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    QTable q{Table(n_states, n_actions)};
    for (auto& v : q.values.data()) v = u(gen);
    return q;
}

/// Records of (s, a, s') repeated round(n / |states| * pi(a|s) * P(s'|s,a)) times: a data set
/// whose empirical frequencies equal the model's up to rounding.
inline TransitionDataset exact_frequency_dataset(const TabularMDP& mdp, const PolicyTable& pi,
                                                 const std::vector<std::size_t>& states, double n) {
    TransitionDataset d;
    d.meta.n_actions = static_cast<int>(mdp.n_actions());
    d.meta.max_state = static_cast<int>(mdp.n_states());
    for (auto s : states)
        for (std::size_t a = 0; a < mdp.n_actions(); ++a)
            for (std::size_t sp = 0; sp < mdp.n_states(); ++sp) {
                const auto c = std::lround(n / static_cast<double>(states.size()) * pi.probs(s, a) * mdp.prob(s, a, sp));
                for (long k = 0; k < c; ++k)
                    d.records.push_back({0, 0, {static_cast<int>(s) + 1}, static_cast<int>(a), {static_cast<int>(sp) + 1}});
            }
    return d;
}

/// Single linear layer on a one-hot state: output a at state s is table(s, a).
inline Network tabular_network(const Table& table) {
    MlpSpec spec{table.rows(), {}, table.cols(), Activation::ELU};
    Network n{spec, zero_params(spec)};
    for (std::size_t s = 0; s < table.rows(); ++s)
        for (std::size_t a = 0; a < table.cols(); ++a) n.params.values[a * table.rows() + s] = table(s, a);
    return n;
}

/// Linear network with zero weights: constant outputs equal to the biases.
inline Network constant_network(std::size_t input_dim, const std::vector<double>& outputs) {
    MlpSpec spec{input_dim, {}, outputs.size(), Activation::ELU};
    Network n{spec, zero_params(spec)};
    for (std::size_t a = 0; a < outputs.size(); ++a) n.params.values[input_dim * outputs.size() + a] = outputs[a];
    return n;
}

inline std::vector<double> one_hot(std::size_t n, std::size_t i) {
    std::vector<double> v(n, 0.0);
    v[i] = 1.0;
    return v;
}

inline void push_row(EncodedDataset& d, const std::vector<double>& s, int a, const std::vector<double>& sp, bool anchor,
              double reward, double weight) {
    d.input_dim = s.size();
    d.state_inputs.insert(d.state_inputs.end(), s.begin(), s.end());
    d.next_inputs.insert(d.next_inputs.end(), sp.begin(), sp.end());
    d.actions.push_back(a);
    d.is_anchor.push_back(anchor);
    d.anchor_reward.push_back(reward);
    d.weight.push_back(weight);
}

inline EncodedDataset random_encoded(std::size_t dim, std::size_t n_actions, std::uint64_t seed) {
    Engine gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    EncodedDataset d;
    const std::size_t n = 6 + gen() % 7;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(dim), sp(dim);
        for (auto& x : s) x = normal(gen);
        for (auto& x : sp) x = normal(gen);
        const int a = static_cast<int>(gen() % n_actions);
        push_row(d, s, a, sp, i == 0 || gen() % 2, -1.0 - 4.0 * uniform01(gen), 1.0 + static_cast<double>(gen() % 3));
    }
    return d;
}

inline Network random_network(std::size_t dim, std::size_t n_actions, std::uint64_t seed) {
    Engine gen(seed);
    MlpSpec spec{dim, {}, n_actions, seed % 2 ? Activation::Tanh : Activation::ELU};
    for (std::size_t l = 0, layers = 1 + gen() % 2; l < layers; ++l) spec.hidden_layers.push_back(2 + gen() % 6);
    Network n{spec, init_params(spec, seed)};
    for (auto& v : n.params.values) v += 0.1 * (uniform01(gen) - 0.5);
    return n;
}

inline std::vector<std::size_t> all_rows(const EncodedDataset& d) {
    std::vector<std::size_t> rows(d.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

inline double rel_err(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

}  // namespace gladius::fixtures
