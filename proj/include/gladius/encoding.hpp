#pragma once

#include "gladius/dataset.hpp"
#include "gladius/errors.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace gladius {

/// Observation -> network input: state label / state_scale, dummies / dummy_scale.
struct InputScaling {
    double state_scale = 20.0;
    double dummy_scale = 10.0;

    void encode(const Observation& obs, std::span<double> out) const {
        out[0] = obs[0] / state_scale;
        for (std::size_t i = 1; i < obs.size(); ++i) out[i] = obs[i] / dummy_scale;
    }

    std::vector<double> encode(const Observation& obs) const {
        std::vector<double> out(obs.size());
        encode(obs, out);
        return out;
    }

    friend bool operator==(const InputScaling&, const InputScaling&) = default;
};

/// Action whose reward is known to the learner, with that reward per state label.
struct AnchorSpec {
    int action = 1;
    std::vector<double> reward_by_state;  // index = state label - 1

    static AnchorSpec constant(int action, double reward, int max_state) {
        return {action, std::vector<double>(static_cast<std::size_t>(max_state), reward)};
    }

    double known_reward(const Observation& obs) const {
        const auto idx = static_cast<std::size_t>(obs.at(0) - 1);
        if (idx >= reward_by_state.size())
            throw InvalidArgument("AnchorSpec: no known reward for state label " + std::to_string(obs[0]));
        return reward_by_state[idx];
    }

    friend bool operator==(const AnchorSpec&, const AnchorSpec&) = default;
};

/// Training records with network inputs precomputed, laid out contiguously.
struct EncodedDataset {
    std::size_t input_dim = 0;
    std::vector<double> state_inputs;  // n * input_dim
    std::vector<double> next_inputs;   // n * input_dim
    std::vector<int> actions;
    std::vector<unsigned char> is_anchor;
    std::vector<double> anchor_reward;  // valid where is_anchor
    std::vector<double> weight;         // multiplicity of each row

    std::size_t size() const noexcept { return actions.size(); }

    /// Sum of row weights over `rows`, optionally restricted to anchor rows.
    double total_weight(std::span<const std::size_t> rows, bool anchors_only = false) const {
        double w = 0.0;
        for (auto i : rows)
            if (!anchors_only || is_anchor[i]) w += weight[i];
        return w;
    }

    std::span<const double> state(std::size_t i) const { return {state_inputs.data() + i * input_dim, input_dim}; }
    std::span<const double> next(std::size_t i) const { return {next_inputs.data() + i * input_dim, input_dim}; }
};

/// Encodes every record as one row of weight 1. With `merge_duplicates`, records sharing
/// (state, action, next state) collapse into a single row weighted by their count, in order
/// of first appearance; any weighted sum over all rows is unchanged.
inline EncodedDataset encode_dataset(const std::vector<TransitionRecord>& records, const AnchorSpec& anchor,
                                     const InputScaling& scaling, bool merge_duplicates = false) {
    EncodedDataset out;
    if (records.empty()) return out;
    out.input_dim = records.front().state.size();
    const auto d = out.input_dim;
    std::map<std::tuple<Observation, int, Observation>, std::size_t> rows;
    for (const auto& r : records) {
        if (r.state.size() != d || r.next_state.size() != d)
            throw InvalidArgument("encode_dataset: inconsistent observation lengths");
        if (merge_duplicates) {
            auto [it, inserted] = rows.try_emplace({r.state, r.action, r.next_state}, out.size());
            if (!inserted) {
                out.weight[it->second] += 1.0;
                continue;
            }
        }
        const auto i = out.size();
        out.state_inputs.resize((i + 1) * d);
        out.next_inputs.resize((i + 1) * d);
        scaling.encode(r.state, {out.state_inputs.data() + i * d, d});
        scaling.encode(r.next_state, {out.next_inputs.data() + i * d, d});
        out.actions.push_back(r.action);
        const bool is_anchor = r.action == anchor.action;
        out.is_anchor.push_back(is_anchor);
        out.anchor_reward.push_back(is_anchor ? anchor.known_reward(r.state) : 0.0);
        out.weight.push_back(1.0);
    }
    return out;
}

}  // namespace gladius
