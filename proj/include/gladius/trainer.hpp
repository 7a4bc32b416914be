#pragma once

#include "gladius/dataset.hpp"
#include "gladius/encoding.hpp"
#include "gladius/errors.hpp"
#include "gladius/mdp.hpp"
#include "gladius/mlp.hpp"
#include "gladius/rng.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gladius {

/// A network and its parameters.
struct Network {
    MlpSpec spec;
    ParamVector params;

    std::span<const double> eval(std::span<const double> input, MlpTape& tape) const {
        return forward(spec, params, input, tape);
    }

    friend bool operator==(const Network&, const Network&) = default;
};

/// Step-size schedule c1 / (c2 + t), or the constant c1 / c2 when `constant` is set.
struct StepSchedule {
    double c1 = 1.0;
    double c2 = 1.0;
    bool constant = false;

    double at(std::size_t t) const {
        return constant ? c1 / c2 : decayed_step_size(static_cast<double>(t), c1, c2);
    }

    friend bool operator==(const StepSchedule&, const StepSchedule&) = default;
};

enum class OptimizerKind { SGD, Adam };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::SGD ? "sgd" : "adam"; }

inline OptimizerKind optimizer_from_string(const std::string& name) {
    if (name == "sgd") return OptimizerKind::SGD;
    if (name == "adam") return OptimizerKind::Adam;
    throw InvalidArgument("unknown optimizer '" + name + "'");
}

struct TrainingConfig {
    std::size_t epochs = 5000;  // outer iterations T
    std::size_t batch_size = 512;
    StepSchedule lr_q{4.0, 100.0};
    StepSchedule lr_zeta{40.0, 100.0};
    /// Step on the shared output level (see TrainedModel) after 1/(1-beta)^2 preconditioning.
    /// 0.5 is an exact Newton step on the level for the Bellman term.
    StepSchedule lr_level{0.5, 1.0, true};
    double discount = 0.95;
    std::uint64_t seed = 0;
    bool deterministic_mode = false;
    /// Use one batch for every term instead of separate B1 / B2 draws.
    bool single_batch = false;
    /// When the training set has at most this many distinct transitions, every iteration uses
    /// all of them (B1 = B2 = D) instead of sampled batches. 0 always samples.
    std::size_t full_batch_rows = 4096;
    std::size_t eval_every = 100;
    std::vector<std::size_t> hidden_layers{10, 10};
    Activation activation = Activation::ELU;
    OptimizerKind optimizer = OptimizerKind::Adam;

    void validate() const {
        if (epochs < 1) throw InvalidArgument("TrainingConfig: epochs must be >= 1");
        if (batch_size < 1) throw InvalidArgument("TrainingConfig: batch_size must be >= 1");
        if (eval_every < 1) throw InvalidArgument("TrainingConfig: eval_every must be >= 1");
        for (const auto* s : {&lr_q, &lr_zeta, &lr_level})
            if (!(s->c1 > 0.0) || !(s->c2 > 0.0)) throw InvalidArgument("TrainingConfig: schedules must be positive");
        if (!(discount >= 0.0 && discount < 1.0)) throw InvalidArgument("TrainingConfig: discount must lie in [0, 1)");
    }

    friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct LossRecord {
    std::size_t iteration = 0;
    double nll = 0.0;
    double be = 0.0;
    double d_term = 0.0;

    friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

/// Q(s,a) = q_net(s,a) + level and, when present, zeta(s,a) = zeta_net(s,a) + level.
/// The shared level carries the constant mode that the Bellman term pins down only with
/// curvature (1 - beta)^2; the difference V_Q(s') - zeta(s,a) does not depend on it.
struct TrainedModel {
    std::string method = "gladius";
    Network q_net;
    std::optional<Network> zeta_net;  // absent for the deterministic and BC variants
    double level = 0.0;
    InputScaling scaling;
    AnchorSpec anchor;
    TrainingConfig config;
    std::vector<LossRecord> history;
    std::size_t batches_without_anchor = 0;

    friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

/// A loss value together with its gradient w.r.t. one network's parameters.
struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;
    std::size_t count = 0;  // records that contributed
    double level_gradient = 0.0;
};

namespace detail {

inline void softmax_into(std::span<const double> logits, double lse, std::span<double> out) {
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - lse);
}

}  // namespace detail

/// Mean over the batch of -[Q(s,a) - logsumexp Q(s,.)], gradient w.r.t. the Q parameters.
inline LossAndGradient nll_loss(const Network& q, const EncodedDataset& data, std::span<const std::size_t> batch) {
    if (batch.empty()) throw InvalidArgument("nll_loss: empty batch");
    LossAndGradient out{0.0, std::vector<double>(q.params.size(), 0.0), batch.size()};
    MlpTape tape;
    std::vector<double> cot(q.spec.output_dim);
    const double scale = 1.0 / data.total_weight(batch);
    for (auto i : batch) {
        const double w = scale * data.weight[i];
        const auto logits = q.eval(data.state(i), tape);
        const double lse = log_sum_exp(logits);
        const auto a = static_cast<std::size_t>(data.actions[i]);
        out.loss += w * (lse - logits[a]);
        detail::softmax_into(logits, lse, cot);
        cot[a] -= 1.0;
        for (auto& c : cot) c *= w;
        accumulate_backward(q.spec, q.params, tape, cot, out.gradient);
    }
    return out;
}

/// Sample Bellman target r(s, a_s) + beta * V_Q(s') for an anchor-action record.
inline double td_target(const Network& q, const TransitionRecord& record, const AnchorSpec& anchor,
                        const InputScaling& scaling, double discount, double level = 0.0) {
    if (record.action != anchor.action)
        throw InvalidArgument("td_target: record action is not the anchor action");
    MlpTape tape;
    const auto next = q.eval(scaling.encode(record.next_state), tape);
    return anchor.known_reward(record.state) + discount * (log_sum_exp(next) + level);
}

/// Mean over anchor-action records of (T̂Q - Q(s,a))^2 - beta^2 (V_Q(s') - zeta(s,a))^2.
/// zeta is held fixed; the gradient flows through Q(s,a) and both occurrences of V_Q(s').
/// `d_term` (optional) receives the mean of (V_Q(s') - zeta(s,a))^2 over the same records.
/// Pass no zeta network to drop the correction term (deterministic transitions).
/// `level` is the shared output level added to Q and zeta (see TrainedModel).
inline LossAndGradient bellman_loss_corrected(const Network& q, const Network* zeta, const EncodedDataset& data,
                                              std::span<const std::size_t> batch, double discount,
                                              double* d_term = nullptr, double level = 0.0) {
    LossAndGradient out{0.0, std::vector<double>(q.params.size(), 0.0), 0};
    for (auto i : batch) out.count += data.is_anchor[i];
    if (d_term) *d_term = 0.0;
    if (out.count == 0) return out;

    MlpTape tape, next_tape, zeta_tape;
    const auto n_actions = q.spec.output_dim;
    std::vector<double> cot(n_actions), next_logits(n_actions), pi_next(n_actions);
    const double scale = 1.0 / data.total_weight(batch, true);
    const double b2 = discount * discount;
    for (auto i : batch) {
        if (!data.is_anchor[i]) continue;
        const double w = scale * data.weight[i];
        const auto a = static_cast<std::size_t>(data.actions[i]);

        const auto nl = q.eval(data.next(i), next_tape);
        next_logits.assign(nl.begin(), nl.end());
        const double v_next = log_sum_exp(next_logits);
        detail::softmax_into(next_logits, v_next, pi_next);

        double z = 0.0;
        if (zeta) z = zeta->eval(data.state(i), zeta_tape)[a];

        const double q_sa = q.eval(data.state(i), tape)[a];
        const double delta = data.anchor_reward[i] + discount * v_next - q_sa - (1.0 - discount) * level;
        const double gap = v_next - z;
        const double correction = zeta ? b2 * gap * gap : 0.0;
        out.loss += w * (delta * delta - correction);
        if (d_term && zeta) *d_term += w * gap * gap;
        out.level_gradient += -2.0 * delta * (1.0 - discount) * w;

        // d/dQ(s,.): -2 delta e_a.
        std::fill(cot.begin(), cot.end(), 0.0);
        cot[a] = -2.0 * delta * w;
        accumulate_backward(q.spec, q.params, tape, cot, out.gradient);

        // d/dQ(s',.): (2 delta beta - 2 beta^2 gap) * softmax(Q(s',.)).
        const double coeff = (2.0 * delta * discount - (zeta ? 2.0 * b2 * gap : 0.0)) * w;
        for (std::size_t k = 0; k < n_actions; ++k) cot[k] = coeff * pi_next[k];
        accumulate_backward(q.spec, q.params, next_tape, cot, out.gradient);
    }
    return out;
}

/// Mean over every batch record of (V_Q(s') - zeta(s,a))^2, gradient w.r.t. zeta only.
inline LossAndGradient zeta_ascent_loss(const Network& zeta, const Network& q, const EncodedDataset& data,
                                        std::span<const std::size_t> batch, double /*discount*/ = 0.0) {
    if (batch.empty()) throw InvalidArgument("zeta_ascent_loss: empty batch");
    LossAndGradient out{0.0, std::vector<double>(zeta.params.size(), 0.0), batch.size()};
    MlpTape tape, q_tape;
    std::vector<double> cot(zeta.spec.output_dim, 0.0);
    const double scale = 1.0 / data.total_weight(batch);
    for (auto i : batch) {
        const double w = scale * data.weight[i];
        const double v_next = log_sum_exp(q.eval(data.next(i), q_tape));
        const auto a = static_cast<std::size_t>(data.actions[i]);
        const double z = zeta.eval(data.state(i), tape)[a];
        const double gap = v_next - z;
        out.loss += w * gap * gap;
        std::fill(cot.begin(), cot.end(), 0.0);
        cot[a] = -2.0 * gap * w;
        accumulate_backward(zeta.spec, zeta.params, tape, cot, out.gradient);
    }
    return out;
}

/// Per-parameter optimizer state. SGD uses the schedule directly; Adam uses it as its
/// base step with the usual bias-corrected moment estimates (beta1 0.9, beta2 0.99).
class Optimizer {
public:
    Optimizer(OptimizerKind kind, StepSchedule schedule, std::size_t n_params)
        : kind_(kind), schedule_(schedule) {
        if (kind_ == OptimizerKind::Adam) {
            m_.assign(n_params, 0.0);
            v_.assign(n_params, 0.0);
        }
    }

    void step(ParamVector& params, std::span<const double> grad, std::size_t t) {
        const double lr = schedule_.at(t);
        if (kind_ == OptimizerKind::SGD) {
            params = sgd_step(params, grad, lr, t);
            return;
        }
        constexpr double b1 = 0.9, b2 = 0.99, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < grad.size(); ++i) {
            if (!std::isfinite(grad[i])) throw DivergenceError("non-finite gradient", t);
            m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
            v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
            params.values[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
        }
    }

private:
    OptimizerKind kind_;
    StepSchedule schedule_;
    std::vector<double> m_, v_;
};

namespace detail {

inline void draw_batch(Engine& gen, std::size_t n, std::vector<std::size_t>& out) {
    for (auto& i : out) i = static_cast<std::size_t>(gen() % n);
}

inline void check_finite(double loss, std::size_t t) {
    if (!std::isfinite(loss)) throw DivergenceError("non-finite loss", t);
}

inline Network make_network(std::size_t input_dim, std::size_t n_actions, const TrainingConfig& cfg,
                            std::uint64_t seed) {
    MlpSpec spec{input_dim, cfg.hidden_layers, n_actions, cfg.activation};
    return {spec, init_params(spec, seed)};
}

inline int infer_n_actions(const TransitionDataset& dataset) {
    int n = dataset.meta.n_actions;
    for (const auto& r : dataset.records) n = std::max(n, r.action + 1);
    return n;
}

/// Level that zeroes the mean TD error over all anchor records for the initial network.
inline double initial_level(const Network& q, const EncodedDataset& data, double discount) {
    MlpTape tape;
    double sum = 0.0, total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!data.is_anchor[i]) continue;
        const double v_next = log_sum_exp(q.eval(data.next(i), tape));
        const double q_sa = q.eval(data.state(i), tape)[static_cast<std::size_t>(data.actions[i])];
        sum += data.weight[i] * (data.anchor_reward[i] + discount * v_next - q_sa);
        total += data.weight[i];
    }
    return total > 0.0 ? sum / total / (1.0 - discount) : 0.0;
}

}  // namespace detail

/// Alternating ascent (zeta) / descent (Q) on the empirical risk.
/// Iteration t: draw B1, B2 uniformly with replacement (or take B1 = B2 = D on small data sets,
/// see TrainingConfig::full_batch_rows); one step on zeta against (V_Q(s') - zeta)^2 over B2;
/// one step on Q against NLL(B2) + corrected Bellman loss(B1).
inline TrainedModel gladius_train(const TransitionDataset& dataset, const AnchorSpec& anchor,
                                  const TrainingConfig& config, const InputScaling& scaling = {});

/// Deterministic-transition variant: a single Q network, NLL + squared TD on anchor records.
inline TrainedModel gladius_train_deterministic(const TransitionDataset& dataset, const AnchorSpec& anchor,
                                                const TrainingConfig& config, const InputScaling& scaling = {});

namespace detail {

inline TrainedModel train_impl(const TransitionDataset& dataset, const AnchorSpec& anchor,
                               const TrainingConfig& config, const InputScaling& scaling, bool with_zeta,
                               bool with_bellman, const std::string& method) {
    config.validate();
    if (dataset.records.empty()) throw InvalidArgument("training requires a non-empty dataset");
    if (dataset.meta.env && dataset.meta.env->discount != config.discount)
        throw InvalidArgument("training discount " + std::to_string(config.discount) +
                              " differs from the data's environment discount " +
                              std::to_string(dataset.meta.env->discount));
    // Merging duplicate transitions leaves full-batch sums unchanged and makes them cheap.
    auto data = encode_dataset(dataset.records, anchor, scaling, config.full_batch_rows > 0);
    const bool full_batch = data.size() <= config.full_batch_rows;
    if (!full_batch && config.full_batch_rows > 0) data = encode_dataset(dataset.records, anchor, scaling);
    const auto n_actions = static_cast<std::size_t>(infer_n_actions(dataset));
    if (with_bellman && (anchor.action < 0 || static_cast<std::size_t>(anchor.action) >= n_actions))
        throw InvalidArgument("anchor action out of range");

    TrainedModel model;
    model.method = method;
    model.scaling = scaling;
    model.anchor = anchor;
    model.config = config;
    model.q_net = make_network(data.input_dim, n_actions, config, derive_seed(config.seed, 1));
    if (with_zeta) model.zeta_net = make_network(data.input_dim, n_actions, config, derive_seed(config.seed, 2));

    Optimizer q_opt(config.optimizer, config.lr_q, model.q_net.params.size());
    std::optional<Optimizer> z_opt;
    if (with_zeta) z_opt.emplace(config.optimizer, config.lr_zeta, model.zeta_net->params.size());

    if (with_bellman) model.level = initial_level(model.q_net, data, config.discount);

    Engine gen = make_engine(config.seed, 3);
    std::vector<std::size_t> b1(config.batch_size), b2(config.batch_size);
    const auto n = data.size();

    if (full_batch) {
        b2.resize(n);
        std::iota(b2.begin(), b2.end(), std::size_t{0});
        b1 = b2;
    }

    for (std::size_t t = 1; t <= config.epochs; ++t) {
        if (!full_batch) {
            draw_batch(gen, n, b2);
            if (config.single_batch) b1 = b2;
            else draw_batch(gen, n, b1);
        }

        LossRecord rec{t, 0.0, 0.0, 0.0};
        if (with_zeta) {
            const auto d = zeta_ascent_loss(*model.zeta_net, model.q_net, data, b2, config.discount);
            check_finite(d.loss, t);
            z_opt->step(model.zeta_net->params, d.gradient, t);
        }

        auto total = nll_loss(model.q_net, data, b2);
        rec.nll = total.loss;
        if (with_bellman) {
            const Network* zeta = with_zeta ? &*model.zeta_net : nullptr;
            const auto& be_batch = config.deterministic_mode || !with_zeta ? b2 : b1;
            const auto be = bellman_loss_corrected(model.q_net, zeta, data, be_batch, config.discount, &rec.d_term,
                                                   model.level);
            if (be.count == 0) ++model.batches_without_anchor;
            rec.be = be.loss;
            for (std::size_t i = 0; i < total.gradient.size(); ++i) total.gradient[i] += be.gradient[i];
            total.level_gradient = be.level_gradient;
        }
        check_finite(rec.nll + rec.be, t);
        q_opt.step(model.q_net.params, total.gradient, t);
        const double kappa = 1.0 / (1.0 - config.discount);
        model.level -= config.lr_level.at(t) * kappa * kappa * total.level_gradient;

        if (t % config.eval_every == 0 || t == config.epochs) model.history.push_back(rec);
    }
    return model;
}

}  // namespace detail

inline TrainedModel gladius_train(const TransitionDataset& dataset, const AnchorSpec& anchor,
                                  const TrainingConfig& config, const InputScaling& scaling) {
    if (config.deterministic_mode) return gladius_train_deterministic(dataset, anchor, config, scaling);
    return detail::train_impl(dataset, anchor, config, scaling, true, true, "gladius");
}

/// Throws ValidationError when one (state, action) pair is observed with two next states.
inline void check_deterministic(const TransitionDataset& dataset) {
    std::map<std::pair<Observation, int>, Observation> seen;
    for (const auto& r : dataset.records) {
        auto [it, inserted] = seen.try_emplace({r.state, r.action}, r.next_state);
        if (!inserted && it->second != r.next_state)
            throw ValidationError("transitions are not deterministic: (state " + std::to_string(r.state[0]) +
                                  ", action " + std::to_string(r.action) + ") has several next states");
    }
}

inline TrainedModel gladius_train_deterministic(const TransitionDataset& dataset, const AnchorSpec& anchor,
                                                const TrainingConfig& config, const InputScaling& scaling) {
    check_deterministic(dataset);
    TrainingConfig cfg = config;
    cfg.deterministic_mode = true;
    return detail::train_impl(dataset, anchor, cfg, scaling, false, true, "gladius_det");
}

/// One (observation, action) query.
struct StateAction {
    Observation state;
    int action = 0;
};

/// r̂(s,a) = Q̂(s,a) - beta * ζ̂(s,a). Requires a model trained with the zeta network.
inline std::vector<double> recover_rewards(const TrainedModel& model, const std::vector<StateAction>& queries) {
    if (!model.zeta_net) throw InvalidArgument("recover_rewards: model has no zeta network");
    std::vector<double> out;
    out.reserve(queries.size());
    MlpTape tape;
    const double beta = model.config.discount;
    for (const auto& qa : queries) {
        const auto x = model.scaling.encode(qa.state);
        const auto a = static_cast<std::size_t>(qa.action);
        const double q = model.q_net.eval(x, tape)[a] + model.level;
        const double z = model.zeta_net->eval(x, tape)[a] + model.level;
        out.push_back(q - beta * z);
    }
    return out;
}

/// Reward estimate for each observed transition. Uses ζ̂ when present, otherwise the
/// deterministic identity r̂ = Q̂(s,a) - beta * V_Q̂(s') with the observed next state.
inline std::vector<double> recover_rewards(const TrainedModel& model, const std::vector<TransitionRecord>& records) {
    std::vector<double> out;
    out.reserve(records.size());
    MlpTape tape;
    const double beta = model.config.discount;
    for (const auto& r : records) {
        const auto x = model.scaling.encode(r.state);
        const auto a = static_cast<std::size_t>(r.action);
        const double q = model.q_net.eval(x, tape)[a] + model.level;
        if (model.zeta_net) {
            out.push_back(q - beta * (model.zeta_net->eval(x, tape)[a] + model.level));
        } else {
            const double v = log_sum_exp(model.q_net.eval(model.scaling.encode(r.next_state), tape)) + model.level;
            out.push_back(q - beta * v);
        }
    }
    return out;
}

/// Q̂(s, a) for each query.
inline std::vector<double> predict_q(const TrainedModel& model, const std::vector<StateAction>& queries) {
    std::vector<double> out;
    out.reserve(queries.size());
    MlpTape tape;
    for (const auto& qa : queries)
        out.push_back(model.q_net.eval(model.scaling.encode(qa.state), tape)[static_cast<std::size_t>(qa.action)] +
                      model.level);
    return out;
}

}  // namespace gladius
