#pragma once

#include "gladius/baselines.hpp"
#include "gladius/checkpoint.hpp"
#include "gladius/config_json.hpp"
#include "gladius/dataset.hpp"
#include "gladius/evaluation.hpp"
#include "gladius/mdp.hpp"
#include "gladius/trainer.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace gladius {

enum class Method { Gladius, GladiusDet, BC, Nfxp, Oracle };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::Gladius: return "gladius";
        case Method::GladiusDet: return "gladius_det";
        case Method::BC: return "bc";
        case Method::Nfxp: return "nfxp";
        case Method::Oracle: return "oracle";
    }
    return "?";
}

inline Method method_from_string(const std::string& name) {
    for (auto m : {Method::Gladius, Method::GladiusDet, Method::BC, Method::Nfxp, Method::Oracle})
        if (name == to_string(m)) return m;
    throw InvalidArgument("unknown method '" + name + "'");
}

struct DataConfig {
    std::int64_t n_traj = 1000;
    std::int64_t horizon = 100;
    std::uint64_t seed = 0;
    double split = 0.8;  // fraction of trajectories used for training
    bool eval_on_train = false;
};

struct ExperimentConfig {
    BusEngineConfig env;
    DataConfig data;
    Method method = Method::Gladius;
    TrainingConfig training;  // training.discount is taken from env.discount
    std::string output_dir = "out";
    double oracle_tolerance = 1e-10;
    std::size_t oracle_max_iters = 100000;
    std::size_t n_seeds = 2;
    std::size_t jobs = 1;

    void validate() const {
        env.validate();
        training.validate();
        if (data.n_traj < 1) throw InvalidArgument("data.n_traj must be >= 1");
        if (data.horizon < 1) throw InvalidArgument("data.horizon must be >= 1");
        if (!(data.split > 0.0 && data.split < 1.0)) throw InvalidArgument("data.split must lie in (0, 1)");
        if (!(oracle_tolerance > 0.0)) throw InvalidArgument("oracle_tolerance must be positive");
        if (n_seeds < 1) throw InvalidArgument("n_seeds must be >= 1");
        if (jobs < 1) throw InvalidArgument("jobs must be >= 1");
        if (output_dir.empty()) throw InvalidArgument("output_dir must not be empty");
    }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    nlohmann::json training = c.training;
    training.erase("discount");
    j = {{"env", c.env},
         {"data",
          {{"n_traj", c.data.n_traj},
           {"horizon", c.data.horizon},
           {"seed", c.data.seed},
           {"split", c.data.split},
           {"eval_on_train", c.data.eval_on_train}}},
         {"method", to_string(c.method)},
         {"training", training},
         {"output_dir", c.output_dir},
         {"oracle_tolerance", c.oracle_tolerance},
         {"oracle_max_iters", c.oracle_max_iters},
         {"n_seeds", c.n_seeds},
         {"jobs", c.jobs}};
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw InvalidArgument(where + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw InvalidArgument("unknown key '" + key + "' in " + where);
}

}  // namespace detail

/// Partial documents are accepted; unknown keys are rejected so typos do not pass silently.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    detail::reject_unknown_keys(j,
                                {"env", "data", "method", "training", "output_dir", "oracle_tolerance",
                                 "oracle_max_iters", "n_seeds", "jobs"},
                                "config");
    if (j.contains("env")) {
        detail::reject_unknown_keys(j.at("env"),
                                    {"theta_maintain", "theta_replace", "max_mileage", "jump_support", "discount",
                                     "n_dummy", "dummy_min", "dummy_max", "dummy_per_period"},
                                    "env");
        j.at("env").get_to(c.env);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::reject_unknown_keys(d, {"n_traj", "horizon", "seed", "split", "eval_on_train"}, "data");
        c.data.n_traj = d.value("n_traj", c.data.n_traj);
        c.data.horizon = d.value("horizon", c.data.horizon);
        c.data.seed = d.value("seed", c.data.seed);
        c.data.split = d.value("split", c.data.split);
        c.data.eval_on_train = d.value("eval_on_train", c.data.eval_on_train);
    }
    if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("training")) {
        detail::reject_unknown_keys(j.at("training"),
                                    {"epochs", "batch_size", "lr_q", "lr_zeta", "lr_level", "seed",
                                     "deterministic_mode", "single_batch", "full_batch_rows", "eval_every",
                                     "hidden_layers", "activation", "optimizer"},
                                    "training");
        j.at("training").get_to(c.training);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.oracle_tolerance = j.value("oracle_tolerance", c.oracle_tolerance);
    c.oracle_max_iters = j.value("oracle_max_iters", c.oracle_max_iters);
    c.n_seeds = j.value("n_seeds", c.n_seeds);
    c.jobs = j.value("jobs", c.jobs);
}

/// Reads a JSON config file; type errors and unknown keys surface as InvalidArgument.
inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config", path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return nlohmann::json::parse(buf.str()).get<ExperimentConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("config " + path + ": " + e.what());
    }
}

/// The bus engine without dummies; the learner's view adds them at the data layer.
inline TabularMDP oracle_mdp(const BusEngineConfig& env) {
    BusEngineConfig plain = env;
    plain.n_dummy = 0;
    return build_bus_engine(plain);
}

inline QTable oracle_q(const ExperimentConfig& cfg) {
    return soft_value_iteration(oracle_mdp(cfg.env), cfg.oracle_tolerance, cfg.oracle_max_iters);
}

/// Hash identifying the environment (dummies included) that produced a data set.
inline std::string env_hash(const BusEngineConfig& env) { return config_hash(env); }

/// Expert rollouts under the soft-optimal policy, with dummies when env.n_dummy > 0.
inline TransitionDataset generate_dataset(const ExperimentConfig& cfg, const QTable& q_star) {
    const auto mdp = oracle_mdp(cfg.env);
    auto data = sample_trajectories(mdp, soft_policy(q_star), cfg.data.n_traj, cfg.data.horizon, cfg.data.seed);
    BusEngineConfig plain = cfg.env;
    plain.n_dummy = 0;
    data.meta.env = plain;
    if (cfg.env.n_dummy > 0)
        data = augment_with_dummies(data, cfg.env.n_dummy, derive_seed(cfg.data.seed, 0xD0D0D0D0ULL),
                                    cfg.env.dummy_per_period, cfg.env.dummy_min, cfg.env.dummy_max);
    data.meta.config_hash = env_hash(*data.meta.env);
    return data;
}

inline TransitionDataset generate_dataset(const ExperimentConfig& cfg) { return generate_dataset(cfg, oracle_q(cfg)); }

/// The learner knows the replacement reward at every mileage.
inline AnchorSpec bus_anchor(const BusEngineConfig& env) {
    return AnchorSpec::constant(static_cast<int>(BusEngineConfig::kReplace), -env.theta_replace, env.max_mileage);
}

inline Checkpoint train_method(const ExperimentConfig& cfg, const TransitionDataset& train) {
    if (!train.meta.env) throw InvalidArgument("dataset carries no environment; cannot train against it");
    Checkpoint ck;
    ck.method = to_string(cfg.method);
    ck.config_hash = train.meta.config_hash;
    ck.seed = cfg.training.seed;
    TrainingConfig tc = cfg.training;
    tc.discount = cfg.env.discount;
    switch (cfg.method) {
        case Method::Gladius: ck.model = gladius_train(train, bus_anchor(cfg.env), tc); break;
        case Method::GladiusDet:
            try {
                check_deterministic(train);
            } catch (const ValidationError& e) {
                throw InvalidArgument(std::string("method gladius_det: ") + e.what());
            }
            ck.model = gladius_train_deterministic(train, bus_anchor(cfg.env), tc);
            break;
        case Method::BC: ck.model = bc_fit(train, tc); break;
        case Method::Nfxp: ck.nfxp = nfxp_fit(train, cfg.env); break;
        case Method::Oracle: break;
    }
    return ck;
}

inline Predictions predict_method(const Checkpoint& ck, const ExperimentConfig& cfg, const QTable& q_star,
                                  const std::vector<TransitionRecord>& records) {
    if (ck.model) return predict(*ck.model, records);
    if (ck.nfxp) return predict(*ck.nfxp, cfg.env, records);
    if (ck.method == "oracle") return predict_oracle(oracle_mdp(cfg.env), q_star, records);
    throw InvalidArgument("checkpoint for method '" + ck.method + "' holds no estimator");
}

/// Records used for evaluation: the held-out trajectories, or the training ones on request.
inline std::vector<TransitionRecord> evaluation_records(const ExperimentConfig& cfg, const TransitionDataset& data) {
    auto [train, test] = split_by_trajectory(data, cfg.data.split);
    return cfg.data.eval_on_train ? train.records : test.records;
}

inline RunReport evaluate_checkpoint(const Checkpoint& ck, const ExperimentConfig& cfg, const TransitionDataset& data,
                                     const QTable& q_star) {
    const auto records = evaluation_records(cfg, data);
    if (records.empty()) throw InvalidArgument("evaluation set is empty");
    auto rep = make_report(ck.method, data, predict_method(ck, cfg, q_star, records), records, cfg.env, q_star);
    rep.seed = ck.seed;
    return rep;
}

/// generate -> split -> train -> evaluate, all in memory.
inline RunReport run_experiment(const ExperimentConfig& cfg, const QTable& q_star, Checkpoint* out = nullptr) {
    cfg.validate();
    const auto data = generate_dataset(cfg, q_star);
    const auto start = std::chrono::steady_clock::now();
    auto [train, test] = split_by_trajectory(data, cfg.data.split);
    auto ck = train_method(cfg, train);
    auto rep = evaluate_checkpoint(ck, cfg, data, q_star);
    rep.wall_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out) *out = std::move(ck);
    return rep;
}

inline RunReport run_experiment(const ExperimentConfig& cfg) { return run_experiment(cfg, oracle_q(cfg)); }

/// Seed i of a sweep uses data seed and training seed base + i.
inline ExperimentConfig with_seed(ExperimentConfig cfg, std::uint64_t seed) {
    cfg.data.seed = seed;
    cfg.training.seed = seed;
    return cfg;
}

inline std::vector<RunReport> run_sweep(const ExperimentConfig& cfg) {
    const auto q_star = oracle_q(cfg);
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < cfg.n_seeds; ++i) seeds.push_back(cfg.data.seed + i);
    return seed_sweep([&](std::uint64_t s) { return run_experiment(with_seed(cfg, s), q_star); }, seeds, cfg.jobs);
}

}  // namespace gladius
