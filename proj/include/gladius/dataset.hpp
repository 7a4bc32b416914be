#pragma once

#include "gladius/config_json.hpp"
#include "gladius/errors.hpp"
#include "gladius/mdp.hpp"
#include "gladius/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace gladius {

/// Observation vector: element 0 is the 1-based state label (mileage), then the dummies.
using Observation = std::vector<int>;

struct TransitionRecord {
    std::int64_t traj_id = 0;
    std::int64_t step = 0;
    Observation state;
    int action = 0;
    Observation next_state;

    int mileage() const { return state.front(); }
    int next_mileage() const { return next_state.front(); }

    friend bool operator==(const TransitionRecord&, const TransitionRecord&) = default;
};

inline constexpr int kDatasetSchema = 1;

struct DatasetMeta {
    int schema = kDatasetSchema;
    std::optional<BusEngineConfig> env;  // absent for generic tabular MDPs
    std::uint64_t seed = 0;
    std::int64_t n_traj = 0;
    std::int64_t horizon = 0;
    int n_dummy = 0;
    std::uint64_t dummy_seed = 0;
    bool dummy_per_period = true;
    int n_actions = 2;
    int max_state = 20;  // largest admissible state label
    std::string rng = kRngName;
    std::string config_hash;

    friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

struct TransitionDataset {
    std::vector<TransitionRecord> records;
    DatasetMeta meta;

    friend bool operator==(const TransitionDataset&, const TransitionDataset&) = default;
};

namespace detail {

inline std::size_t draw_categorical(Engine& gen, std::span<const double> probs) {
    const double u = uniform01(gen);
    double cumulative = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cumulative += probs[i];
        if (u < cumulative) return i;
    }
    // Rounding left u above the running total; fall back to the last positive entry.
    for (std::size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0.0) return i;
    return probs.size() - 1;
}

}  // namespace detail

/// Rolls out `n_traj` trajectories of length `horizon` from state label 1 under `policy`.
/// Trajectory j draws from sub-stream j of `seed` (see derive_seed).
inline TransitionDataset sample_trajectories(const TabularMDP& mdp, const PolicyTable& policy,
                                             std::int64_t n_traj, std::int64_t horizon,
                                             std::uint64_t seed) {
    if (horizon < 1) throw InvalidArgument("sample_trajectories: horizon must be >= 1");
    if (n_traj < 0) throw InvalidArgument("sample_trajectories: negative trajectory count");
    if (policy.probs.rows() != mdp.n_states() || policy.probs.cols() != mdp.n_actions())
        throw InvalidArgument("sample_trajectories: policy shape does not match the MDP");

    TransitionDataset out;
    out.meta.seed = seed;
    out.meta.n_traj = n_traj;
    out.meta.horizon = horizon;
    out.meta.n_actions = static_cast<int>(mdp.n_actions());
    out.meta.max_state = static_cast<int>(mdp.n_states());
    out.records.reserve(static_cast<std::size_t>(n_traj * horizon));

    for (std::int64_t j = 0; j < n_traj; ++j) {
        Engine gen = make_engine(seed, static_cast<std::uint64_t>(j));
        std::size_t s = 0;
        for (std::int64_t h = 0; h < horizon; ++h) {
            const auto a = detail::draw_categorical(gen, policy.probs.row(s));
            const auto next = detail::draw_categorical(gen, mdp.next_distribution(s, a));
            out.records.push_back({j, h, {static_cast<int>(s) + 1}, static_cast<int>(a),
                                   {static_cast<int>(next) + 1}});
            s = next;
        }
    }
    return out;
}

/// Appends `n_dummy` i.i.d. uniform integers in [lo, hi] to every state and next state.
/// Per-period mode draws state and next-state dummies independently for each record;
/// otherwise one draw per trajectory is shared by all of its observations.
inline TransitionDataset augment_with_dummies(const TransitionDataset& dataset, int n_dummy,
                                              std::uint64_t seed, bool per_period = true,
                                              int lo = -10, int hi = 10) {
    if (n_dummy < 0) throw InvalidArgument("augment_with_dummies: n_dummy must be >= 0");
    if (lo > hi) throw InvalidArgument("augment_with_dummies: empty support");
    if (n_dummy == 0) return dataset;
    for (const auto& rec : dataset.records)
        if (rec.state.size() != 1 || rec.next_state.size() != 1)
            throw InvalidArgument("augment_with_dummies: dataset already carries dummies");

    TransitionDataset out = dataset;
    out.meta.n_dummy = n_dummy;
    out.meta.dummy_seed = seed;
    out.meta.dummy_per_period = per_period;
    if (out.meta.env) {
        out.meta.env->n_dummy = n_dummy;
        out.meta.env->dummy_min = lo;
        out.meta.env->dummy_max = hi;
        out.meta.env->dummy_per_period = per_period;
    }

    const auto k = static_cast<std::size_t>(n_dummy);
    std::int64_t current = -1;
    Engine gen(0);
    std::vector<int> shared(k);
    for (auto& rec : out.records) {
        if (rec.traj_id != current) {
            current = rec.traj_id;
            gen = make_engine(seed, static_cast<std::uint64_t>(rec.traj_id));
            if (!per_period)
                for (auto& d : shared) d = static_cast<int>(uniform_int(gen, lo, hi));
        }
        for (auto* obs : {&rec.state, &rec.next_state}) {
            obs->reserve(1 + k);
            for (std::size_t i = 0; i < k; ++i)
                obs->push_back(per_period ? static_cast<int>(uniform_int(gen, lo, hi)) : shared[i]);
        }
    }
    return out;
}

/// Trajectories with id < floor(train_fraction * n_traj) go to the first half of the pair.
inline std::pair<TransitionDataset, TransitionDataset> split_by_trajectory(
    const TransitionDataset& dataset, double train_fraction = 0.8) {
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
        throw InvalidArgument("split_by_trajectory: fraction must lie in [0, 1]");
    const auto cut = static_cast<std::int64_t>(train_fraction * static_cast<double>(dataset.meta.n_traj));
    std::pair<TransitionDataset, TransitionDataset> out{{{}, dataset.meta}, {{}, dataset.meta}};
    for (const auto& rec : dataset.records)
        (rec.traj_id < cut ? out.first : out.second).records.push_back(rec);
    return out;
}

// ---------------------------------------------------------------------------
// JSON-Lines persistence. Line 1 is the meta object, each further line one record
// {"traj", "t", "s", "a", "sp"}.

inline nlohmann::json meta_to_json(const DatasetMeta& m) {
    nlohmann::json j{{"schema", m.schema},
                     {"seed", m.seed},
                     {"n_traj", m.n_traj},
                     {"horizon", m.horizon},
                     {"n_dummy", m.n_dummy},
                     {"dummy_seed", m.dummy_seed},
                     {"dummy_per_period", m.dummy_per_period},
                     {"n_actions", m.n_actions},
                     {"max_state", m.max_state},
                     {"rng", m.rng},
                     {"config_hash", m.config_hash}};
    j["env"] = m.env ? nlohmann::json(*m.env) : nlohmann::json(nullptr);
    return j;
}

inline DatasetMeta meta_from_json(const nlohmann::json& j) {
    DatasetMeta m;
    if (!j.is_object() || !j.contains("schema")) throw ParseError("meta line lacks a schema field", 1);
    m.schema = j.at("schema").get<int>();
    if (m.schema != kDatasetSchema)
        throw VersionError("dataset schema " + std::to_string(m.schema) + " is not supported (expected " +
                           std::to_string(kDatasetSchema) + ")");
    if (j.contains("env") && !j.at("env").is_null()) m.env = j.at("env").get<BusEngineConfig>();
    m.seed = j.value("seed", m.seed);
    m.n_traj = j.value("n_traj", m.n_traj);
    m.horizon = j.value("horizon", m.horizon);
    m.n_dummy = j.value("n_dummy", m.n_dummy);
    m.dummy_seed = j.value("dummy_seed", m.dummy_seed);
    m.dummy_per_period = j.value("dummy_per_period", m.dummy_per_period);
    m.n_actions = j.value("n_actions", m.n_actions);
    m.max_state = j.value("max_state", m.max_state);
    m.rng = j.value("rng", m.rng);
    m.config_hash = j.value("config_hash", m.config_hash);
    return m;
}

/// Throws ValidationError naming the offending record when it violates the meta's domain.
inline void validate_record(const TransitionRecord& rec, const DatasetMeta& meta, std::size_t line = 0) {
    const std::string where = line ? "line " + std::to_string(line) + ": " : std::string{};
    if (rec.action < 0 || rec.action >= meta.n_actions)
        throw ValidationError(where + "action " + std::to_string(rec.action) + " outside [0, " +
                              std::to_string(meta.n_actions) + ")");
    const auto width = static_cast<std::size_t>(1 + meta.n_dummy);
    int lo = -10, hi = 10;
    if (meta.env) {
        lo = meta.env->dummy_min;
        hi = meta.env->dummy_max;
    }
    for (const auto* obs : {&rec.state, &rec.next_state}) {
        if (obs->size() != width)
            throw ValidationError(where + "observation length " + std::to_string(obs->size()) +
                                  ", expected " + std::to_string(width));
        if ((*obs)[0] < 1 || (*obs)[0] > meta.max_state)
            throw ValidationError(where + "state label " + std::to_string((*obs)[0]) + " out of range");
        for (std::size_t i = 1; i < obs->size(); ++i)
            if ((*obs)[i] < lo || (*obs)[i] > hi)
                throw ValidationError(where + "dummy value " + std::to_string((*obs)[i]) + " out of support");
    }
}

inline void write_dataset(const TransitionDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open dataset for writing", path);
    out << meta_to_json(dataset.meta).dump() << '\n';
    for (const auto& r : dataset.records) {
        nlohmann::json j{{"traj", r.traj_id}, {"t", r.step}, {"s", r.state}, {"a", r.action}, {"sp", r.next_state}};
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed while writing dataset", path);
}

inline TransitionDataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset", path);
    TransitionDataset out;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty dataset file (missing meta line)", 1);
    try {
        out.meta = meta_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed meta: ") + e.what(), 1);
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        TransitionRecord rec;
        try {
            const auto j = nlohmann::json::parse(line);
            rec.traj_id = j.at("traj").get<std::int64_t>();
            rec.step = j.at("t").get<std::int64_t>();
            rec.state = j.at("s").get<Observation>();
            rec.action = j.at("a").get<int>();
            rec.next_state = j.at("sp").get<Observation>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(e.what(), lineno);
        }
        validate_record(rec, out.meta, lineno);
        out.records.push_back(std::move(rec));
    }
    return out;
}

}  // namespace gladius
