#pragma once

#include "gladius/baselines.hpp"
#include "gladius/config_json.hpp"
#include "gladius/encoding.hpp"
#include "gladius/errors.hpp"
#include "gladius/mlp.hpp"
#include "gladius/trainer.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gladius {

inline constexpr int kCheckpointSchema = 1;

namespace detail {

inline constexpr char kBase64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<unsigned char>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t chunk = std::uint32_t(bytes[i]) << 16;
        if (i + 1 < bytes.size()) chunk |= std::uint32_t(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
        out += kBase64[(chunk >> 18) & 63];
        out += kBase64[(chunk >> 12) & 63];
        out += i + 1 < bytes.size() ? kBase64[(chunk >> 6) & 63] : '=';
        out += i + 2 < bytes.size() ? kBase64[chunk & 63] : '=';
    }
    return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw ParseError("base64: length is not a multiple of 4", 0);
    const auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        std::uint32_t chunk = 0;
        int pad = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char c = text[i + k];
            int v = 0;
            if (c == '=' && i + 4 == text.size() && k >= 2) {
                ++pad;
            } else if (pad > 0 || (v = value(c)) < 0) {
                throw ParseError("base64: invalid character", 0);
            }
            chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
        }
        out.push_back(static_cast<unsigned char>(chunk >> 16));
        if (pad < 2) out.push_back(static_cast<unsigned char>(chunk >> 8));
        if (pad < 1) out.push_back(static_cast<unsigned char>(chunk));
    }
    return out;
}

}  // namespace detail

/// Little-endian IEEE-754 binary64, base64 encoded.
inline std::string encode_doubles(const std::vector<double>& values) {
    std::vector<unsigned char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (std::size_t b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    return detail::base64_encode(bytes);
}

inline std::vector<double> decode_doubles(const std::string& text) {
    const auto bytes = detail::base64_decode(text);
    if (bytes.size() % 8 != 0) throw ParseError("parameter payload is not a whole number of doubles", 0);
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (std::size_t b = 0; b < 8; ++b) bits |= std::uint64_t(bytes[i * 8 + b]) << (8 * b);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON for the training types

inline void to_json(nlohmann::json& j, const StepSchedule& s) {
    j = {{"c1", s.c1}, {"c2", s.c2}, {"constant", s.constant}};
}

inline void from_json(const nlohmann::json& j, StepSchedule& s) {
    s.c1 = j.value("c1", s.c1);
    s.c2 = j.value("c2", s.c2);
    s.constant = j.value("constant", s.constant);
}

inline void to_json(nlohmann::json& j, const TrainingConfig& c) {
    j = {{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"lr_q", c.lr_q},
         {"lr_zeta", c.lr_zeta},
         {"lr_level", c.lr_level},
         {"discount", c.discount},
         {"seed", c.seed},
         {"deterministic_mode", c.deterministic_mode},
         {"single_batch", c.single_batch},
         {"full_batch_rows", c.full_batch_rows},
         {"eval_every", c.eval_every},
         {"hidden_layers", c.hidden_layers},
         {"activation", to_string(c.activation)},
         {"optimizer", to_string(c.optimizer)}};
}

/// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, TrainingConfig& c) {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("lr_q")) j.at("lr_q").get_to(c.lr_q);
    if (j.contains("lr_zeta")) j.at("lr_zeta").get_to(c.lr_zeta);
    if (j.contains("lr_level")) j.at("lr_level").get_to(c.lr_level);
    c.discount = j.value("discount", c.discount);
    c.seed = j.value("seed", c.seed);
    c.deterministic_mode = j.value("deterministic_mode", c.deterministic_mode);
    c.single_batch = j.value("single_batch", c.single_batch);
    c.full_batch_rows = j.value("full_batch_rows", c.full_batch_rows);
    c.eval_every = j.value("eval_every", c.eval_every);
    if (j.contains("hidden_layers")) j.at("hidden_layers").get_to(c.hidden_layers);
    if (j.contains("activation")) c.activation = activation_from_string(j.at("activation").get<std::string>());
    if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
}

inline void to_json(nlohmann::json& j, const MlpSpec& s) {
    j = {{"input_dim", s.input_dim},
         {"hidden_layers", s.hidden_layers},
         {"output_dim", s.output_dim},
         {"activation", to_string(s.activation)}};
}

inline void from_json(const nlohmann::json& j, MlpSpec& s) {
    j.at("input_dim").get_to(s.input_dim);
    j.at("hidden_layers").get_to(s.hidden_layers);
    j.at("output_dim").get_to(s.output_dim);
    s.activation = activation_from_string(j.at("activation").get<std::string>());
}

inline void to_json(nlohmann::json& j, const Network& n) {
    j = {{"spec", n.spec}, {"params", encode_doubles(n.params.values)}};
}

inline void from_json(const nlohmann::json& j, Network& n) {
    j.at("spec").get_to(n.spec);
    n.spec.validate();
    n.params = {n.spec.widths(), decode_doubles(j.at("params").get<std::string>())};
    check_params(n.spec, n.params);
}

inline void to_json(nlohmann::json& j, const InputScaling& s) {
    j = {{"state_scale", s.state_scale}, {"dummy_scale", s.dummy_scale}};
}

inline void from_json(const nlohmann::json& j, InputScaling& s) {
    s.state_scale = j.value("state_scale", s.state_scale);
    s.dummy_scale = j.value("dummy_scale", s.dummy_scale);
}

inline void to_json(nlohmann::json& j, const AnchorSpec& a) {
    j = {{"action", a.action}, {"reward_by_state", a.reward_by_state}};
}

inline void from_json(const nlohmann::json& j, AnchorSpec& a) {
    j.at("action").get_to(a.action);
    j.at("reward_by_state").get_to(a.reward_by_state);
}

inline void to_json(nlohmann::json& j, const NfxpResult& r) {
    j = {{"theta_hat", r.theta_hat},
         {"neg_log_likelihood", r.neg_log_likelihood},
         {"iterations", r.iterations},
         {"flat_likelihood", r.flat_likelihood}};
}

inline void from_json(const nlohmann::json& j, NfxpResult& r) {
    j.at("theta_hat").get_to(r.theta_hat);
    j.at("neg_log_likelihood").get_to(r.neg_log_likelihood);
    j.at("iterations").get_to(r.iterations);
    r.flat_likelihood = j.value("flat_likelihood", false);
}

// ---------------------------------------------------------------------------
// Checkpoint files

/// A trained estimator of any method plus the hash of the environment its data came from.
struct Checkpoint {
    std::string method;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::optional<TrainedModel> model;  // gladius, gladius_det, bc
    std::optional<NfxpResult> nfxp;     // nfxp
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
    nlohmann::json j{{"schema", kCheckpointSchema},
                     {"method", c.method},
                     {"config_hash", c.config_hash},
                     {"seed", c.seed}};
    if (c.model) {
        const auto& m = *c.model;
        j["model"] = {{"method", m.method},
                      {"q_net", m.q_net},
                      {"zeta_net", m.zeta_net ? nlohmann::json(*m.zeta_net) : nlohmann::json(nullptr)},
                      {"level", encode_doubles({m.level})},
                      {"scaling", m.scaling},
                      {"anchor", m.anchor},
                      {"config", m.config},
                      {"batches_without_anchor", m.batches_without_anchor}};
    }
    if (c.nfxp) j["nfxp"] = *c.nfxp;
    return j;
}

/// The loss history is not stored in the checkpoint (see write_loss_history).
inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    try {
        const int schema = j.at("schema").get<int>();
        if (schema != kCheckpointSchema)
            throw VersionError("checkpoint schema " + std::to_string(schema) + " is not supported");
        Checkpoint c;
        j.at("method").get_to(c.method);
        j.at("config_hash").get_to(c.config_hash);
        j.at("seed").get_to(c.seed);
        if (j.contains("model")) {
            const auto& jm = j.at("model");
            TrainedModel m;
            jm.at("method").get_to(m.method);
            jm.at("q_net").get_to(m.q_net);
            if (!jm.at("zeta_net").is_null()) m.zeta_net = jm.at("zeta_net").get<Network>();
            const auto level = decode_doubles(jm.at("level").get<std::string>());
            if (level.size() != 1) throw ParseError("checkpoint: level must hold one value", 0);
            m.level = level[0];
            jm.at("scaling").get_to(m.scaling);
            jm.at("anchor").get_to(m.anchor);
            jm.at("config").get_to(m.config);
            m.batches_without_anchor = jm.value("batches_without_anchor", std::size_t{0});
            c.model = std::move(m);
        }
        if (j.contains("nfxp")) c.nfxp = j.at("nfxp").get<NfxpResult>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed checkpoint: ") + e.what(), 0);
    }
}

inline void write_checkpoint(const Checkpoint& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing", path);
    out << checkpoint_to_json(c).dump(2) << '\n';
    if (!out) throw IoError("failed while writing checkpoint", path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint", path);
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed checkpoint: ") + e.what(), 0);
    }
    return checkpoint_from_json(j);
}

/// iteration,nll,be,d_term with full round-trip precision.
inline void write_loss_history(const std::vector<LossRecord>& history, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open loss history for writing", path);
    out.precision(17);
    out << "iteration,nll,be,d_term\n";
    for (const auto& r : history) out << r.iteration << ',' << r.nll << ',' << r.be << ',' << r.d_term << '\n';
    if (!out) throw IoError("failed while writing loss history", path);
}

}  // namespace gladius
