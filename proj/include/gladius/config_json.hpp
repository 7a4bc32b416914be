#pragma once

#include "gladius/mdp.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace gladius {

inline void to_json(nlohmann::json& j, const MileageJump& jump) {
    j = nlohmann::json{{"increment", jump.increment}, {"probability", jump.probability}};
}

inline void from_json(const nlohmann::json& j, MileageJump& jump) {
    j.at("increment").get_to(jump.increment);
    j.at("probability").get_to(jump.probability);
}

inline void to_json(nlohmann::json& j, const BusEngineConfig& c) {
    j = nlohmann::json{{"theta_maintain", c.theta_maintain},
                       {"theta_replace", c.theta_replace},
                       {"max_mileage", c.max_mileage},
                       {"jump_support", c.jump_support},
                       {"discount", c.discount},
                       {"n_dummy", c.n_dummy},
                       {"dummy_min", c.dummy_min},
                       {"dummy_max", c.dummy_max},
                       {"dummy_per_period", c.dummy_per_period}};
}

/// Missing keys keep their defaults so partial config files are accepted.
inline void from_json(const nlohmann::json& j, BusEngineConfig& c) {
    c.theta_maintain = j.value("theta_maintain", c.theta_maintain);
    c.theta_replace = j.value("theta_replace", c.theta_replace);
    c.max_mileage = j.value("max_mileage", c.max_mileage);
    if (j.contains("jump_support")) j.at("jump_support").get_to(c.jump_support);
    c.discount = j.value("discount", c.discount);
    c.n_dummy = j.value("n_dummy", c.n_dummy);
    c.dummy_min = j.value("dummy_min", c.dummy_min);
    c.dummy_max = j.value("dummy_max", c.dummy_max);
    c.dummy_per_period = j.value("dummy_per_period", c.dummy_per_period);
}

/// FNV-1a over the compact dump; identifies an environment configuration in artifacts.
inline std::string config_hash(const nlohmann::json& j) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    return out;
}

inline std::string config_hash(const BusEngineConfig& c) { return config_hash(nlohmann::json(c)); }

}  // namespace gladius
