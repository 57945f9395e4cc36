#pragma once

#include "ditto/common.hpp"
#include "ditto/proxemics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace ditto::harness {

using Json = nlohmann::json;

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorCode::Config, what) {}
};

struct EngineConfig {
    proxemics::ZoneConfig zones;
    proxemics::FusionConfig fusion;
    std::size_t journal_window = 20;
    Millis silence_window = 1500;
    Millis ms_per_word = 300;         // simulated speaking rate for agent utterances
    Millis responder_latency = 0;     // logical delay before a reply is delivered
    Millis periodic_interval = 10000; // disengagement check while engaged
    Millis decision_timeout = 5000;
    Millis response_timeout = 8000;
    std::string engagement_policy = "rule";     // rule | llm
    std::string disengagement_policy = "rule";  // rule | llm
    std::string farewell;                       // empty: built-in farewell
    std::string rules_prompt;                   // empty: built-in conversation rules
    std::string model;
    std::size_t queue_limit = 10000;

    void validate() const;
    bool operator==(const EngineConfig&) const = default;
};

Json to_json(const EngineConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
EngineConfig config_from_json(const Json& j);
EngineConfig load_config(const std::filesystem::path& path);

}  // namespace ditto::harness
