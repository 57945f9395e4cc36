#include "ditto/harness/config.hpp"

#include <fstream>
#include <set>

namespace ditto::harness {

void EngineConfig::validate() const {
    try {
        zones.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (journal_window == 0) throw ConfigError("journal_window must be at least 1");
    if (silence_window <= 0) throw ConfigError("silence_window must be positive");
    if (ms_per_word <= 0) throw ConfigError("ms_per_word must be positive");
    if (responder_latency < 0) throw ConfigError("responder_latency must be non-negative");
    if (periodic_interval <= 0) throw ConfigError("periodic_interval must be positive");
    if (decision_timeout <= 0 || response_timeout <= 0) throw ConfigError("timeouts must be positive");
    if (fusion.window < 0) throw ConfigError("fusion window must be non-negative");
    for (const auto* p : {&engagement_policy, &disengagement_policy}) {
        if (*p != "rule" && *p != "llm") throw ConfigError("unknown policy '" + *p + "'");
    }
    if (queue_limit == 0) throw ConfigError("queue_limit must be at least 1");
}

Json to_json(const EngineConfig& c) {
    return {
        {"zones",
         {{"social_max", c.zones.social_max},
          {"public_max", c.zones.public_max},
          {"facing_tolerance", c.zones.facing_tolerance},
          {"dwell_to_engage", c.zones.dwell_to_engage},
          {"track_timeout", c.zones.track_timeout}}},
        {"fusion", {{"window", c.fusion.window}, {"receiver", {c.fusion.receiver.x, c.fusion.receiver.y}}}},
        {"journal_window", c.journal_window},
        {"silence_window", c.silence_window},
        {"ms_per_word", c.ms_per_word},
        {"responder_latency", c.responder_latency},
        {"periodic_interval", c.periodic_interval},
        {"decision_timeout", c.decision_timeout},
        {"response_timeout", c.response_timeout},
        {"engagement_policy", c.engagement_policy},
        {"disengagement_policy", c.disengagement_policy},
        {"farewell", c.farewell},
        {"rules_prompt", c.rules_prompt},
        {"model", c.model},
        {"queue_limit", c.queue_limit},
    };
}

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown config key '" + where + key + "'");
    }
}

template <class T>
void read(const Json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) {
        try {
            out = it->get<T>();
        } catch (const Json::exception&) {
            throw ConfigError(std::string("config key '") + key + "' has the wrong type");
        }
    }
}

}  // namespace

EngineConfig config_from_json(const Json& j) {
    EngineConfig c;
    reject_unknown(j,
                   {"zones", "fusion", "journal_window", "silence_window", "ms_per_word", "responder_latency",
                    "periodic_interval", "decision_timeout", "response_timeout", "engagement_policy",
                    "disengagement_policy", "farewell", "rules_prompt", "model", "queue_limit"},
                   "");
    if (auto it = j.find("zones"); it != j.end()) {
        reject_unknown(*it, {"social_max", "public_max", "facing_tolerance", "dwell_to_engage", "track_timeout"}, "zones.");
        read(*it, "social_max", c.zones.social_max);
        read(*it, "public_max", c.zones.public_max);
        read(*it, "facing_tolerance", c.zones.facing_tolerance);
        read(*it, "dwell_to_engage", c.zones.dwell_to_engage);
        read(*it, "track_timeout", c.zones.track_timeout);
    }
    if (auto it = j.find("fusion"); it != j.end()) {
        reject_unknown(*it, {"window", "receiver"}, "fusion.");
        read(*it, "window", c.fusion.window);
        if (auto r = it->find("receiver"); r != it->end()) {
            if (!r->is_array() || r->size() != 2) throw ConfigError("fusion.receiver must be [x, y]");
            c.fusion.receiver = {r->at(0).get<double>(), r->at(1).get<double>()};
        }
    }
    read(j, "journal_window", c.journal_window);
    read(j, "silence_window", c.silence_window);
    read(j, "ms_per_word", c.ms_per_word);
    read(j, "responder_latency", c.responder_latency);
    read(j, "periodic_interval", c.periodic_interval);
    read(j, "decision_timeout", c.decision_timeout);
    read(j, "response_timeout", c.response_timeout);
    read(j, "engagement_policy", c.engagement_policy);
    read(j, "disengagement_policy", c.disengagement_policy);
    read(j, "farewell", c.farewell);
    read(j, "rules_prompt", c.rules_prompt);
    read(j, "model", c.model);
    read(j, "queue_limit", c.queue_limit);
    c.validate();
    return c;
}

EngineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace ditto::harness
