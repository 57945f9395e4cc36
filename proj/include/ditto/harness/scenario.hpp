#pragma once

#include "ditto/conversation.hpp"
#include "ditto/harness/config.hpp"
#include "ditto/harness/wire.hpp"
#include "ditto/memory.hpp"
#include "ditto/proxemics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ditto::harness {

inline constexpr std::string_view kScenarioFormat = "ditto-scenario/1";

// Who can be recognised, what the Source wants to talk about, and the day's script.
struct Setup {
    std::vector<proxemics::PersonIdentity> registry;
    Json context = Json::object();  // Background / PersonalityTraits / SocialRelationshipInfo document
    std::string date;
    conversation::DailyConfig daily;
};

Json to_json(const Setup& setup);
Setup setup_from_json(const Json& j);

struct Scenario {
    std::string name;
    std::uint64_t seed = 0;
    Json config = Json::object();  // overrides on top of the caller's config
    Setup setup;
    std::vector<Inbound> timeline;  // expanded, timestamps nondecreasing
    std::optional<std::string> expected_hash;
};

// Expands move events carrying hold_ms/every_ms into repeated observations, then validates:
// nondecreasing timestamps, registered tags, a loadable context.
Scenario scenario_from_json(const Json& j);
Json to_json(const Scenario& scenario);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace ditto::harness
