#pragma once

#include "ditto/common.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace ditto {

enum class Speaker { User, Agent };

std::string_view to_string(Speaker speaker);

struct Utterance {
    Speaker speaker = Speaker::User;
    std::string text;
    Millis started = 0;
    Millis ended = 0;
    bool final = false;
    bool interrupted = false;  // agent only: cut off by user speech

    bool operator==(const Utterance&) const = default;
};

using Transcript = std::vector<Utterance>;

nlohmann::json to_json(const Utterance& u);
Utterance utterance_from_json(const nlohmann::json& j);

}  // namespace ditto
