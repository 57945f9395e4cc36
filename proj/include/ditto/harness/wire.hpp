#pragma once

#include "ditto/common.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <variant>

namespace ditto::harness {

using Json = nlohmann::json;

class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& what) : Error(ErrorCode::Schema, what) {}
};

struct MoveInput {
    TrackId track_id;
    double x = 0.0;
    double y = 0.0;
    double facing_deg = 0.0;  // heading, counter-clockwise from +x
    Millis ts = 0;
    bool operator==(const MoveInput&) const = default;
};

struct TagInput {
    TagId tag_id;
    std::optional<TrackId> track_id;
    bool present = true;
    Millis ts = 0;
    bool operator==(const TagInput&) const = default;
};

struct SpeechInput {
    TrackId track_id;
    std::string text;
    bool final = false;
    Millis ts = 0;
    bool operator==(const SpeechInput&) const = default;
};

// Actions: tick (advance the logical clock to ts), start, stop, snapshot,
// rotate_context (args: context, date, daily).
struct ControlInput {
    std::string action;
    std::optional<Millis> ts;
    Json args = Json::object();
    bool operator==(const ControlInput&) const = default;
};

using Inbound = std::variant<MoveInput, TagInput, SpeechInput, ControlInput>;

// Validates against the inbound schema; throws SchemaError describing the first problem.
Inbound parse_inbound(const Json& j);
Inbound parse_inbound_text(const std::string& text);
Json to_json(const Inbound& message);

std::optional<Millis> timestamp_of(const Inbound& message);
Inbound with_timestamp(Inbound message, Millis ts);

Json error_message(std::string_view code, const std::string& detail);

}  // namespace ditto::harness
