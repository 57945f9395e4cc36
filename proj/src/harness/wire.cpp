#include "ditto/harness/wire.hpp"

#include <cmath>
#include <set>

namespace ditto::harness {

namespace {

void only_keys(const Json& j, const std::set<std::string>& allowed, const std::string& type) {
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw SchemaError(type + ": unexpected field '" + key + "'");
    }
}

const Json& field(const Json& j, const char* key, const std::string& type) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) throw SchemaError(type + ": missing field '" + key + "'");
    return *it;
}

std::string id_field(const Json& j, const char* key, const std::string& type) {
    const auto& v = field(j, key, type);
    if (!v.is_string() || v.get<std::string>().empty()) throw SchemaError(type + ": '" + key + "' must be a nonempty string");
    return v.get<std::string>();
}

double number_field(const Json& j, const char* key, const std::string& type) {
    const auto& v = field(j, key, type);
    if (!v.is_number()) throw SchemaError(type + ": '" + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw SchemaError(type + ": '" + key + "' must be finite");
    return d;
}

Millis ts_field(const Json& j, const std::string& type) {
    const auto& v = field(j, "ts", type);
    if (!v.is_number_integer()) throw SchemaError(type + ": 'ts' must be an integer millisecond count");
    const auto ts = v.get<Millis>();
    if (ts < 0) throw SchemaError(type + ": 'ts' must be non-negative");
    return ts;
}

bool bool_field(const Json& j, const char* key, const std::string& type) {
    const auto& v = field(j, key, type);
    if (!v.is_boolean()) throw SchemaError(type + ": '" + key + "' must be a boolean");
    return v.get<bool>();
}

const std::set<std::string> kActions = {"tick", "start", "stop", "snapshot", "rotate_context"};

}  // namespace

Inbound parse_inbound(const Json& j) {
    if (!j.is_object()) throw SchemaError("message must be an object");
    auto t = j.find("type");
    if (t == j.end() || !t->is_string()) throw SchemaError("message needs a string 'type'");
    const std::string type = t->get<std::string>();

    if (type == "move") {
        only_keys(j, {"type", "track_id", "x", "y", "facing_deg", "ts"}, type);
        return MoveInput{id_field(j, "track_id", type), number_field(j, "x", type), number_field(j, "y", type),
                         number_field(j, "facing_deg", type), ts_field(j, type)};
    }
    if (type == "tag") {
        only_keys(j, {"type", "tag_id", "track_id", "present", "ts"}, type);
        TagInput tag{id_field(j, "tag_id", type), std::nullopt, bool_field(j, "present", type), ts_field(j, type)};
        if (auto it = j.find("track_id"); it != j.end() && !it->is_null()) tag.track_id = id_field(j, "track_id", type);
        return tag;
    }
    if (type == "speech") {
        only_keys(j, {"type", "track_id", "text", "final", "ts"}, type);
        const auto& text = field(j, "text", type);
        if (!text.is_string()) throw SchemaError("speech: 'text' must be a string");
        return SpeechInput{id_field(j, "track_id", type), text.get<std::string>(), bool_field(j, "final", type),
                           ts_field(j, type)};
    }
    if (type == "control") {
        only_keys(j, {"type", "action", "ts", "args"}, type);
        ControlInput c;
        c.action = id_field(j, "action", type);
        if (!kActions.count(c.action)) throw SchemaError("control: unknown action '" + c.action + "'");
        if (auto it = j.find("ts"); it != j.end() && !it->is_null()) c.ts = ts_field(j, type);
        if (auto it = j.find("args"); it != j.end() && !it->is_null()) {
            if (!it->is_object()) throw SchemaError("control: 'args' must be an object");
            c.args = *it;
        }
        if (c.action == "tick" && !c.ts) throw SchemaError("control: tick needs 'ts'");
        if (c.action == "rotate_context" && !c.args.contains("context"))
            throw SchemaError("control: rotate_context needs args.context");
        return c;
    }
    throw SchemaError("unknown message type '" + type + "'");
}

Inbound parse_inbound_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw SchemaError(std::string("not valid JSON: ") + e.what());
    }
    return parse_inbound(j);
}

namespace {

struct ToJson {
    Json operator()(const MoveInput& m) const {
        return {{"type", "move"}, {"track_id", m.track_id}, {"x", m.x}, {"y", m.y}, {"facing_deg", m.facing_deg}, {"ts", m.ts}};
    }
    Json operator()(const TagInput& t) const {
        Json j{{"type", "tag"}, {"tag_id", t.tag_id}, {"present", t.present}, {"ts", t.ts}};
        if (t.track_id) j["track_id"] = *t.track_id;
        return j;
    }
    Json operator()(const SpeechInput& s) const {
        return {{"type", "speech"}, {"track_id", s.track_id}, {"text", s.text}, {"final", s.final}, {"ts", s.ts}};
    }
    Json operator()(const ControlInput& c) const {
        Json j{{"type", "control"}, {"action", c.action}};
        if (c.ts) j["ts"] = *c.ts;
        if (!c.args.empty()) j["args"] = c.args;
        return j;
    }
};

}  // namespace

Json to_json(const Inbound& message) { return std::visit(ToJson{}, message); }

std::optional<Millis> timestamp_of(const Inbound& message) {
    return std::visit([](const auto& m) { return std::optional<Millis>(m.ts); }, message);
}

Inbound with_timestamp(Inbound message, Millis ts) {
    std::visit([ts](auto& m) { m.ts = ts; }, message);
    return message;
}

Json error_message(std::string_view code, const std::string& detail) {
    return {{"type", "error"}, {"code", code}, {"detail", detail}};
}

}  // namespace ditto::harness
