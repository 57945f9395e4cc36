#include "ditto/transcript.hpp"

namespace ditto {

std::string_view to_string(Speaker speaker) { return speaker == Speaker::User ? "user" : "agent"; }

nlohmann::json to_json(const Utterance& u) {
    return {{"speaker", to_string(u.speaker)}, {"text", u.text},   {"started", u.started},
            {"ended", u.ended},                {"final", u.final}, {"interrupted", u.interrupted}};
}

Utterance utterance_from_json(const nlohmann::json& j) {
    Utterance u;
    u.speaker = j.at("speaker").get<std::string>() == "agent" ? Speaker::Agent : Speaker::User;
    u.text = j.at("text").get<std::string>();
    u.started = j.value("started", Millis{0});
    u.ended = j.value("ended", Millis{0});
    u.final = j.value("final", true);
    u.interrupted = j.value("interrupted", false);
    return u;
}

}  // namespace ditto
