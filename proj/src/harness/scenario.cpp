#include "ditto/harness/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace ditto::harness {

Json to_json(const Setup& s) {
    Json registry = Json::array();
    for (const auto& p : s.registry) {
        Json e{{"tag_id", p.tag_id}, {"name", p.name}};
        if (p.context_key) e["context_key"] = *p.context_key;
        registry.push_back(std::move(e));
    }
    return {{"registry", registry}, {"context", s.context}, {"date", s.date}, {"daily", conversation::to_json(s.daily)}};
}

Setup setup_from_json(const Json& j) {
    Setup s;
    try {
        for (const auto& e : j.value("registry", Json::array())) {
            proxemics::PersonIdentity p;
            p.tag_id = e.at("tag_id").get<std::string>();
            p.name = e.at("name").get<std::string>();
            if (auto it = e.find("context_key"); it != e.end() && !it->is_null()) p.context_key = it->get<std::string>();
            s.registry.push_back(std::move(p));
        }
        s.context = j.value("context", Json::object());
        s.date = j.value("date", std::string{});
        if (auto it = j.find("daily"); it != j.end()) s.daily = conversation::daily_from_json(*it);
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("setup: ") + e.what());
    }
    // both throw ValidationError with the offending field
    proxemics::IdentityRegistry check(s.registry);
    memory::load_context(s.context, s.date);
    return s;
}

namespace {

void expand_move(const Json& event, std::vector<Inbound>& out) {
    Json base = event;
    const Millis hold = base.value("hold_ms", Millis{0});
    const Millis every = base.value("every_ms", Millis{500});
    base.erase("hold_ms");
    base.erase("every_ms");
    auto first = std::get<MoveInput>(parse_inbound(base));
    if (hold < 0) throw ValidationError("move: hold_ms must be non-negative");
    if (hold > 0 && every <= 0) throw ValidationError("move: every_ms must be positive");
    out.push_back(first);
    for (Millis t = every; hold > 0 && t <= hold; t += every) {
        auto m = first;
        m.ts = first.ts + t;
        out.push_back(m);
    }
}

}  // namespace

Scenario scenario_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("scenario must be an object");
    if (j.value("format", std::string{}) != kScenarioFormat)
        throw ValidationError("scenario format must be \"" + std::string(kScenarioFormat) + "\"");
    Scenario sc;
    sc.name = j.value("name", std::string{});
    if (sc.name.empty()) throw ValidationError("scenario name required");
    sc.seed = j.value("seed", std::uint64_t{0});
    sc.config = j.value("config", Json::object());
    config_from_json(sc.config);
    sc.setup = setup_from_json(j.value("setup", Json::object()));
    if (auto it = j.find("expected_hash"); it != j.end() && it->is_string()) sc.expected_hash = it->get<std::string>();

    std::set<TagId> tags;
    for (const auto& p : sc.setup.registry) tags.insert(p.tag_id);

    // Raw events must be in order; held moves then interleave with whatever follows them.
    std::size_t index = 0;
    Millis last = 0;
    for (const auto& event : j.value("timeline", Json::array())) {
        const std::string where = "timeline[" + std::to_string(index) + "]";
        const std::size_t first = sc.timeline.size();
        try {
            if (event.value("type", std::string{}) == "move" && (event.contains("hold_ms") || event.contains("every_ms"))) {
                expand_move(event, sc.timeline);
            } else {
                sc.timeline.push_back(parse_inbound(event));
            }
        } catch (const Error& e) {
            throw ValidationError(where + ": " + e.what());
        }
        const auto& added = sc.timeline[first];
        const auto ts = timestamp_of(added);
        if (!ts) throw ValidationError(where + " needs a timestamp");
        if (*ts < last) throw ValidationError("timeline timestamps decrease at " + where);
        last = *ts;
        if (const auto* tag = std::get_if<TagInput>(&added); tag && !tags.count(tag->tag_id))
            throw ValidationError(where + " references unregistered tag '" + tag->tag_id + "'");
        if (const auto* c = std::get_if<ControlInput>(&added); c && c->action == "rotate_context") {
            memory::load_context(c->args.at("context"));
            if (auto d = c->args.find("daily"); d != c->args.end()) conversation::daily_from_json(*d);
        }
        ++index;
    }
    std::stable_sort(sc.timeline.begin(), sc.timeline.end(),
                     [](const Inbound& a, const Inbound& b) { return *timestamp_of(a) < *timestamp_of(b); });
    return sc;
}

Json to_json(const Scenario& sc) {
    Json timeline = Json::array();
    for (const auto& ev : sc.timeline) timeline.push_back(to_json(ev));
    Json j{{"format", kScenarioFormat},
           {"name", sc.name},
           {"seed", sc.seed},
           {"config", sc.config},
           {"setup", to_json(sc.setup)},
           {"timeline", timeline}};
    if (sc.expected_hash) j["expected_hash"] = *sc.expected_hash;
    return j;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open scenario " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ValidationError("scenario " + path.string() + ": " + e.what());
    }
    return scenario_from_json(j);
}

}  // namespace ditto::harness
