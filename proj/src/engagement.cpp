#include "ditto/engagement.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace ditto::engagement {

using journal::EntryKind;
using journal::Json;
using journal::JournalEntry;

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::NotEngaged: return "NotEngaged";
        case Mode::Engaged: return "Engaged";
        case Mode::AwaitingStayAnswer: return "AwaitingStayAnswer";
    }
    return "NotEngaged";
}

std::string_view to_string(BehaviorCue cue) {
    switch (cue) {
        case BehaviorCue::IdleReading: return "idle_reading";
        case BehaviorCue::Listening: return "listening";
        case BehaviorCue::Greeting: return "greeting";
        case BehaviorCue::Speaking: return "speaking";
    }
    return "idle_reading";
}

std::string_view to_string(Verdict verdict) {
    switch (verdict) {
        case Verdict::Engage: return "ENGAGE";
        case Verdict::Stay: return "STAY";
        case Verdict::Continue: return "CONTINUE";
        case Verdict::RequestStay: return "REQUEST_STAY";
        case Verdict::Disengage: return "DISENGAGE";
    }
    return "STAY";
}

std::optional<Verdict> verdict_from_token(std::string_view token) {
    if (token == "ENGAGE") return Verdict::Engage;
    if (token == "STAY") return Verdict::Stay;
    if (token == "CONTINUE") return Verdict::Continue;
    if (token == "REQUEST_STAY") return Verdict::RequestStay;
    if (token == "DISENGAGE") return Verdict::Disengage;
    return std::nullopt;
}

std::string_view to_string(CheckTrigger trigger) {
    switch (trigger) {
        case CheckTrigger::Observation: return "observation";
        case CheckTrigger::Utterance: return "utterance";
        case CheckTrigger::TurnComplete: return "turn_complete";
        case CheckTrigger::Periodic: return "periodic";
        case CheckTrigger::Answer: return "answer";
    }
    return "periodic";
}

bool invariants_hold(const EngineState& s) {
    if (s.mode == Mode::NotEngaged) {
        if (s.engaged_track || s.turn_count != 0 || s.stay_prompt_issued) return false;
    } else if (!s.engaged_track) {
        return false;
    }
    if (s.mode == Mode::AwaitingStayAnswer && !s.stay_prompt_issued) return false;
    return s.turn_count >= 0;
}

// ---------------------------------------------------------------------------
// Rule policies

namespace {

std::string normalized(std::string_view text) {
    std::string out = " ";
    for (char c : text) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::isalpha(uc) || c == '\'') {
            out.push_back(static_cast<char>(std::tolower(uc)));
        } else if (out.back() != ' ') {
            out.push_back(' ');
        }
    }
    if (out.back() != ' ') out.push_back(' ');
    return out;
}

bool has_phrase(const std::string& norm, std::string_view phrase) {
    return norm.find(" " + std::string(phrase) + " ") != std::string::npos;
}

std::string one_decimal(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1) << v;
    return out.str();
}

std::string subject_of(const TrackFeatures& t) { return journal::subject_for(t.identity); }

bool closer(const TrackFeatures& a, const TrackFeatures& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.track_id < b.track_id;
}

}  // namespace

StayAnswer classify_stay_answer(std::string_view text) {
    std::string norm = normalized(text);
    for (std::string_view neutral : {"no problem", "no worries", "why not", "not a problem"}) {
        for (auto pos = norm.find(" " + std::string(neutral) + " "); pos != std::string::npos;
             pos = norm.find(" " + std::string(neutral) + " ")) {
            norm.replace(pos, neutral.size() + 2, neutral == "why not" ? " sure " : " ");
        }
    }
    static constexpr std::string_view decline[] = {
        "no",         "nope",         "nah",         "can't",         "cannot",      "can not",    "have to go",
        "gotta go",   "got to go",    "need to go",  "need to run",   "have to run", "must go",    "should go",
        "get going",  "busy",         "not now",     "maybe later",   "another time", "next time", "bye",
        "goodbye",    "heading out",  "in a rush",   "in a hurry",    "i'm late",    "running late", "not really",
    };
    static constexpr std::string_view accept[] = {
        "yes",        "yeah",        "yep",          "yup",       "sure",         "of course", "absolutely",
        "ok",         "okay",        "i can stay",   "happy to",  "love to",      "i'd love",  "definitely",
        "i have time", "i've got time", "got time",  "a bit longer", "a little longer", "let's keep", "keep going",
    };
    bool declines = false;
    bool accepts = false;
    for (auto p : decline) declines = declines || has_phrase(norm, p);
    for (auto p : accept) accepts = accepts || has_phrase(norm, p);
    if (declines == accepts) return StayAnswer::Unclear;
    return declines ? StayAnswer::Decline : StayAnswer::Accept;
}

bool addressed_agent(const std::vector<JournalEntry>& window, const TrackId& track) {
    bool addressed = false;
    for (const auto& e : window) {
        if (e.kind == EntryKind::Decision) {
            const auto verdict = e.structured.value("verdict", std::string{});
            if (verdict == "ENGAGE" || verdict == "DISENGAGE") addressed = false;
        } else if (e.kind == EntryKind::UtteranceUser) {
            if (e.structured.value("track_id", std::string{}) == track && e.structured.value("addressed", false))
                addressed = true;
        }
    }
    return addressed;
}

bool qualifies_for_engagement(const TrackFeatures& track, bool spoke, const proxemics::ZoneConfig& config) {
    const auto zone = proxemics::classify_zone(track.distance, config);
    const bool proximity =
        zone == proxemics::Zone::Social && track.facing_offset <= config.facing_tolerance && track.dwell >= config.dwell_to_engage;
    const bool speech = spoke && proxemics::in_zone(zone);
    return proximity || speech;
}

EngagementDecision rule_engagement_policy(const PolicyInput& input, const proxemics::ZoneConfig& config) {
    if (input.current_state.mode != Mode::NotEngaged) throw StateError("engagement check while engaged");
    const TrackFeatures* best = nullptr;
    bool best_spoke = false;
    for (const auto& c : input.candidates) {
        const bool spoke = addressed_agent(input.journal_window, c.track_id);
        if (!qualifies_for_engagement(c, spoke, config)) continue;
        if (!best || closer(c, *best)) {
            best = &c;
            best_spoke = spoke;
        }
    }
    EngagementDecision d;
    if (!best) {
        d.verdict = Verdict::Stay;
        d.reason = "no one is showing intent to interact";
        return d;
    }
    d.verdict = Verdict::Engage;
    d.track = best->track_id;
    if (best_spoke) {
        d.reason = subject_of(*best) + " spoke to you";
    } else {
        d.reason = subject_of(*best) + " has been in the social zone facing you for " +
                   one_decimal(static_cast<double>(best->dwell) / 1000.0) + " seconds";
    }
    return d;
}

EngagementDecision rule_disengagement_check(const PolicyInput& input, const proxemics::ZoneConfig&) {
    const EngineState& s = input.current_state;
    if (s.mode == Mode::NotEngaged) throw StateError("disengagement check while not engaged");
    const std::string who = journal::subject_for(s.engaged_identity);
    EngagementDecision d;
    if (input.engaged_track_left) {
        d.verdict = Verdict::Disengage;
        d.reason = who + " left the zone";
        return d;
    }
    if (s.mode == Mode::AwaitingStayAnswer) {
        if (!input.last_user_utterance) {
            d.verdict = Verdict::Continue;
            d.reason = "waiting for an answer to the stay question";
            return d;
        }
        d.answer = classify_stay_answer(*input.last_user_utterance);
        switch (d.answer) {
            case StayAnswer::Decline:
                d.verdict = Verdict::Disengage;
                d.reason = who + " declined to stay";
                break;
            case StayAnswer::Accept:
                d.verdict = Verdict::Continue;
                d.reason = who + " agreed to stay";
                break;
            default:
                d.verdict = Verdict::Continue;
                d.reason = "answer to the stay question is unclear";
                break;
        }
        return d;
    }
    const int since_rearm = s.turn_count - s.stay_rearm_base;
    if (since_rearm > kTurnsBeforeStayPrompt && !s.stay_prompt_issued) {
        d.verdict = Verdict::RequestStay;
        d.reason = std::to_string(since_rearm) + " turns is over " + std::to_string(kTurnsBeforeStayPrompt);
        return d;
    }
    d.verdict = Verdict::Continue;
    d.reason = "conversation ongoing";
    return d;
}

EngagementDecision RulePolicy::check_engagement(const PolicyInput& input) {
    return rule_engagement_policy(input, config_);
}

EngagementDecision RulePolicy::check_disengagement(const PolicyInput& input) {
    return rule_disengagement_check(input, config_);
}

// ---------------------------------------------------------------------------
// LLM policy

std::optional<ParsedVerdict> parse_policy_reply(std::string_view reply) {
    auto start = reply.find_first_not_of(" \t\r\n");
    if (start == std::string_view::npos) return std::nullopt;
    reply.remove_prefix(start);
    auto line = reply.substr(0, reply.find('\n'));
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);

    const auto colon = line.find(':');
    std::string_view token = line.substr(0, colon);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    auto verdict = verdict_from_token(token);
    if (!verdict) return std::nullopt;
    std::string reason;
    if (colon != std::string_view::npos) {
        auto r = line.substr(colon + 1);
        const auto b = r.find_first_not_of(' ');
        if (b != std::string_view::npos) reason = std::string(r.substr(b));
    }
    return ParsedVerdict{*verdict, std::move(reason)};
}

LlmPolicyConfig default_llm_policy_config() {
    LlmPolicyConfig c;
    c.engagement_prompt =
        "You watch over an office hallway on behalf of a life-size conversational proxy of a colleague. "
        "The journal below lists what the sensors noticed: who is nearby, how far away, whether they face "
        "the proxy, and anything they said. Decide whether the proxy should start a conversation now. "
        "Start one when someone comes close, lingers while facing the proxy, or speaks to it; stay idle "
        "for people who are just walking past.\n"
        "Answer with a single line: ENGAGE or STAY, optionally followed by ': ' and a short reason.";
    c.disengagement_prompt =
        "You monitor a hallway conversation between a conversational proxy and a visitor. Keep the "
        "conversation going unless the visitor clearly wants to leave. Once it runs past five turns, the "
        "proxy should ask whether they can stay longer, and it must not end the conversation before the "
        "visitor has answered that question.\n"
        "Answer with a single line: CONTINUE, REQUEST_STAY or DISENGAGE, optionally followed by ': ' and a "
        "short reason.";
    return c;
}

LlmPolicy::LlmPolicy(std::shared_ptr<chat::Client> client, LlmPolicyConfig config, proxemics::ZoneConfig zones)
    : client_(std::move(client)), config_(std::move(config)), fallback_(zones) {}

chat::Request LlmPolicy::build_request(const PolicyInput& input, bool engagement_check) const {
    std::ostringstream user;
    user << "Journal:\n";
    for (const auto& e : input.journal_window) user << "[" << e.sequence_no << "] " << e.rendered << "\n";
    const auto& s = input.current_state;
    user << "\nState: " << to_string(s.mode) << ", turn count " << s.turn_count
         << (s.stay_prompt_issued ? ", stay question already asked" : "") << "\n";
    user << "\nPeople nearby:\n";
    for (const auto& c : input.candidates) {
        if (!proxemics::in_zone(c.zone)) continue;
        user << "- " << subject_of(c) << " (track " << c.track_id << "): " << proxemics::to_string(c.zone) << " zone, "
             << one_decimal(c.distance) << " m, facing offset " << std::lround(c.facing_offset) << " degrees, facing for "
             << one_decimal(static_cast<double>(c.dwell) / 1000.0) << " s\n";
    }
    if (input.last_user_utterance) user << "\nLatest answer from the visitor: \"" << *input.last_user_utterance << "\"\n";

    chat::Request req;
    req.model = config_.model;
    req.messages.push_back({"system", engagement_check ? config_.engagement_prompt : config_.disengagement_prompt});
    req.messages.push_back({"user", user.str()});
    return req;
}

namespace {

EngagementDecision with_fallback(EngagementDecision d, std::string warning) {
    d.fallback = true;
    d.warning = std::move(warning);
    return d;
}

}  // namespace

EngagementDecision LlmPolicy::check_engagement(const PolicyInput& input) {
    if (input.current_state.mode != Mode::NotEngaged) throw StateError("engagement check while engaged");
    std::vector<const TrackFeatures*> present;
    for (const auto& c : input.candidates)
        if (proxemics::in_zone(c.zone)) present.push_back(&c);
    if (present.empty()) return {Verdict::Stay, "nobody nearby"};
    if (!client_) return with_fallback(fallback_.check_engagement(input), "no decision service configured");

    std::string reply;
    try {
        reply = client_->complete(build_request(input, true), config_.timeout);
    } catch (const std::exception& e) {
        return with_fallback(fallback_.check_engagement(input), std::string("decision service failed: ") + e.what());
    }
    auto parsed = parse_policy_reply(reply);
    if (!parsed || (parsed->verdict != Verdict::Engage && parsed->verdict != Verdict::Stay)) {
        return with_fallback(fallback_.check_engagement(input), "unusable decision reply: " + reply.substr(0, 120));
    }
    EngagementDecision d{parsed->verdict, parsed->reason};
    if (d.verdict == Verdict::Engage) {
        d.track = (*std::min_element(present.begin(), present.end(),
                                     [](const auto* a, const auto* b) { return closer(*a, *b); }))
                      ->track_id;
    }
    return d;
}

EngagementDecision LlmPolicy::check_disengagement(const PolicyInput& input) {
    const auto& s = input.current_state;
    if (s.mode == Mode::NotEngaged) throw StateError("disengagement check while not engaged");
    if (input.engaged_track_left) return fallback_.check_disengagement(input);
    if (s.mode == Mode::AwaitingStayAnswer && !input.last_user_utterance) return fallback_.check_disengagement(input);
    if (!client_) return with_fallback(fallback_.check_disengagement(input), "no decision service configured");

    std::string reply;
    try {
        reply = client_->complete(build_request(input, false), config_.timeout);
    } catch (const std::exception& e) {
        return with_fallback(fallback_.check_disengagement(input), std::string("decision service failed: ") + e.what());
    }
    auto parsed = parse_policy_reply(reply);
    if (!parsed || parsed->verdict == Verdict::Engage || parsed->verdict == Verdict::Stay) {
        return with_fallback(fallback_.check_disengagement(input), "unusable decision reply: " + reply.substr(0, 120));
    }
    EngagementDecision d{parsed->verdict, parsed->reason};
    if (s.mode == Mode::AwaitingStayAnswer) {
        d.answer = d.verdict == Verdict::Disengage ? StayAnswer::Decline
                 : d.verdict == Verdict::Continue  ? StayAnswer::Accept
                                                   : StayAnswer::Unclear;
    }
    return d;
}

EngagementDecision llm_engagement_policy(const PolicyInput& input, const LlmPolicyConfig& config, chat::Client& client,
                                         const proxemics::ZoneConfig& zones) {
    std::shared_ptr<chat::Client> borrowed(&client, [](chat::Client*) {});
    LlmPolicy policy(borrowed, config, zones);
    return policy.check_engagement(input);
}

// ---------------------------------------------------------------------------
// Transition function

std::string default_farewell() { return "It was lovely chatting with you. I'll let you get on with your day!"; }

Millis speaking_duration(std::string_view text, Millis ms_per_word) {
    Millis words = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = std::isspace(static_cast<unsigned char>(c));
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    return std::max<Millis>(1, words) * ms_per_word;
}

namespace {

class Stepper {
public:
    Stepper(const EngineState& s, const WorldView& world, Policies policies, const StepConfig& config, Millis now)
        : s(s), world_(world), policies_(policies), config_(config), now_(now) {}

    EngineState s;
    std::vector<Effect> effects;

    void operator()(const PresenceUpdate& e) {
        const auto& ev = e.event;
        Json structured{{"event", proxemics::to_string(ev.kind)},
                        {"track_id", ev.track_id},
                        {"zone", proxemics::to_string(ev.zone)},
                        {"previous_zone", proxemics::to_string(ev.previous)},
                        {"distance", ev.distance},
                        {"facing_offset", ev.facing_offset},
                        {"facing", ev.facing}};
        if (ev.kind == proxemics::PresenceKind::LeftZone)
            structured["reason"] = ev.reason == proxemics::LeaveReason::Timeout ? "timeout" : "zone_exit";
        if (e.identity) structured["tag_id"] = e.identity->tag_id;
        append(EntryKind::Presence, journal::subject_for(e.identity), std::move(structured),
               journal::render_presence(ev, e.identity, ev.distance, ev.facing));

        if (ev.kind == proxemics::PresenceKind::LeftZone && engaged() && s.engaged_track == ev.track_id) {
            end_episode(journal::subject_for(s.engaged_identity) + " left the zone", "presence", false);
        }
    }

    void operator()(const IdentityUpdate& e) {
        if (e.identity) {
            const auto* track = find_candidate(e.track);
            if (track && proxemics::in_zone(track->zone)) {
                const long meters = std::lround(track->distance);
                append(EntryKind::Presence, e.identity->name,
                       Json{{"event", "identified"}, {"track_id", e.track}, {"tag_id", e.identity->tag_id},
                            {"distance", track->distance}},
                       e.identity->name + " has been recognized, " + std::to_string(meters) +
                           (meters == 1 ? " meter" : " meters") + " away.");
            }
        }
        if (engaged() && s.engaged_track == e.track) s.engaged_identity = e.identity;
    }

    void operator()(const UserSpeech& e) {
        if (!engaged() || s.engaged_track != e.track) return;
        partner_speech();
    }

    void operator()(const UserUtterance& e) {
        const bool partner = engaged() && s.engaged_track == e.track;
        if (partner) partner_speech();
        append(EntryKind::UtteranceUser, journal::subject_for(e.identity),
               Json{{"track_id", e.track},
                    {"text", e.utterance.text},
                    {"addressed", s.mode == Mode::NotEngaged},
                    {"partner", partner},
                    {"started", e.utterance.started},
                    {"ended", e.utterance.ended}},
               journal::render_user_utterance(journal::subject_for(e.identity), e.utterance.text));
        if (s.mode == Mode::NotEngaged) {
            effects.push_back(FollowUpCheck{CheckTrigger::Utterance});
            return;
        }
        if (!partner) return;
        if (s.mode == Mode::Engaged) {
            request(Purpose::Reply);
            cue(BehaviorCue::Listening);
        } else {
            s.stay_answer = e.utterance.text;
            effects.push_back(FollowUpCheck{CheckTrigger::Answer});
        }
    }

    void operator()(const AgentReply& r) {
        if (!engaged() || r.generation != s.generation || !s.awaiting_reply) {
            effects.push_back(ReplyDiscarded{r.generation});
            return;
        }
        const Purpose purpose = *s.awaiting_reply;
        s.awaiting_reply.reset();
        Json structured{{"generation", r.generation}, {"purpose", conversation::to_string(purpose)}, {"fallback", r.fallback}};
        if (r.warning) structured["warning"] = *r.warning;
        speak(r.text, purpose, r.generation, std::move(structured));
        if (purpose == Purpose::Reply) ++s.turn_count;
    }

    void operator()(const AgentSpeechEnded& e) {
        if (!s.speaking || s.speaking->generation != e.generation) return;
        const Purpose purpose = s.speaking->purpose;
        s.speaking.reset();
        if (!engaged()) return;
        cue(BehaviorCue::Listening);
        if (purpose == Purpose::Reply) effects.push_back(FollowUpCheck{CheckTrigger::TurnComplete});
    }

    void operator()(const Check& c) {
        if (s.mode == Mode::NotEngaged) {
            engagement_check(c.trigger);
        } else {
            disengagement_check(c.trigger);
        }
    }

    void operator()(const UnknownEvent& e) { effects.push_back(ErrorRaised{"unknown_event", "unknown event kind '" + e.kind + "'"}); }

private:
    bool engaged() const { return s.mode != Mode::NotEngaged; }

    const TrackFeatures* find_candidate(const TrackId& track) const {
        for (const auto& c : world_.candidates)
            if (c.track_id == track) return &c;
        return nullptr;
    }

    void append(EntryKind kind, std::string subject, Json structured, std::string rendered) {
        JournalEntry entry;
        entry.timestamp = now_;
        entry.kind = kind;
        entry.subject = std::move(subject);
        entry.structured = std::move(structured);
        entry.rendered = std::move(rendered);
        effects.push_back(JournalAppend{std::move(entry)});
    }

    void decision(const std::string& subject, Verdict verdict, const std::string& reason, const char* check,
                  CheckTrigger trigger, const EngagementDecision* source = nullptr, const std::string& note = {}) {
        Json structured{{"verdict", to_string(verdict)}, {"reason", reason}, {"check", check}, {"trigger", to_string(trigger)}};
        if (s.engaged_track) structured["track_id"] = *s.engaged_track;
        if (source && source->fallback) {
            structured["fallback"] = true;
            if (source->warning) structured["warning"] = *source->warning;
        }
        if (!note.empty()) structured["note"] = note;
        std::string rendered = std::string(check == std::string_view("engagement") ? "Engagement" : "Disengagement") +
                               " check: " + std::string(to_string(verdict));
        if (!reason.empty()) rendered += " (" + reason + ")";
        if (source && source->fallback) rendered += " [fallback to rules]";
        rendered += ".";
        append(EntryKind::Decision, subject, std::move(structured), std::move(rendered));
    }

    void cue(BehaviorCue c) {
        if (s.cue == c) return;
        s.cue = c;
        effects.push_back(CueChanged{c});
    }

    void request(Purpose purpose) {
        ++s.generation;
        s.awaiting_reply = purpose;
        effects.push_back(RequestUtterance{purpose, s.generation});
    }

    void speak(const std::string& text, Purpose purpose, std::uint64_t generation, Json structured) {
        Utterance u;
        u.speaker = Speaker::Agent;
        u.text = text;
        u.started = now_;
        u.ended = now_ + speaking_duration(text, config_.ms_per_word);
        u.final = true;
        s.speaking = SpeakingState{generation, u.started, u.ended, text, purpose};
        append(EntryKind::UtteranceAgent, journal::subject_for(s.engaged_identity), std::move(structured),
               journal::render_agent_utterance(text, false));
        effects.push_back(Speak{u, purpose, generation});
        cue(BehaviorCue::Speaking);
    }

    // The engaged person started or continued speaking.
    void partner_speech() {
        conversation::FloorState floor;
        if (s.speaking) floor.speaking = conversation::FloorState::Speaking{s.speaking->generation, s.speaking->started, s.speaking->until};
        // the stay question is never dropped before it is asked
        if (s.awaiting_reply && *s.awaiting_reply != Purpose::StayPrompt) floor.awaiting_reply = s.generation;

        const auto outcome = conversation::barge_in(floor, now_);
        if (outcome.interrupt_speech) {
            const auto& sp = *s.speaking;
            append(EntryKind::UtteranceAgent, journal::subject_for(s.engaged_identity),
                   Json{{"generation", sp.generation}, {"purpose", conversation::to_string(sp.purpose)},
                        {"interrupted", true}, {"interrupted_at", now_}},
                   journal::render_agent_utterance(sp.text, true));
            effects.push_back(InterruptAgent{sp.generation, now_});
            s.speaking.reset();
        }
        if (outcome.supersede_reply) {
            ++s.generation;
            s.awaiting_reply.reset();
        }
        cue(BehaviorCue::Listening);
    }

    PolicyInput policy_input() const {
        PolicyInput in;
        in.journal_window = world_.journal_window;
        in.current_state = s;
        in.candidates = world_.candidates;
        if (engaged()) {
            const auto* t = find_candidate(*s.engaged_track);
            in.engaged_track_left = !t || !proxemics::in_zone(t->zone);
        }
        return in;
    }

    void engagement_check(CheckTrigger trigger) {
        if (trigger == CheckTrigger::TurnComplete || trigger == CheckTrigger::Answer) return;
        if (!policies_.engagement) return;
        const auto d = policies_.engagement->check_engagement(policy_input());
        const TrackFeatures* chosen = d.track ? find_candidate(*d.track) : nullptr;

        if (d.verdict != Verdict::Engage || !chosen) {
            if (d.fallback) {
                const TrackFeatures* nearest = nullptr;
                for (const auto& c : world_.candidates)
                    if (proxemics::in_zone(c.zone) && (!nearest || closer(c, *nearest))) nearest = &c;
                decision(nearest ? subject_of(*nearest) : std::string(journal::kPasserby), d.verdict, d.reason,
                         "engagement", trigger, &d);
            }
            return;
        }

        s.mode = Mode::Engaged;
        s.engaged_track = chosen->track_id;
        s.engaged_identity = chosen->identity;
        s.turn_count = 0;
        s.stay_prompt_issued = false;
        s.stay_rearm_base = 0;
        s.stay_answer.reset();
        s.episode_started = now_;
        ++s.episode_id;
        decision(subject_of(*chosen), Verdict::Engage, d.reason, "engagement", trigger, &d);
        effects.push_back(EpisodeStarted{s.episode_id, chosen->track_id, chosen->identity});
        request(Purpose::Greeting);
        cue(BehaviorCue::Greeting);
    }

    void disengagement_check(CheckTrigger trigger) {
        // Only turn completions, periodic ticks and stay answers consult the policy.
        if (trigger == CheckTrigger::Observation || trigger == CheckTrigger::Utterance) return;
        // While waiting on the stay question nothing but the answer may move the engine.
        if (s.mode == Mode::AwaitingStayAnswer && trigger != CheckTrigger::Answer) return;
        if (s.mode == Mode::Engaged && trigger == CheckTrigger::Answer) return;
        if (s.mode == Mode::AwaitingStayAnswer && !s.stay_answer) return;
        if (s.mode == Mode::Engaged && (!s.floor_free() || world_.partner_speaking)) return;
        if (!policies_.disengagement) return;

        PolicyInput in = policy_input();
        if (s.mode == Mode::AwaitingStayAnswer) in.last_user_utterance = s.stay_answer;
        const auto d = policies_.disengagement->check_disengagement(in);
        const std::string who = journal::subject_for(s.engaged_identity);

        if (in.engaged_track_left) {
            end_episode(who + " left the zone", "disengagement", false, trigger);
            return;
        }

        if (s.mode == Mode::Engaged) {
            Verdict verdict = d.verdict;
            std::string note;
            if (verdict == Verdict::Disengage) {
                // ending requires asking first
                verdict = Verdict::RequestStay;
                note = "disengage verdict converted to a stay question";
            }
            if (verdict == Verdict::RequestStay) {
                s.mode = Mode::AwaitingStayAnswer;
                s.stay_prompt_issued = true;
                decision(who, Verdict::RequestStay, d.reason, "disengagement", trigger, &d, note);
                request(Purpose::StayPrompt);
            } else if (d.fallback) {
                decision(who, verdict, d.reason, "disengagement", trigger, &d);
            }
            return;
        }

        // AwaitingStayAnswer with an answer in hand.
        s.stay_answer.reset();
        if (d.verdict == Verdict::Disengage) {
            end_episode(d.reason, "disengagement", true, trigger, &d);
            return;
        }
        if (d.verdict == Verdict::Continue && d.answer != StayAnswer::Unclear) {
            s.mode = Mode::Engaged;
            s.stay_prompt_issued = false;
            s.stay_rearm_base = s.turn_count;
            decision(who, Verdict::Continue, d.reason, "disengagement", trigger, &d);
        } else if (d.fallback) {
            decision(who, Verdict::Continue, d.reason, "disengagement", trigger, &d);
        }
        request(Purpose::Reply);
        cue(BehaviorCue::Listening);
    }

    void end_episode(const std::string& reason, const char* check, bool farewell,
                     CheckTrigger trigger = CheckTrigger::Periodic, const EngagementDecision* source = nullptr) {
        const std::string who = journal::subject_for(s.engaged_identity);
        decision(who, Verdict::Disengage, reason, check, trigger, source);
        if (farewell) {
            ++s.generation;
            speak(config_.farewell.empty() ? default_farewell() : config_.farewell, Purpose::Farewell, s.generation,
                  Json{{"generation", s.generation}, {"purpose", "farewell"}, {"fallback", false}});
        }
        effects.push_back(EpisodeEnded{s.episode_id, *s.engaged_track, s.engaged_identity, s.turn_count});
        s.disengaged_at[*s.engaged_track] = now_;
        s.mode = Mode::NotEngaged;
        s.engaged_track.reset();
        s.engaged_identity.reset();
        s.turn_count = 0;
        s.stay_prompt_issued = false;
        s.stay_rearm_base = 0;
        s.stay_answer.reset();
        s.awaiting_reply.reset();
        s.speaking.reset();
        ++s.generation;
        cue(BehaviorCue::IdleReading);
    }

    const WorldView& world_;
    Policies policies_;
    const StepConfig& config_;
    Millis now_;
};

}  // namespace

StepResult step(const EngineState& state, const EngineEvent& event, const WorldView& world, Policies policies,
                const StepConfig& config, Millis now) {
    Stepper stepper(state, world, policies, config, now);
    std::visit(stepper, event);
    return {std::move(stepper.s), std::move(stepper.effects)};
}

}  // namespace ditto::engagement
