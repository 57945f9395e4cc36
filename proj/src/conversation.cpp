#include "ditto/conversation.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace ditto::conversation {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

// ---------------------------------------------------------------------------

Utterance UtteranceAssembler::close() {
    Utterance u = std::move(open_->utterance);
    u.final = true;
    open_.reset();
    return u;
}

std::vector<Utterance> UtteranceAssembler::push(const SpeechFragment& fragment) {
    std::vector<Utterance> done;
    if (open_ && fragment.timestamp - open_->last_fragment >= silence_window_) done.push_back(close());

    const std::string text = trim(fragment.text);
    if (!text.empty()) {
        if (!open_) {
            Open o;
            o.utterance.speaker = Speaker::User;
            o.utterance.started = fragment.timestamp;
            open_ = std::move(o);
        }
        auto& u = open_->utterance;
        if (!u.text.empty()) u.text += ' ';
        u.text += text;
        u.ended = fragment.timestamp;
        open_->last_fragment = fragment.timestamp;
    }
    if (fragment.final && open_) {
        open_->utterance.ended = fragment.timestamp;
        done.push_back(close());
    }
    return done;
}

std::optional<Utterance> UtteranceAssembler::poll(Millis now) {
    if (open_ && now - open_->last_fragment >= silence_window_) return close();
    return std::nullopt;
}

std::optional<Millis> UtteranceAssembler::deadline() const {
    if (!open_) return std::nullopt;
    return open_->last_fragment + silence_window_;
}

std::optional<Utterance> detect_end_of_utterance(std::span<const SpeechFragment> fragments, Millis silence_window,
                                                 Millis now) {
    UtteranceAssembler assembler(silence_window);
    for (const auto& f : fragments) {
        auto done = assembler.push(f);
        if (!done.empty()) return done.front();
    }
    return assembler.poll(now);
}

// ---------------------------------------------------------------------------

BargeIn barge_in(const FloorState& floor, Millis at) {
    BargeIn out;
    if (floor.speaking && at >= floor.speaking->started && at < floor.speaking->until) out.interrupt_speech = true;
    if (floor.awaiting_reply) out.supersede_reply = true;
    return out;
}

// ---------------------------------------------------------------------------

std::optional<Topic> choose_topic(std::span<const Topic> topics_of_day, std::string_view summary) {
    const std::string haystack = lower(summary);
    for (const auto& topic : topics_of_day) {
        const std::string token = lower(trim(topic.title));
        if (token.empty()) continue;
        if (haystack.find(token) == std::string::npos) return topic;
    }
    return std::nullopt;
}

std::string_view to_string(Purpose purpose) {
    switch (purpose) {
        case Purpose::Greeting: return "greeting";
        case Purpose::Reply: return "reply";
        case Purpose::StayPrompt: return "stay_prompt";
        case Purpose::Farewell: return "farewell";
    }
    return "reply";
}

std::string default_rules_text() {
    return "Keep the conversation going with questions of your own, and only wind it down when the person "
           "clearly wants to leave. This is a quick hallway chat: once it runs past five turns, respect their "
           "time and ask whether they can stay longer. Never end the conversation before they have answered "
           "that question.";
}

PromptBundle assemble_prompt(const memory::UserContext& context,
                             std::string_view prior_summary,
                             const Transcript& transcript,
                             const std::optional<Topic>& topic,
                             const Addressee& addressee,
                             Purpose purpose,
                             std::string_view rules_text) {
    PromptBundle bundle;
    bundle.purpose = purpose;
    bundle.transcript = transcript;
    bundle.addressee = addressee.name ? *addressee.name : std::string(kPasserbyAddressee);

    const memory::RelationshipEntry* relation = nullptr;
    if (addressee.name) {
        if (addressee.context_key) relation = context.find(*addressee.context_key);
        if (!relation) {
            bundle.warning = "no context entry for " + *addressee.name + "; addressing them as a named passerby";
        }
    }

    bundle.sections.push_back({"Background", context.background});
    bundle.sections.push_back({"Personality traits", context.personality_traits});
    if (relation) {
        bundle.sections.push_back({"Relationship with " + bundle.addressee, relation->relationship_info});
        bundle.sections.push_back({"Intent for " + bundle.addressee, relation->source_intent});
    }
    if (!prior_summary.empty()) bundle.sections.push_back({"Prior conversations", std::string(prior_summary)});
    if (topic) {
        bundle.sections.push_back(
            {"Topic of the day",
             topic->title + ": " + topic->text +
                 "\nPick a topic of the day that does not already appear in the prior conversations."});
    }
    bundle.sections.push_back({"Conversation rules", rules_text.empty() ? default_rules_text() : std::string(rules_text)});

    std::ostringstream out;
    out << "You are talking with " << bundle.addressee << ".\n";
    for (const auto& s : bundle.sections) out << "\n## " << s.heading << "\n" << s.body << "\n";
    bundle.system_text = out.str();
    return bundle;
}

// ---------------------------------------------------------------------------

ScriptedResponder::ScriptedResponder(std::vector<std::string> script) : script_(std::move(script)) {}

void ScriptedResponder::replace_script(std::vector<std::string> script) {
    script_ = std::move(script);
    next_ = 0;
}

ResponderReply ScriptedResponder::respond(const PromptBundle& bundle) {
    if (bundle.purpose == Purpose::StayPrompt) return {std::string(kStayPrompt), false, std::nullopt};
    if (next_ >= script_.size()) {
        return {std::string(kScriptExhaustedReply), true, "script exhausted after " + std::to_string(script_.size()) + " replies"};
    }
    return {script_[next_++], false, std::nullopt};
}

chat::Request to_chat_request(const PromptBundle& bundle, const std::string& model) {
    chat::Request req;
    req.model = model;
    req.messages.push_back({"system", bundle.system_text});
    for (const auto& u : bundle.transcript) {
        std::string text = u.text;
        if (u.interrupted) text += " [interrupted]";
        req.messages.push_back({u.speaker == Speaker::User ? "user" : "assistant", text});
    }
    switch (bundle.purpose) {
        case Purpose::Greeting:
            req.messages.push_back({"system", "Greet " + bundle.addressee + " and open the conversation."});
            break;
        case Purpose::Farewell:
            req.messages.push_back({"system", "Say a brief, friendly goodbye."});
            break;
        default:
            break;
    }
    return req;
}

ExternalResponder::ExternalResponder(std::shared_ptr<chat::Client> client, std::chrono::milliseconds timeout,
                                     std::string model)
    : client_(std::move(client)), timeout_(timeout), model_(std::move(model)) {}

ResponderReply ExternalResponder::respond(const PromptBundle& bundle) {
    // the stay question is always asked verbatim
    if (bundle.purpose == Purpose::StayPrompt) return {std::string(kStayPrompt), false, std::nullopt};
    if (!client_) return {std::string(kResponderFailureReply), true, "no responder endpoint configured"};
    try {
        auto text = trim(client_->complete(to_chat_request(bundle, model_), timeout_));
        if (text.empty()) throw chat::TransportError("empty completion");
        return {std::move(text), false, std::nullopt};
    } catch (const std::exception& e) {
        return {std::string(kResponderFailureReply), true, e.what()};
    }
}

ResponderReply RecordedResponder::respond(const PromptBundle& bundle) {
    if (bundle.purpose == Purpose::StayPrompt) return {std::string(kStayPrompt), false, std::nullopt};
    if (next_ >= replies_.size()) return {std::string(kResponderFailureReply), true, "recording exhausted"};
    return {replies_[next_++], false, std::nullopt};
}

// ---------------------------------------------------------------------------

DailyConfig daily_from_json(const Json& j) {
    DailyConfig d;
    try {
        d.date = j.value("date", std::string{});
        if (auto it = j.find("topics"); it != j.end()) {
            for (const auto& t : *it) {
                Topic topic;
                topic.title = t.at("title").get<std::string>();
                topic.text = t.value("text", std::string{});
                if (trim(topic.title).empty()) throw ValidationError("topic title required");
                d.topics.push_back(std::move(topic));
            }
        }
        if (auto it = j.find("script"); it != j.end()) d.script = it->get<std::vector<std::string>>();
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("daily config: ") + e.what());
    }
    return d;
}

Json to_json(const DailyConfig& d) {
    Json topics = Json::array();
    for (const auto& t : d.topics) topics.push_back({{"title", t.title}, {"text", t.text}});
    return {{"date", d.date}, {"topics", topics}, {"script", d.script}};
}

}  // namespace ditto::conversation
