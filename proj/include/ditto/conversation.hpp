#pragma once

#include "ditto/chat.hpp"
#include "ditto/common.hpp"
#include "ditto/memory.hpp"
#include "ditto/transcript.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ditto::conversation {

using Json = nlohmann::json;

inline constexpr std::string_view kStayPrompt = "Would you like to stay and chat a little longer?";
inline constexpr std::string_view kScriptExhaustedReply = "Good chatting — I should get back to my book.";
inline constexpr std::string_view kResponderFailureReply = "Sorry, I lost my train of thought.";
inline constexpr std::string_view kPasserbyAddressee = "a passerby";

// ---------------------------------------------------------------------------
// End of utterance

struct SpeechFragment {
    Millis timestamp = 0;
    std::string text;
    bool final = false;
};

// Joins streamed speech fragments into utterances. An utterance closes when the client
// marks a fragment final or when the speaker has been silent for `silence_window`.
class UtteranceAssembler {
public:
    explicit UtteranceAssembler(Millis silence_window = 1500) : silence_window_(silence_window) {}

    // May close the previous utterance (silence elapsed before this fragment) and/or this one.
    std::vector<Utterance> push(const SpeechFragment& fragment);

    // Closes the pending utterance if the silence window has run out by `now`.
    std::optional<Utterance> poll(Millis now);

    bool pending() const { return open_.has_value(); }
    // When silence would close the pending utterance.
    std::optional<Millis> deadline() const;
    void reset() { open_.reset(); }

private:
    struct Open {
        Utterance utterance;
        Millis last_fragment = 0;
    };
    Utterance close();

    Millis silence_window_;
    std::optional<Open> open_;
};

// Batch form: runs the fragments through an assembler and reports the first finished
// utterance as of `now`, or nullopt while speech is still pending.
std::optional<Utterance> detect_end_of_utterance(std::span<const SpeechFragment> fragments, Millis silence_window,
                                                 Millis now);

// ---------------------------------------------------------------------------
// Barge-in

struct FloorState {
    struct Speaking {
        std::uint64_t generation = 0;
        Millis started = 0;
        Millis until = 0;  // exclusive
    };
    std::optional<Speaking> speaking;
    std::optional<std::uint64_t> awaiting_reply;  // generation of the outstanding responder request
};

struct BargeIn {
    bool interrupt_speech = false;  // the in-flight agent utterance is cut off
    bool supersede_reply = false;   // the outstanding reply will be discarded on arrival
};

// User speech at `at` against the agent's floor. Speech exactly at the end of an
// agent utterance does not interrupt it.
BargeIn barge_in(const FloorState& floor, Millis at);

// ---------------------------------------------------------------------------
// Prompt assembly

struct Topic {
    std::string title;
    std::string text;

    bool operator==(const Topic&) const = default;
};

// First topic whose title does not occur (case-insensitively) in the summary.
std::optional<Topic> choose_topic(std::span<const Topic> topics_of_day, std::string_view summary);

enum class Purpose { Greeting, Reply, StayPrompt, Farewell };
std::string_view to_string(Purpose purpose);

struct Addressee {
    std::optional<std::string> name;         // nullopt for an untagged passerby
    std::optional<std::string> context_key;  // Who key, when the person is listed
};

struct PromptSection {
    std::string heading;
    std::string body;
};

struct PromptBundle {
    std::string system_text;
    std::vector<PromptSection> sections;
    Transcript transcript;
    std::string addressee;
    Purpose purpose = Purpose::Reply;
    std::optional<std::string> warning;
};

// Default conversation-rule text appended to every prompt.
std::string default_rules_text();

// Builds the system prompt in fixed section order: background, personality, relationship,
// intent, prior summary, topic, rules. Passerby prompts carry no relationship or intent
// sections. A tagged person without a context entry is addressed by name only and the
// bundle carries a warning.
PromptBundle assemble_prompt(const memory::UserContext& context,
                             std::string_view prior_summary,
                             const Transcript& transcript,
                             const std::optional<Topic>& topic,
                             const Addressee& addressee,
                             Purpose purpose = Purpose::Reply,
                             std::string_view rules_text = {});

// ---------------------------------------------------------------------------
// Responders

struct ResponderReply {
    std::string text;
    bool fallback = false;
    std::optional<std::string> warning;
};

class Responder {
public:
    virtual ~Responder() = default;
    virtual ResponderReply respond(const PromptBundle& bundle) = 0;
    virtual std::string kind() const = 0;
    // New daily script table; responders without one ignore it.
    virtual void replace_script(std::vector<std::string>) {}
};

// Deterministic replies from an ordered table.
class ScriptedResponder final : public Responder {
public:
    explicit ScriptedResponder(std::vector<std::string> script);
    ResponderReply respond(const PromptBundle& bundle) override;
    std::string kind() const override { return "scripted"; }
    void replace_script(std::vector<std::string> script) override;
    std::size_t remaining() const { return script_.size() - next_; }

private:
    std::vector<std::string> script_;
    std::size_t next_ = 0;
};

// Sends the bundle to a chat-completion endpoint. Failures of any kind degrade to a
// fixed apology instead of surfacing to the engine.
class ExternalResponder final : public Responder {
public:
    ExternalResponder(std::shared_ptr<chat::Client> client, std::chrono::milliseconds timeout,
                      std::string model = {});
    ResponderReply respond(const PromptBundle& bundle) override;
    std::string kind() const override { return "external"; }

private:
    std::shared_ptr<chat::Client> client_;
    std::chrono::milliseconds timeout_;
    std::string model_;
};

chat::Request to_chat_request(const PromptBundle& bundle, const std::string& model = {});

// Replays agent lines captured in an earlier session, in order.
class RecordedResponder final : public Responder {
public:
    explicit RecordedResponder(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    ResponderReply respond(const PromptBundle& bundle) override;
    std::string kind() const override { return "recorded"; }

private:
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
};

// Topics and script table for one day.
struct DailyConfig {
    std::string date;
    std::vector<Topic> topics;
    std::vector<std::string> script;
};

DailyConfig daily_from_json(const Json& j);
Json to_json(const DailyConfig& daily);

}  // namespace ditto::conversation
