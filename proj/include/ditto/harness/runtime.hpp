#pragma once

#include "ditto/chat.hpp"
#include "ditto/conversation.hpp"
#include "ditto/engagement.hpp"
#include "ditto/harness/config.hpp"
#include "ditto/harness/scenario.hpp"
#include "ditto/harness/wire.hpp"
#include "ditto/journal.hpp"
#include "ditto/memory.hpp"
#include "ditto/proxemics.hpp"

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace ditto::harness {

// One responder request as the engine issued it, with the reply it got.
struct PromptRecord {
    std::uint64_t generation = 0;
    std::uint64_t episode_id = 0;
    conversation::Purpose purpose = conversation::Purpose::Reply;
    std::string addressee;
    std::optional<std::string> person_key;
    std::optional<std::string> topic;
    std::string prior_summary;
    std::string system_text;
    std::string reply;
    bool fallback = false;
    std::optional<std::string> warning;         // from the responder
    std::optional<std::string> prompt_warning;  // from prompt assembly

    bool operator==(const PromptRecord&) const = default;
};

Json to_json(const PromptRecord& p);
PromptRecord prompt_from_json(const Json& j);

struct RuntimeOptions {
    EngineConfig config;
    Setup setup;
    std::unique_ptr<conversation::Responder> responder;
    std::shared_ptr<chat::Client> decision_client;  // used by llm policies
    std::optional<std::filesystem::path> journal_path;
    std::optional<std::filesystem::path> memory_path;  // loaded when present, saved after every summary
};

// Drives the engine over a logical clock. Inputs are handled at their timestamps; agent
// speech, responder replies, silence deadlines, track timeouts and periodic checks are
// timers fired in time order in between.
class Runtime {
public:
    using Listener = std::function<void(const Json&)>;

    explicit Runtime(RuntimeOptions options);
    Runtime(const Runtime&) = delete;
    Runtime& operator=(const Runtime&) = delete;

    void set_listener(Listener listener) { listener_ = std::move(listener); }

    // Throws OrderingError for a timestamp behind the clock (or behind the track's last
    // observation) and StateError for sensor input while stopped; the input is then ignored.
    void submit(const Inbound& input);

    void advance_to(Millis t);
    // Fires pending timers until none remain or `horizon` ms past the current time.
    void settle(Millis horizon = 60000);

    Json state_message() const;
    // State plus recent journal, transcript and memory, for clients that (re)connect.
    Json snapshot() const;

    Millis now() const { return now_; }
    // Earliest pending timer, silence deadline or track timeout.
    std::optional<Millis> next_due() const;
    bool running() const { return running_; }
    const engagement::EngineState& state() const { return state_; }
    const journal::Journal& journal() const { return journal_; }
    const Transcript& transcript() const { return transcript_; }
    const memory::MemoryStore& memory() const { return memory_; }
    const memory::UserContext& context() const { return context_.active(); }
    const std::vector<PromptRecord>& prompts() const { return prompts_; }
    const std::vector<Inbound>& inputs() const { return inputs_; }
    const std::vector<std::uint64_t>& discarded_replies() const { return discarded_; }
    const std::vector<Json>& errors() const { return errors_; }
    const proxemics::PresenceTracker& tracker() const { return tracker_; }
    const EngineConfig& config() const { return config_; }

private:
    struct SpeechEndTimer {
        std::uint64_t generation;
    };
    struct ReplyTimer {
        engagement::AgentReply reply;
    };
    struct PeriodicTimer {
        std::uint64_t episode_id;
    };
    struct Timer {
        Millis at = 0;
        std::uint64_t order = 0;
        std::variant<SpeechEndTimer, ReplyTimer, PeriodicTimer> what;
    };
    struct Later {
        bool operator()(const Timer& a, const Timer& b) const {
            return a.at != b.at ? a.at > b.at : a.order > b.order;
        }
    };

    void handle(const MoveInput& m);
    void handle(const TagInput& t);
    void handle(const SpeechInput& s);
    void handle(const ControlInput& c);

    void schedule(Millis at, std::variant<SpeechEndTimer, ReplyTimer, PeriodicTimer> what);
    void expire_tracks(Millis at);
    void close_utterance(const TrackId& track, Utterance utterance);
    void dispatch(engagement::EngineEvent event);
    void apply(const engagement::Effect& effect);
    void request_utterance(const engagement::RequestUtterance& r);
    void end_of_episode(const engagement::EpisodeEnded& e);
    engagement::WorldView world_view() const;
    std::vector<std::string> protected_names() const;
    void emit(const Json& message);
    void emit_state_if_changed();

    EngineConfig config_;
    proxemics::IdentityRegistry registry_;
    memory::ContextManager context_;
    std::string date_;
    conversation::DailyConfig daily_;
    std::unique_ptr<conversation::Responder> responder_;
    std::unique_ptr<engagement::Policy> engagement_policy_;
    std::unique_ptr<engagement::Policy> disengagement_policy_;
    memory::TemplateSummarizer summarizer_;
    memory::MemoryStore memory_;
    std::optional<std::filesystem::path> memory_path_;

    journal::Journal journal_;
    proxemics::PresenceTracker tracker_;
    proxemics::IdentityFusion fusion_;
    engagement::EngineState state_;
    Millis now_ = 0;
    bool running_ = true;

    std::map<TrackId, conversation::UtteranceAssembler> assemblers_;
    std::map<TrackId, std::pair<Millis, Utterance>> last_user_utterance_;
    Transcript transcript_;
    Transcript episode_transcript_;
    std::map<std::uint64_t, std::pair<std::size_t, std::size_t>> agent_index_;  // generation -> (session, episode)
    std::optional<conversation::Topic> episode_topic_;

    std::priority_queue<Timer, std::vector<Timer>, Later> timers_;
    std::uint64_t timer_order_ = 0;
    std::deque<engagement::EngineEvent> pending_;

    std::vector<PromptRecord> prompts_;
    std::vector<Inbound> inputs_;
    std::vector<std::uint64_t> discarded_;
    std::vector<Json> errors_;
    Listener listener_;
    Json last_state_;
};

// Engine config with a scenario's overrides applied on top.
EngineConfig effective_config(const EngineConfig& base, const Json& overrides);

}  // namespace ditto::harness
