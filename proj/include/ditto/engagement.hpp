#pragma once

#include "ditto/chat.hpp"
#include "ditto/common.hpp"
#include "ditto/conversation.hpp"
#include "ditto/journal.hpp"
#include "ditto/proxemics.hpp"
#include "ditto/transcript.hpp"

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ditto::engagement {

using proxemics::PersonIdentity;
using conversation::Purpose;

enum class Mode { NotEngaged, Engaged, AwaitingStayAnswer };
enum class BehaviorCue { IdleReading, Listening, Greeting, Speaking };
enum class Verdict { Engage, Stay, Continue, RequestStay, Disengage };
enum class StayAnswer { None, Accept, Decline, Unclear };

std::string_view to_string(Mode mode);
std::string_view to_string(BehaviorCue cue);
std::string_view to_string(Verdict verdict);
std::optional<Verdict> verdict_from_token(std::string_view token);

// Turns after which (counted from the last accepted stay prompt) the Ditto asks to continue.
inline constexpr int kTurnsBeforeStayPrompt = 5;

struct SpeakingState {
    std::uint64_t generation = 0;
    Millis started = 0;
    Millis until = 0;
    std::string text;
    Purpose purpose = Purpose::Reply;

    bool operator==(const SpeakingState&) const = default;
};

struct EngineState {
    Mode mode = Mode::NotEngaged;
    std::optional<TrackId> engaged_track;
    std::optional<PersonIdentity> engaged_identity;
    int turn_count = 0;  // completed user/agent exchanges this episode
    bool stay_prompt_issued = false;
    Millis episode_started = 0;

    std::uint64_t episode_id = 0;       // id of the current or most recent episode
    int stay_rearm_base = 0;            // turn_count when the last stay prompt was accepted
    std::uint64_t generation = 0;       // bumped by every responder request and supersession
    std::optional<Purpose> awaiting_reply;
    std::optional<SpeakingState> speaking;
    std::optional<std::string> stay_answer;  // user's reply to the stay prompt, not yet judged
    BehaviorCue cue = BehaviorCue::IdleReading;
    std::map<TrackId, Millis> disengaged_at;  // proximity dwell restarts after an episode ends

    bool floor_free() const { return !speaking && !awaiting_reply; }
    bool operator==(const EngineState&) const = default;
};

// Holds in every reachable state.
bool invariants_hold(const EngineState& state);

struct TrackFeatures {
    TrackId track_id;
    proxemics::Zone zone = proxemics::Zone::Outside;
    double distance = 0.0;
    double facing_offset = 0.0;
    Millis dwell = 0;
    std::optional<PersonIdentity> identity;
};

struct PolicyInput {
    std::vector<journal::JournalEntry> journal_window;
    EngineState current_state;
    std::vector<TrackFeatures> candidates;
    std::optional<std::string> last_user_utterance;
    bool engaged_track_left = false;
};

struct EngagementDecision {
    Verdict verdict = Verdict::Stay;
    std::string reason;
    std::optional<TrackId> track;  // Engage: the chosen partner
    StayAnswer answer = StayAnswer::None;
    bool fallback = false;
    std::optional<std::string> warning;
};

// Does the track qualify under the default engagement rule?
bool qualifies_for_engagement(const TrackFeatures& track, bool addressed_agent, const proxemics::ZoneConfig& config);

// Whether the journal window holds speech from the track addressed to the idle Ditto,
// counted only after the most recent episode boundary.
bool addressed_agent(const std::vector<journal::JournalEntry>& window, const TrackId& track);

StayAnswer classify_stay_answer(std::string_view text);

// Engage iff some track is in the social zone, facing within tolerance for at least the
// dwell time, or has spoken to the Ditto while in the social or public zone. Ties go to the
// nearer track, then the lower track id. Throws StateError unless not engaged.
EngagementDecision rule_engagement_policy(const PolicyInput& input, const proxemics::ZoneConfig& config);

// Zone exit disengages outright; past five turns without an outstanding stay prompt asks to
// stay; an answer to the stay prompt continues or disengages. Throws StateError when idle.
EngagementDecision rule_disengagement_check(const PolicyInput& input, const proxemics::ZoneConfig& config);

class Policy {
public:
    virtual ~Policy() = default;
    virtual EngagementDecision check_engagement(const PolicyInput& input) = 0;
    virtual EngagementDecision check_disengagement(const PolicyInput& input) = 0;
    virtual std::string name() const = 0;
};

class RulePolicy final : public Policy {
public:
    explicit RulePolicy(proxemics::ZoneConfig config = {}) : config_(config) {}
    EngagementDecision check_engagement(const PolicyInput& input) override;
    EngagementDecision check_disengagement(const PolicyInput& input) override;
    std::string name() const override { return "rule"; }

private:
    proxemics::ZoneConfig config_;
};

struct ParsedVerdict {
    Verdict verdict;
    std::string reason;
};

// First line must be ENGAGE|STAY|CONTINUE|REQUEST_STAY|DISENGAGE, optionally ": reason".
std::optional<ParsedVerdict> parse_policy_reply(std::string_view reply);

struct LlmPolicyConfig {
    std::string engagement_prompt;
    std::string disengagement_prompt;
    std::chrono::milliseconds timeout{5000};
    std::string model;
};

LlmPolicyConfig default_llm_policy_config();

// Asks a decision service and parses its verdict. Anything unusable (timeout, transport
// failure, no verdict token, a verdict from the wrong check) falls back to the rule policy
// and flags the decision so the fallback gets journaled.
class LlmPolicy final : public Policy {
public:
    LlmPolicy(std::shared_ptr<chat::Client> client, LlmPolicyConfig config, proxemics::ZoneConfig zones);
    EngagementDecision check_engagement(const PolicyInput& input) override;
    EngagementDecision check_disengagement(const PolicyInput& input) override;
    std::string name() const override { return "llm"; }

    chat::Request build_request(const PolicyInput& input, bool engagement_check) const;

private:
    std::shared_ptr<chat::Client> client_;
    LlmPolicyConfig config_;
    RulePolicy fallback_;
};

EngagementDecision llm_engagement_policy(const PolicyInput& input, const LlmPolicyConfig& config,
                                         chat::Client& client, const proxemics::ZoneConfig& zones);

struct Policies {
    Policy* engagement = nullptr;
    Policy* disengagement = nullptr;
};

// ---------------------------------------------------------------------------
// Events and effects

enum class CheckTrigger { Observation, Utterance, TurnComplete, Periodic, Answer };
std::string_view to_string(CheckTrigger trigger);

struct PresenceUpdate {
    proxemics::PresenceEvent event;
    std::optional<PersonIdentity> identity;
};
struct IdentityUpdate {
    TrackId track;
    std::optional<PersonIdentity> identity;
};
struct UserSpeech {
    TrackId track;
};
struct UserUtterance {
    TrackId track;
    std::optional<PersonIdentity> identity;
    Utterance utterance;
};
struct AgentReply {
    std::uint64_t generation = 0;
    Purpose purpose = Purpose::Reply;
    std::string text;
    bool fallback = false;
    std::optional<std::string> warning;
};
struct AgentSpeechEnded {
    std::uint64_t generation = 0;
};
struct Check {
    CheckTrigger trigger = CheckTrigger::Periodic;
};
struct UnknownEvent {
    std::string kind;
};

using EngineEvent =
    std::variant<PresenceUpdate, IdentityUpdate, UserSpeech, UserUtterance, AgentReply, AgentSpeechEnded, Check, UnknownEvent>;

struct JournalAppend {
    journal::JournalEntry entry;  // sequence number assigned on append
};
struct RequestUtterance {
    Purpose purpose = Purpose::Reply;
    std::uint64_t generation = 0;
};
struct Speak {
    Utterance utterance;
    Purpose purpose = Purpose::Reply;
    std::uint64_t generation = 0;
};
struct InterruptAgent {
    std::uint64_t generation = 0;
    Millis at = 0;
};
struct CueChanged {
    BehaviorCue cue = BehaviorCue::IdleReading;
};
struct EpisodeStarted {
    std::uint64_t episode_id = 0;
    TrackId track;
    std::optional<PersonIdentity> identity;
};
struct EpisodeEnded {
    std::uint64_t episode_id = 0;
    TrackId track;
    std::optional<PersonIdentity> identity;
    int turn_count = 0;
};
struct ReplyDiscarded {
    std::uint64_t generation = 0;
};
struct FollowUpCheck {
    CheckTrigger trigger = CheckTrigger::Periodic;
};
struct ErrorRaised {
    std::string code;
    std::string detail;
};

using Effect = std::variant<JournalAppend, RequestUtterance, Speak, InterruptAgent, CueChanged, EpisodeStarted,
                            EpisodeEnded, ReplyDiscarded, FollowUpCheck, ErrorRaised>;

struct StepConfig {
    Millis ms_per_word = 300;
    std::string farewell;
};

std::string default_farewell();

// What the engine could see when the event arrived.
struct WorldView {
    std::vector<journal::JournalEntry> journal_window;
    std::vector<TrackFeatures> candidates;
    bool partner_speaking = false;  // the engaged person has an unfinished utterance
};

struct StepResult {
    EngineState state;
    std::vector<Effect> effects;
};

Millis speaking_duration(std::string_view text, Millis ms_per_word);

// The engine's transition function. Deterministic in (state, event, world, policy verdicts, now).
StepResult step(const EngineState& state, const EngineEvent& event, const WorldView& world, Policies policies,
                const StepConfig& config, Millis now);

}  // namespace ditto::engagement
