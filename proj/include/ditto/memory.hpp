#pragma once

#include "ditto/common.hpp"
#include "ditto/transcript.hpp"

#include <nlohmann/json.hpp>

#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ditto::memory {

using Json = nlohmann::json;

struct RelationshipEntry {
    std::string who;
    std::string relationship_info;
    std::string source_intent;

    bool operator==(const RelationshipEntry&) const = default;
};

// The Source's daily context document. Field names on disk are Background,
// PersonalityTraits, SocialRelationshipInfo[{Who, RelationshipInfo, SourceIntent}].
struct UserContext {
    std::string background;
    std::string personality_traits;
    std::vector<RelationshipEntry> social_relationships;
    std::string valid_date;
    Json extra = Json::object();  // unrecognised top-level fields, kept for round trips

    const RelationshipEntry* find(std::string_view who) const;
    std::vector<std::string> traits() const;
    bool operator==(const UserContext&) const = default;
};

// Throws ValidationError naming the offending field.
UserContext load_context(const Json& document, std::string valid_date = {});
UserContext load_context_file(const std::filesystem::path& path, std::string valid_date = {});
Json to_json(const UserContext& context);

// Holds the active context and swaps it atomically on a valid rotation.
class ContextManager {
public:
    explicit ContextManager(UserContext initial) : active_(std::move(initial)) {}

    // Replaces the active context; on a bad document throws and leaves it untouched.
    const UserContext& rotate_daily(const Json& document, std::string date);
    const UserContext& active() const { return active_; }

private:
    UserContext active_;
};

struct EpisodeSummary {
    std::uint64_t episode_id = 0;
    std::string date;
    std::string text;
    bool warning = false;

    bool operator==(const EpisodeSummary&) const = default;
};

struct PersonMemory {
    std::string person_key;
    std::string name;
    std::vector<EpisodeSummary> summaries;  // ascending episode id
    Millis last_interaction = 0;

    bool operator==(const PersonMemory&) const = default;
};

inline constexpr std::size_t kGeneralSummaryCap = 10;
inline constexpr std::string_view kEpisodeSeparator = "\n--\n";

struct GeneralSummary {
    std::deque<std::string> recent;  // at most kGeneralSummaryCap, oldest first
    std::uint64_t episode_count = 0;

    std::string text() const;
    bool operator==(const GeneralSummary&) const = default;
};

// Whole-word, case-insensitive replacement of each name with "someone".
std::string redact_names(std::string text, std::span<const std::string> names);

class MemoryStore {
public:
    void store_person(const std::string& person_key, const std::string& name, EpisodeSummary summary, Millis when);
    // `names` are redacted from the text before it is merged.
    void merge_general(const EpisodeSummary& summary, std::span<const std::string> names);

    // Tagged: that person's summaries joined oldest to newest. Passerby (nullopt): the general summary.
    std::string recall(const std::optional<std::string>& person_key) const;

    const PersonMemory* person(const std::string& key) const;
    const std::map<std::string, PersonMemory>& people() const { return people_; }
    const GeneralSummary& general() const { return general_; }

    Json to_json() const;
    static MemoryStore from_json(const Json& j);
    void save(const std::filesystem::path& path) const;
    static MemoryStore load(const std::filesystem::path& path);

    bool operator==(const MemoryStore&) const = default;

private:
    std::map<std::string, PersonMemory> people_;
    GeneralSummary general_;
};

// ---------------------------------------------------------------------------
// Summarization

struct SummaryRequest {
    std::span<const Utterance> transcript;
    std::string addressee;
    std::optional<std::string> topic;
    int turn_count = 0;
};

class Summarizer {
public:
    virtual ~Summarizer() = default;
    // Throws on failure.
    virtual std::string summarize(const SummaryRequest& request) = 0;
};

// Template summary: turn count, seeded topic, and the content words that recur
// in at least two utterances.
class TemplateSummarizer final : public Summarizer {
public:
    std::string summarize(const SummaryRequest& request) override;
};

// Lower-cased content words appearing in at least two distinct utterances, in first-seen order.
std::vector<std::string> recurring_terms(std::span<const Utterance> transcript, std::size_t limit = 12);

struct SummaryOutcome {
    std::string text;
    bool warning = false;
    std::string detail;
};

// nullopt when the transcript holds no user speech. A failing summarizer yields the
// last two utterances verbatim with the warning flag set.
std::optional<SummaryOutcome> summarize_episode(const SummaryRequest& request, Summarizer& summarizer);

}  // namespace ditto::memory
