#pragma once

#include "ditto/common.hpp"
#include "ditto/proxemics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ditto::journal {

using Json = nlohmann::json;

enum class EntryKind { Presence, UtteranceUser, UtteranceAgent, Decision, SummaryWritten };

std::string_view to_string(EntryKind kind);
EntryKind kind_from_string(std::string_view text);

inline constexpr std::string_view kPasserby = "Passerby";

struct JournalEntry {
    std::uint64_t sequence_no = 0;
    Millis timestamp = 0;
    EntryKind kind = EntryKind::Presence;
    Json structured = Json::object();
    std::string rendered;
    std::string subject{kPasserby};

    bool operator==(const JournalEntry&) const = default;
};

Json to_json(const JournalEntry& entry);
JournalEntry entry_from_json(const Json& j);

// Sentences the engagement policy reads. Distances render as whole meters;
// the structured payload keeps full precision.
std::string render_presence(const proxemics::PresenceEvent& event,
                            const std::optional<proxemics::PersonIdentity>& identity,
                            double distance,
                            bool facing);
std::string render_user_utterance(std::string_view subject, std::string_view text);
std::string render_agent_utterance(std::string_view text, bool interrupted);

std::string subject_for(const std::optional<proxemics::PersonIdentity>& identity);

// Append-only session log. When opened on a file, every append is written through
// as one JSON line, and reopening continues numbering from the persisted maximum.
class Journal {
public:
    Journal() = default;

    static Journal open(const std::filesystem::path& path);

    // Assigns the next sequence number. Throws OrderingError on timestamp regression.
    std::uint64_t append(JournalEntry entry);

    // Writes a session header line (not a journal entry; carries no sequence number).
    void mark_session_start(Millis ts, const Json& info);

    // Most recent `last_n` entries matching `kinds` (all kinds when empty), oldest first.
    std::vector<JournalEntry> window(std::size_t last_n, std::span<const EntryKind> kinds = {}) const;

    const std::vector<JournalEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::uint64_t last_sequence() const { return next_sequence_ - 1; }
    Millis last_timestamp() const { return last_timestamp_; }

private:
    std::vector<JournalEntry> entries_;
    std::uint64_t next_sequence_ = 1;
    Millis last_timestamp_ = 0;
    std::unique_ptr<std::ofstream> sink_;
};

}  // namespace ditto::journal
