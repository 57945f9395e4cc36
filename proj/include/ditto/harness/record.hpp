#pragma once

#include "ditto/harness/config.hpp"
#include "ditto/harness/runtime.hpp"
#include "ditto/harness/scenario.hpp"
#include "ditto/journal.hpp"
#include "ditto/transcript.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ditto::harness {

inline constexpr std::string_view kRecordFormat = "ditto-record/1";

std::string sha256_hex(std::string_view data);

// Everything needed to re-execute a session and check its outputs.
struct SessionRecord {
    std::string scenario;
    std::uint64_t seed = 0;
    Json config_overrides = Json::object();
    EngineConfig config;  // effective
    Setup setup;
    std::string responder;  // scripted | external
    std::vector<Inbound> inputs;
    bool settled = true;
    Json engine_start = Json::object();

    std::vector<journal::JournalEntry> journal;
    Transcript transcript;
    Json memory = Json::object();
    std::vector<PromptRecord> prompts;
    std::vector<Json> errors;
};

std::string journal_hash(const std::vector<journal::JournalEntry>& entries);
std::string transcript_hash(const Transcript& transcript);
// Hash over inputs, configuration and outputs; identical runs give identical hashes.
std::string record_hash(const SessionRecord& record);

Json to_json(const SessionRecord& record);  // includes the hashes
SessionRecord record_from_json(const Json& j);
void save_record(const SessionRecord& record, const std::filesystem::path& path);
SessionRecord load_record(const std::filesystem::path& path);

enum class ResponderKind { Scripted, External };
ResponderKind responder_kind_from_string(std::string_view s);

struct RunOptions {
    ResponderKind responder = ResponderKind::Scripted;
    std::shared_ptr<chat::Client> responder_client;  // external responder; falls back to the environment
    std::shared_ptr<chat::Client> decision_client;
    std::optional<std::filesystem::path> journal_path;
    std::optional<std::filesystem::path> memory_path;
    Runtime::Listener listener;
};

// Runs the timeline on a logical clock, then lets pending timers play out.
SessionRecord run_scenario(const Scenario& scenario, const EngineConfig& base, const RunOptions& options = {});

// Captures a live runtime (for example a gateway session) as a record.
SessionRecord capture(const Runtime& runtime, std::string name, const Setup& setup, std::string responder, bool settled);

struct ReplayVerdict {
    enum class Status { Pass, Fail, ConfigMismatch, Unsupported };
    Status status = Status::Pass;
    std::optional<std::uint64_t> sequence_no;  // first divergent journal entry
    std::string detail;
};

std::string_view to_string(ReplayVerdict::Status status);

// Re-executes the record's inputs under `current` (plus the record's scenario overrides) and
// compares journal and transcript. Differing effective configuration is reported, not compared.
ReplayVerdict replay(const SessionRecord& record, const EngineConfig& current);

}  // namespace ditto::harness
