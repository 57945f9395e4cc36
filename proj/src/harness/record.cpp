#include "ditto/harness/record.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace ditto::harness {

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::State, "sha256 failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < length; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

namespace {

Json journal_json(const std::vector<journal::JournalEntry>& entries) {
    Json j = Json::array();
    for (const auto& e : entries) j.push_back(journal::to_json(e));
    return j;
}

Json transcript_json(const Transcript& transcript) {
    Json j = Json::array();
    for (const auto& u : transcript) j.push_back(to_json(u));
    return j;
}

Json inputs_json(const std::vector<Inbound>& inputs) {
    Json j = Json::array();
    for (const auto& i : inputs) j.push_back(to_json(i));
    return j;
}

Json body_json(const SessionRecord& r) {
    Json prompts = Json::array();
    for (const auto& p : r.prompts) prompts.push_back(to_json(p));
    return {{"format", kRecordFormat},
            {"scenario", r.scenario},
            {"seed", r.seed},
            {"config_overrides", r.config_overrides},
            {"config", to_json(r.config)},
            {"setup", to_json(r.setup)},
            {"responder", r.responder},
            {"inputs", inputs_json(r.inputs)},
            {"settled", r.settled},
            {"engine_start", r.engine_start},
            {"journal", journal_json(r.journal)},
            {"transcript", transcript_json(r.transcript)},
            {"memory", r.memory},
            {"prompts", prompts},
            {"errors", r.errors}};
}

}  // namespace

std::string journal_hash(const std::vector<journal::JournalEntry>& entries) { return sha256_hex(journal_json(entries).dump()); }

std::string transcript_hash(const Transcript& transcript) { return sha256_hex(transcript_json(transcript).dump()); }

std::string record_hash(const SessionRecord& record) { return sha256_hex(body_json(record).dump()); }

Json to_json(const SessionRecord& record) {
    Json j = body_json(record);
    j["hashes"] = {{"journal", journal_hash(record.journal)},
                   {"transcript", transcript_hash(record.transcript)},
                   {"record", record_hash(record)}};
    return j;
}

SessionRecord record_from_json(const Json& j) {
    if (j.value("format", std::string{}) != kRecordFormat)
        throw ValidationError("record format must be \"" + std::string(kRecordFormat) + "\"");
    SessionRecord r;
    try {
        r.scenario = j.at("scenario").get<std::string>();
        r.seed = j.value("seed", std::uint64_t{0});
        r.config_overrides = j.value("config_overrides", Json::object());
        r.config = config_from_json(j.at("config"));
        r.setup = setup_from_json(j.at("setup"));
        r.responder = j.at("responder").get<std::string>();
        for (const auto& i : j.at("inputs")) r.inputs.push_back(parse_inbound(i));
        r.settled = j.value("settled", true);
        r.engine_start = j.value("engine_start", Json::object());
        for (const auto& e : j.at("journal")) r.journal.push_back(journal::entry_from_json(e));
        for (const auto& u : j.at("transcript")) r.transcript.push_back(utterance_from_json(u));
        r.memory = j.value("memory", Json::object());
        for (const auto& p : j.value("prompts", Json::array())) r.prompts.push_back(prompt_from_json(p));
        for (const auto& e : j.value("errors", Json::array())) r.errors.push_back(e);
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed record: ") + e.what());
    }
    return r;
}

void save_record(const SessionRecord& record, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write record " + path.string());
    out << to_json(record).dump(2) << "\n";
}

SessionRecord load_record(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open record " + path.string());
    try {
        return record_from_json(Json::parse(in));
    } catch (const Json::parse_error& e) {
        throw ValidationError("record " + path.string() + ": " + e.what());
    }
}

ResponderKind responder_kind_from_string(std::string_view s) {
    if (s == "scripted") return ResponderKind::Scripted;
    if (s == "external") return ResponderKind::External;
    throw InputError("unknown responder kind '" + std::string(s) + "'");
}

SessionRecord capture(const Runtime& runtime, std::string name, const Setup& setup, std::string responder, bool settled) {
    SessionRecord r;
    r.scenario = std::move(name);
    r.config = runtime.config();
    r.setup = setup;
    r.responder = std::move(responder);
    r.inputs = runtime.inputs();
    r.settled = settled;
    r.engine_start = {{"ts", 0}, {"responder", r.responder}};
    r.journal = runtime.journal().entries();
    r.transcript = runtime.transcript();
    r.memory = runtime.memory().to_json();
    r.prompts = runtime.prompts();
    r.errors = runtime.errors();
    return r;
}

namespace {

std::unique_ptr<conversation::Responder> make_responder(const RunOptions& options, const Setup& setup,
                                                        const EngineConfig& config) {
    if (options.responder == ResponderKind::External) {
        auto client = options.responder_client ? options.responder_client : chat::client_from_env(chat::kResponderEndpointEnv);
        return std::make_unique<conversation::ExternalResponder>(client, std::chrono::milliseconds(config.response_timeout),
                                                                 config.model);
    }
    return std::make_unique<conversation::ScriptedResponder>(setup.daily.script);
}

SessionRecord execute(const std::string& name, std::uint64_t seed, const Json& overrides, const EngineConfig& config,
                      const Setup& setup, const std::vector<Inbound>& inputs, bool settle,
                      std::unique_ptr<conversation::Responder> responder, const std::string& responder_kind,
                      const RunOptions& options) {
    RuntimeOptions ro;
    ro.config = config;
    ro.setup = setup;
    ro.responder = std::move(responder);
    ro.decision_client = options.decision_client ? options.decision_client : chat::client_from_env(chat::kDecisionEndpointEnv);
    ro.journal_path = options.journal_path;
    ro.memory_path = options.memory_path;
    Runtime runtime(std::move(ro));
    if (options.listener) runtime.set_listener(options.listener);
    for (const auto& input : inputs) runtime.submit(input);
    if (settle) runtime.settle();
    auto record = capture(runtime, name, setup, responder_kind, settle);
    record.seed = seed;
    record.config_overrides = overrides;
    return record;
}

// Serves recorded replies in order, reproducing fallbacks and warnings exactly.
class ReplayResponder final : public conversation::Responder {
public:
    explicit ReplayResponder(std::vector<PromptRecord> prompts) : prompts_(std::move(prompts)) {}
    conversation::ResponderReply respond(const conversation::PromptBundle&) override {
        if (next_ >= prompts_.size()) throw StateError("replay asked for more replies than were recorded");
        const auto& p = prompts_[next_++];
        return {p.reply, p.fallback, p.warning};
    }
    std::string kind() const override { return "external"; }

private:
    std::vector<PromptRecord> prompts_;
    std::size_t next_ = 0;
};

}  // namespace

SessionRecord run_scenario(const Scenario& scenario, const EngineConfig& base, const RunOptions& options) {
    const auto config = effective_config(base, scenario.config);
    const std::string kind = options.responder == ResponderKind::External ? "external" : "scripted";
    return execute(scenario.name, scenario.seed, scenario.config, config, scenario.setup, scenario.timeline, true,
                   make_responder(options, scenario.setup, config), kind, options);
}

std::string_view to_string(ReplayVerdict::Status status) {
    switch (status) {
        case ReplayVerdict::Status::Pass: return "pass";
        case ReplayVerdict::Status::Fail: return "fail";
        case ReplayVerdict::Status::ConfigMismatch: return "config_mismatch";
        case ReplayVerdict::Status::Unsupported: return "unsupported";
    }
    return "fail";
}

ReplayVerdict replay(const SessionRecord& record, const EngineConfig& current) {
    using Status = ReplayVerdict::Status;
    EngineConfig config;
    try {
        config = effective_config(current, record.config_overrides);
    } catch (const Error& e) {
        return {Status::ConfigMismatch, std::nullopt, e.what()};
    }
    if (!(config == record.config)) {
        return {Status::ConfigMismatch, std::nullopt,
                "record config " + to_json(record.config).dump() + " differs from " + to_json(config).dump()};
    }
    if (config.engagement_policy == "llm" || config.disengagement_policy == "llm") {
        return {Status::Unsupported, std::nullopt, "decision-service verdicts are not recorded; replay needs rule policies"};
    }

    std::unique_ptr<conversation::Responder> responder;
    if (record.responder == "external") {
        responder = std::make_unique<ReplayResponder>(record.prompts);
    } else {
        responder = std::make_unique<conversation::ScriptedResponder>(record.setup.daily.script);
    }
    SessionRecord again;
    try {
        again = execute(record.scenario, record.seed, record.config_overrides, config, record.setup, record.inputs,
                        record.settled, std::move(responder), record.responder, RunOptions{});
    } catch (const Error& e) {
        return {Status::Fail, std::nullopt, std::string("re-execution failed: ") + e.what()};
    }

    const auto& a = record.journal;
    const auto& b = again.journal;
    for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
        if (i < a.size() && i < b.size() && journal::to_json(a[i]) == journal::to_json(b[i])) continue;
        const auto seq = i < a.size() ? a[i].sequence_no : b[i].sequence_no;
        std::string detail = "journal diverges at sequence_no " + std::to_string(seq);
        if (i < a.size() && i < b.size()) {
            detail += ": recorded \"" + a[i].rendered + "\", replayed \"" + b[i].rendered + "\"";
        } else {
            detail += i < a.size() ? ": entry missing on replay" : ": extra entry on replay";
        }
        return {Status::Fail, seq, detail};
    }
    if (transcript_hash(record.transcript) != transcript_hash(again.transcript)) {
        std::size_t i = 0;
        while (i < record.transcript.size() && i < again.transcript.size() && record.transcript[i] == again.transcript[i]) ++i;
        return {Status::Fail, std::nullopt, "transcript diverges at utterance " + std::to_string(i)};
    }
    if (record.memory != again.memory) return {Status::Fail, std::nullopt, "final memory state differs"};
    return {Status::Pass, std::nullopt, "journal " + journal_hash(b).substr(0, 16) + ", transcript " +
                                             transcript_hash(again.transcript).substr(0, 16)};
}

}  // namespace ditto::harness
