#include "ditto/harness/gateway.hpp"
#include "ditto/harness/record.hpp"
#include "ditto/harness/scenario.hpp"
#include "ditto/memory.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace ditto;
using namespace ditto::harness;

namespace {

EngineConfig base_config(const std::string& path) { return path.empty() ? EngineConfig{} : load_config(path); }

// Minimal setup for a gateway started without --setup.
Setup default_setup() {
    Setup s;
    s.context = {{"Background", "You are a hallway Ditto, a life-size conversational stand-in for a colleague."},
                 {"PersonalityTraits", "Cheerful, Curious"},
                 {"SocialRelationshipInfo", Json::array()}};
    s.daily.script = {"Hello! Nice of you to stop by.", "That sounds interesting, tell me more.",
                      "Ha, I know the feeling.", "What else is on your mind today?"};
    return s;
}

int cmd_run(const std::string& scenario_path, const std::string& config_path, const std::string& record_path,
            const std::string& responder, const std::string& journal_path, const std::string& memory_path, bool quiet) {
    const auto scenario = load_scenario(scenario_path);
    RunOptions options;
    options.responder = responder_kind_from_string(responder);
    if (!journal_path.empty()) {
        fs::remove(journal_path);
        options.journal_path = journal_path;
    }
    if (!memory_path.empty()) options.memory_path = memory_path;
    const auto record = run_scenario(scenario, base_config(config_path), options);

    if (!quiet) {
        for (const auto& e : record.journal) std::cout << e.sequence_no << "  " << e.rendered << "\n";
    }
    const auto hash = record_hash(record);
    std::cout << "scenario " << record.scenario << ": " << record.journal.size() << " journal entries, "
              << record.transcript.size() << " utterances\n"
              << "record hash " << hash << "\n";
    if (!record_path.empty()) {
        save_record(record, record_path);
        std::cout << "record written to " << record_path << "\n";
    }
    if (scenario.expected_hash && *scenario.expected_hash != hash) {
        std::cerr << "expected hash " << *scenario.expected_hash << " does not match\n";
        return 1;
    }
    return 0;
}

int cmd_replay(const std::string& record_path, const std::string& config_path) {
    const auto record = load_record(record_path);
    const auto verdict = replay(record, base_config(config_path));
    std::cout << to_string(verdict.status);
    if (verdict.sequence_no) std::cout << " at sequence_no " << *verdict.sequence_no;
    std::cout << ": " << verdict.detail << "\n";
    return verdict.status == ReplayVerdict::Status::Pass ? 0 : 1;
}

std::atomic<bool> interrupted{false};

int cmd_serve(const std::string& bind, const std::string& mode, const std::string& config_path,
              const std::string& setup_path, const std::string& journal_path, const std::string& memory_path,
              const std::string& record_path, const std::string& responder) {
    GatewayOptions options;
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw InputError("--bind expects host:port");
    options.host = bind.substr(0, colon);
    options.port = static_cast<unsigned short>(std::stoi(bind.substr(colon + 1)));
    options.mode = clock_mode_from_string(mode);

    const auto config = base_config(config_path);
    options.queue_limit = config.queue_limit;
    Setup setup = default_setup();
    std::string name = "gateway";
    if (!setup_path.empty()) {
        const auto scenario = load_scenario(setup_path);
        setup = scenario.setup;
        name = scenario.name;
    }

    RuntimeOptions ro;
    ro.config = config;
    ro.setup = setup;
    if (responder_kind_from_string(responder) == ResponderKind::External) {
        ro.responder = std::make_unique<conversation::ExternalResponder>(
            chat::client_from_env(chat::kResponderEndpointEnv), std::chrono::milliseconds(config.response_timeout), config.model);
    } else {
        ro.responder = std::make_unique<conversation::ScriptedResponder>(setup.daily.script);
    }
    ro.decision_client = chat::client_from_env(chat::kDecisionEndpointEnv);
    if (!journal_path.empty()) ro.journal_path = journal_path;
    if (!memory_path.empty()) ro.memory_path = memory_path;

    Gateway gateway(options, std::make_unique<Runtime>(std::move(ro)));
    const auto port = gateway.start();
    std::cout << "serving on ws://" << options.host << ":" << port << " (" << mode << ")" << std::endl;

    std::signal(SIGINT, [](int) { interrupted = true; });
    std::signal(SIGTERM, [](int) { interrupted = true; });
    while (!interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    gateway.stop();

    if (!record_path.empty()) {
        save_record(capture(gateway.runtime(), name, setup, responder, false), record_path);
        std::cout << "record written to " << record_path << "\n";
    }
    return 0;
}

int cmd_validate_context(const std::string& path) {
    const auto context = memory::load_context_file(path);
    std::cout << "ok: " << context.social_relationships.size() << " relationship entries";
    for (const auto& r : context.social_relationships) std::cout << " [" << r.who << "]";
    std::cout << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hallway Ditto interaction engine"};
    app.require_subcommand(1);

    std::string scenario_path, config_path, record_path, responder = "scripted", journal_path, memory_path;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "Run a scenario on the logical clock");
    run->add_option("scenario", scenario_path, "Scenario file")->required()->check(CLI::ExistingFile);
    run->add_option("--config", config_path, "Engine config file")->check(CLI::ExistingFile);
    run->add_option("--record", record_path, "Write the session record here");
    run->add_option("--responder", responder, "scripted or external")->check(CLI::IsMember({"scripted", "external"}));
    run->add_option("--journal", journal_path, "Write the session journal (JSON lines) here");
    run->add_option("--memory", memory_path, "Memory store to load and update");
    run->add_flag("-q,--quiet", quiet, "Only print the summary line");

    std::string replay_path;
    auto* rep = app.add_subcommand("replay", "Re-execute a session record and compare");
    rep->add_option("record", replay_path, "Record file")->required()->check(CLI::ExistingFile);
    rep->add_option("--config", config_path, "Engine config file")->check(CLI::ExistingFile);

    std::string bind = "127.0.0.1:8765", mode = "live", setup_path;
    auto* serve = app.add_subcommand("serve", "Serve the wire protocol over WebSocket");
    serve->add_option("--bind", bind, "host:port");
    serve->add_option("--mode", mode, "live or lockstep")->check(CLI::IsMember({"live", "lockstep"}));
    serve->add_option("--config", config_path, "Engine config file")->check(CLI::ExistingFile);
    serve->add_option("--setup", setup_path, "Scenario file whose registry, context and daily config to use")
        ->check(CLI::ExistingFile);
    serve->add_option("--journal", journal_path, "Append the journal (JSON lines) here");
    serve->add_option("--memory", memory_path, "Memory store to load and update");
    serve->add_option("--record", record_path, "Write a session record on shutdown");
    serve->add_option("--responder", responder, "scripted or external")->check(CLI::IsMember({"scripted", "external"}));

    std::string context_path;
    auto* validate = app.add_subcommand("validate-context", "Check a context document");
    validate->add_option("file", context_path, "Context document")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(scenario_path, config_path, record_path, responder, journal_path, memory_path, quiet);
        if (*rep) return cmd_replay(replay_path, config_path);
        if (*serve) return cmd_serve(bind, mode, config_path, setup_path, journal_path, memory_path, record_path, responder);
        if (*validate) return cmd_validate_context(context_path);
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << " error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
