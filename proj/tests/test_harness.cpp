#include "ditto/harness/record.hpp"
#include "ditto/harness/runtime.hpp"
#include "ditto/harness/scenario.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace ditto;
using namespace ditto::harness;
using engagement::Mode;

namespace {

Scenario scenario(const std::string& name) { return load_scenario(fixtures::scenario_path(name)); }

Json minimal_scenario() {
    return {{"format", "ditto-scenario/1"},
            {"name", "minimal"},
            {"setup",
             {{"registry", {{{"tag_id", "T-jack"}, {"name", "Jack"}, {"context_key", "Jack"}}}},
              {"context",
               {{"Background", "You are a hallway Ditto."},
                {"PersonalityTraits", "Cheerful"},
                {"SocialRelationshipInfo",
                 {{{"Who", "Jack"}, {"RelationshipInfo", "Works on rings."}, {"SourceIntent", "Ask about rings."}}}}}},
              {"daily", {{"topics", {{{"title", "Pottery"}}}}, {"script", {"Hello!", "Indeed.", "Right."}}}}}},
            {"timeline", Json::array()}};
}

std::unique_ptr<Runtime> runtime_for(const Setup& setup, EngineConfig config = {}) {
    RuntimeOptions o;
    o.config = config;
    o.setup = setup;
    o.responder = std::make_unique<conversation::ScriptedResponder>(setup.daily.script);
    return std::make_unique<Runtime>(std::move(o));
}

std::vector<std::string> rendered(const std::vector<journal::JournalEntry>& entries) {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.rendered);
    return out;
}

std::size_t count(const std::vector<std::string>& lines, const std::string& needle) {
    return std::count_if(lines.begin(), lines.end(), [&](const auto& l) { return l.find(needle) != std::string::npos; });
}

}  // namespace

// --- config -----------------------------------------------------------------

TEST(Config, DefaultsRoundTrip) {
    const EngineConfig c;
    EXPECT_EQ(config_from_json(to_json(c)), c);
    EXPECT_EQ(config_from_json(Json::object()), c);
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, OverridesAndRejections) {
    const auto c = config_from_json({{"zones", {{"social_max", 1.0}}}, {"fusion", {{"receiver", {1.0, 2.0}}}}});
    EXPECT_EQ(c.zones.social_max, 1.0);
    EXPECT_EQ(c.zones.public_max, 4.5);
    EXPECT_EQ(c.fusion.receiver, (proxemics::Vec2{1.0, 2.0}));
    EXPECT_THROW(config_from_json({{"bogus", 1}}), ConfigError);
    EXPECT_THROW(config_from_json({{"zones", {{"radius", 1}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"silence_window", "long"}}), ConfigError);
    EXPECT_THROW(config_from_json({{"engagement_policy", "magic"}}), ConfigError);
    EXPECT_THROW(config_from_json({{"zones", {{"social_max", 5.0}}}}), Error);
}

TEST(Config, EffectiveConfigMergesOverrides) {
    EngineConfig base;
    base.ms_per_word = 200;
    const auto c = effective_config(base, {{"responder_latency", 600}});
    EXPECT_EQ(c.ms_per_word, 200);
    EXPECT_EQ(c.responder_latency, 600);
}

// --- wire -------------------------------------------------------------------

TEST(Wire, ParsesEachInboundType) {
    auto m = std::get<MoveInput>(parse_inbound({{"type", "move"}, {"track_id", "t1"}, {"x", 0.5}, {"y", 0.5}, {"facing_deg", 0}, {"ts", 10}}));
    EXPECT_EQ(m.track_id, "t1");
    EXPECT_EQ(m.ts, 10);
    auto t = std::get<TagInput>(parse_inbound({{"type", "tag"}, {"tag_id", "T-jack"}, {"track_id", "t1"}, {"present", true}, {"ts", 0}}));
    EXPECT_EQ(t.track_id, "t1");
    auto s = std::get<SpeechInput>(parse_inbound({{"type", "speech"}, {"track_id", "t1"}, {"text", "hi"}, {"final", false}, {"ts", 3}}));
    EXPECT_FALSE(s.final);
    auto c = std::get<ControlInput>(parse_inbound({{"type", "control"}, {"action", "snapshot"}}));
    EXPECT_FALSE(c.ts);
}

TEST(Wire, RejectsMalformedMessages) {
    const std::vector<Json> bad{
        Json::array(),
        {{"type", "teleport"}},
        {{"type", "move"}, {"track_id", "t1"}, {"x", "0"}, {"y", 0}, {"facing_deg", 0}, {"ts", 0}},
        {{"type", "move"}, {"track_id", "t1"}, {"x", 0}, {"y", 0}, {"ts", 0}},
        {{"type", "move"}, {"track_id", "t1"}, {"x", 0}, {"y", 0}, {"facing_deg", 0}, {"ts", 0}, {"extra", 1}},
        {{"type", "speech"}, {"track_id", "t1"}, {"text", 5}, {"final", true}, {"ts", 0}},
        {{"type", "control"}, {"action", "explode"}},
        {{"type", "control"}, {"action", "tick"}},
        {{"type", "control"}, {"action", "rotate_context"}},
    };
    for (const auto& j : bad) EXPECT_THROW(parse_inbound(j), SchemaError) << j.dump();
    EXPECT_THROW(parse_inbound_text("{not json"), SchemaError);
}

TEST(Wire, RoundTripAndTimestamps) {
    const std::vector<Inbound> all{MoveInput{"t1", 1, 2, 90, 5}, TagInput{"T-jack", std::nullopt, false, 6},
                                   SpeechInput{"t1", "hello", true, 7}, ControlInput{"tick", 8, Json::object()}};
    for (const auto& in : all) {
        EXPECT_EQ(parse_inbound(to_json(in)), in);
        EXPECT_EQ(timestamp_of(with_timestamp(in, 99)), 99);
    }
    const auto e = error_message("schema_error", "bad");
    EXPECT_EQ(e["type"], "error");
    EXPECT_EQ(e["code"], "schema_error");
    EXPECT_EQ(e["detail"], "bad");
}

// --- scenario ---------------------------------------------------------------

TEST(Scenario, ExpandsHeldMoves) {
    auto j = minimal_scenario();
    j["timeline"] = {{{"type", "move"}, {"track_id", "t1"}, {"x", 0}, {"y", 1}, {"facing_deg", -90}, {"ts", 0}, {"hold_ms", 2000}, {"every_ms", 500}},
                     {{"type", "speech"}, {"track_id", "t1"}, {"text", "hi"}, {"final", true}, {"ts", 700}}};
    const auto sc = scenario_from_json(j);
    ASSERT_EQ(sc.timeline.size(), 6u);
    std::vector<Millis> ts;
    for (const auto& e : sc.timeline) ts.push_back(*timestamp_of(e));
    EXPECT_EQ(ts, (std::vector<Millis>{0, 500, 700, 1000, 1500, 2000}));
    EXPECT_TRUE(std::holds_alternative<SpeechInput>(sc.timeline[2]));
}

TEST(Scenario, RejectsInvalidTimelines) {
    auto j = minimal_scenario();
    j["timeline"] = {{{"type", "control"}, {"action", "tick"}, {"ts", 10}}, {{"type", "control"}, {"action", "tick"}, {"ts", 5}}};
    EXPECT_THROW(scenario_from_json(j), ValidationError);
    j["timeline"] = {{{"type", "tag"}, {"tag_id", "T-ghost"}, {"present", true}, {"ts", 0}}};
    EXPECT_THROW(scenario_from_json(j), ValidationError);
    j["timeline"] = {{{"type", "control"}, {"action", "rotate_context"}, {"ts", 0}, {"args", {{"context", {{"PersonalityTraits", "x"}}}}}}};
    EXPECT_THROW(scenario_from_json(j), ValidationError);
    j = minimal_scenario();
    j["format"] = "ditto-scenario/0";
    EXPECT_THROW(scenario_from_json(j), ValidationError);
    j = minimal_scenario();
    j["setup"]["context"].erase("Background");
    EXPECT_THROW(scenario_from_json(j), ValidationError);
}

TEST(Scenario, ReferenceScenariosLoad) {
    for (const auto* name : {"jack_walkup", "tagged_and_passerby", "barge_in", "two_day"}) {
        const auto sc = scenario(name);
        EXPECT_EQ(sc.name, name);
        EXPECT_FALSE(sc.timeline.empty());
        EXPECT_EQ(scenario_from_json(to_json(sc)).timeline, sc.timeline);
    }
}

// --- runtime ----------------------------------------------------------------

TEST(Runtime, EmptyTimeline) {
    const auto record = run_scenario(scenario_from_json(minimal_scenario()), EngineConfig{});
    EXPECT_TRUE(record.journal.empty());
    EXPECT_TRUE(record.transcript.empty());
    EXPECT_EQ(record.engine_start["responder"], "scripted");
}

TEST(Runtime, JackWalkUp) {
    const auto record = run_scenario(scenario("jack_walkup"), EngineConfig{});
    const auto lines = rendered(record.journal);
    ASSERT_FALSE(lines.empty());
    EXPECT_EQ(lines[0], "Jack has entered the public zone, 2 meters away, facing you.");
    EXPECT_EQ(count(lines, "Would you like to stay and chat a little longer?"), 1u);
    EXPECT_EQ(count(lines, "Disengagement check: DISENGAGE (Jack declined to stay)."), 1u);
    EXPECT_EQ(count(lines, "Saved a summary of the conversation with Jack."), 1u);
    EXPECT_EQ(count(lines, "Engagement check: ENGAGE"), 1u);
    const auto memory = memory::MemoryStore::from_json(record.memory);
    ASSERT_TRUE(memory.person("T-jack"));
    EXPECT_NE(memory.recall(std::string("T-jack")).find("Talked with Jack for 6 turns"), std::string::npos);
}

TEST(Runtime, SequenceNumbersAndSubjects) {
    const auto record = run_scenario(scenario("tagged_and_passerby"), EngineConfig{});
    for (std::size_t i = 0; i < record.journal.size(); ++i) {
        EXPECT_EQ(record.journal[i].sequence_no, i + 1);
        if (i) EXPECT_GE(record.journal[i].timestamp, record.journal[i - 1].timestamp);
    }
    std::set<std::string> subjects;
    for (const auto& e : record.journal) subjects.insert(e.subject);
    EXPECT_EQ(subjects, (std::set<std::string>{"Jack", "Passerby"}));
    const auto memory = memory::MemoryStore::from_json(record.memory);
    EXPECT_EQ(memory.general().episode_count, 1u);
    EXPECT_EQ(memory.recall(std::nullopt).find("Jack"), std::string::npos);
}

TEST(Runtime, DecisionsFollowEvidenceForSameSubject) {
    for (const auto* name : {"jack_walkup", "tagged_and_passerby", "barge_in", "two_day"}) {
        const auto record = run_scenario(scenario(name), EngineConfig{});
        for (std::size_t i = 0; i < record.journal.size(); ++i) {
            const auto& e = record.journal[i];
            if (e.kind != journal::EntryKind::Decision) continue;
            bool seen = false;
            for (std::size_t k = 0; k < i && !seen; ++k) {
                const auto& p = record.journal[k];
                seen = p.subject == e.subject && (p.kind == journal::EntryKind::Presence || p.kind == journal::EntryKind::UtteranceUser);
            }
            EXPECT_TRUE(seen) << name << ": " << e.rendered;
        }
    }
}

TEST(Runtime, OrderingAndStateErrors) {
    const auto sc = scenario_from_json(minimal_scenario());
    auto rt = runtime_for(sc.setup);
    rt->submit(MoveInput{"t1", 0, 2, -90, 100});
    EXPECT_THROW(rt->submit(MoveInput{"t1", 0, 2, -90, 100}), OrderingError);
    EXPECT_THROW(rt->submit(MoveInput{"t2", 0, 2, -90, 50}), OrderingError);
    rt->submit(ControlInput{"stop", 200, Json::object()});
    EXPECT_FALSE(rt->running());
    EXPECT_THROW(rt->submit(SpeechInput{"t1", "hi", true, 300}), StateError);
    rt->submit(ControlInput{"start", 400, Json::object()});
    EXPECT_NO_THROW(rt->submit(MoveInput{"t1", 0, 2, -90, 500}));
}

TEST(Runtime, UnregisteredTagReportsError) {
    const auto sc = scenario_from_json(minimal_scenario());
    auto rt = runtime_for(sc.setup);
    std::vector<Json> messages;
    rt->set_listener([&](const Json& m) { messages.push_back(m); });
    rt->submit(TagInput{"T-ghost", std::nullopt, true, 0});
    ASSERT_EQ(rt->errors().size(), 1u);
    EXPECT_EQ(rt->errors()[0]["code"], "unregistered_tag");
    EXPECT_TRUE(std::any_of(messages.begin(), messages.end(), [](const Json& m) { return m["type"] == "error"; }));
    EXPECT_TRUE(rt->journal().empty());
}

TEST(Runtime, TrackTimeoutEndsEpisodeWithoutFarewell) {
    const auto sc = scenario_from_json(minimal_scenario());
    auto rt = runtime_for(sc.setup);
    for (Millis t = 0; t <= 3000; t += 500) rt->submit(MoveInput{"t1", 0, 1, -90, t});
    EXPECT_EQ(rt->state().mode, Mode::Engaged);
    rt->settle();
    EXPECT_EQ(rt->state().mode, Mode::NotEngaged);
    const auto lines = rendered(rt->journal().entries());
    EXPECT_EQ(count(lines, "Passerby has left the zone."), 1u);
    EXPECT_EQ(count(lines, "It was lovely chatting"), 0u);
    const auto& left = rt->journal().entries()[lines.size() - 2];
    EXPECT_EQ(left.structured["reason"], "timeout");
    EXPECT_EQ(left.timestamp, 3000 + 3000);
}

TEST(Runtime, StateMessageReportsTracks) {
    const auto sc = scenario_from_json(minimal_scenario());
    auto rt = runtime_for(sc.setup);
    rt->submit(MoveInput{"t1", 0.5, 0.5, 0, 0});
    const auto state = rt->state_message();
    EXPECT_EQ(state["type"], "state");
    EXPECT_EQ(state["mode"], "NotEngaged");
    EXPECT_EQ(state["behavior_cue"], "idle_reading");
    ASSERT_EQ(state["tracks"].size(), 1u);
    EXPECT_NEAR(state["tracks"][0]["distance"].get<double>(), 0.7071, 1e-3);
    EXPECT_EQ(state["tracks"][0]["zone"], "social");
    const auto snap = rt->snapshot();
    EXPECT_TRUE(snap["snapshot"].get<bool>());
    EXPECT_EQ(snap["journal"].size(), rt->journal().size());
}

TEST(Runtime, RotateContextRejectsInvalidDocument) {
    const auto sc = scenario_from_json(minimal_scenario());
    auto rt = runtime_for(sc.setup);
    const auto before = rt->context();
    rt->submit(ControlInput{"rotate_context", 10, {{"context", {{"PersonalityTraits", "Grumpy"}}}, {"date", "2025-03-04"}}});
    EXPECT_EQ(rt->context(), before);
    ASSERT_EQ(rt->errors().size(), 1u);
    EXPECT_EQ(rt->errors()[0]["code"], "context_rejected");

    auto doc = to_json(before);
    doc["SocialRelationshipInfo"][0]["SourceIntent"] = "Ask about lunch.";
    rt->submit(ControlInput{"rotate_context", 20, {{"context", doc}, {"date", "2025-03-04"}}});
    EXPECT_EQ(rt->context().find("Jack")->source_intent, "Ask about lunch.");
    EXPECT_EQ(rt->context().valid_date, "2025-03-04");
}

TEST(Runtime, JournalFileResumesNumbering) {
    const auto path = fixtures::temp_path("runtime-journal.jsonl");
    const auto sc = scenario("jack_walkup");
    std::size_t first = 0;
    {
        RunOptions o;
        o.journal_path = path;
        first = run_scenario(sc, EngineConfig{}, o).journal.size();
    }
    auto reopened = journal::Journal::open(path);
    EXPECT_EQ(reopened.size(), first);
    EXPECT_EQ(reopened.last_sequence(), first);

    RuntimeOptions o;
    o.setup = sc.setup;
    o.responder = std::make_unique<conversation::ScriptedResponder>(sc.setup.daily.script);
    o.journal_path = path;
    Runtime rt(std::move(o));
    EXPECT_EQ(rt.now(), reopened.last_timestamp());
    rt.submit(MoveInput{"t5", 0, 3, -90, rt.now() + 10});
    EXPECT_EQ(rt.journal().entries().back().sequence_no, first + 1);
}

TEST(Runtime, MemoryFilePersistsAcrossRuns) {
    const auto path = fixtures::temp_path("runtime-memory.json");
    RunOptions o;
    o.memory_path = path;
    run_scenario(scenario("jack_walkup"), EngineConfig{}, o);
    const auto stored = memory::MemoryStore::load(path);
    ASSERT_TRUE(stored.person("T-jack"));
    EXPECT_EQ(stored.person("T-jack")->summaries.size(), 1u);
    const auto second = run_scenario(scenario("jack_walkup"), EngineConfig{}, o);
    EXPECT_EQ(memory::MemoryStore::from_json(second.memory).person("T-jack")->summaries.size(), 2u);
    EXPECT_FALSE(second.prompts.front().prior_summary.empty());
}

// --- records and replay -------------------------------------------------------

TEST(Record, JsonRoundTripKeepsHash) {
    const auto record = run_scenario(scenario("barge_in"), EngineConfig{});
    const auto path = fixtures::temp_path("barge.record.json");
    save_record(record, path);
    const auto loaded = load_record(path);
    EXPECT_EQ(record_hash(loaded), record_hash(record));
    EXPECT_EQ(to_json(loaded)["hashes"], to_json(record)["hashes"]);
}

TEST(Record, SameScenarioSameHash) {
    const auto sc = scenario("tagged_and_passerby");
    EXPECT_EQ(record_hash(run_scenario(sc, EngineConfig{})), record_hash(run_scenario(sc, EngineConfig{})));
}

TEST(Replay, UnmodifiedRecordPasses) {
    const auto record = run_scenario(scenario("two_day"), EngineConfig{});
    const auto v = replay(record, EngineConfig{});
    EXPECT_EQ(v.status, ReplayVerdict::Status::Pass) << v.detail;
}

TEST(Replay, TamperedLineFailsAtThatSequence) {
    auto record = run_scenario(scenario("jack_walkup"), EngineConfig{});
    record.journal[6].rendered = "You said: \"something else\"";
    const auto v = replay(record, EngineConfig{});
    EXPECT_EQ(v.status, ReplayVerdict::Status::Fail);
    EXPECT_EQ(v.sequence_no, record.journal[6].sequence_no);
}

TEST(Replay, TamperedTranscriptFails) {
    auto record = run_scenario(scenario("jack_walkup"), EngineConfig{});
    record.transcript[2].text = "edited";
    EXPECT_EQ(replay(record, EngineConfig{}).status, ReplayVerdict::Status::Fail);
}

TEST(Replay, DifferentZoneConfigIsReported) {
    const auto record = run_scenario(scenario("jack_walkup"), EngineConfig{});
    EngineConfig other;
    other.zones.social_max = 1.0;
    const auto v = replay(record, other);
    EXPECT_EQ(v.status, ReplayVerdict::Status::ConfigMismatch);
    EXPECT_FALSE(v.sequence_no);
}

TEST(Replay, ExternalResponderRecordsReplayExactly) {
    RunOptions o;
    o.responder = ResponderKind::External;
    int n = 0;
    o.responder_client = std::make_shared<fixtures::FakeClient>([&n](const chat::Request&) { return "reply " + std::to_string(++n); });
    const auto record = run_scenario(scenario("tagged_and_passerby"), EngineConfig{}, o);
    EXPECT_EQ(record.responder, "external");
    EXPECT_EQ(record.prompts.front().reply, "reply 1");
    EXPECT_EQ(replay(record, EngineConfig{}).status, ReplayVerdict::Status::Pass);
}

TEST(Replay, LlmPolicyRecordsAreUnsupported) {
    EngineConfig llm;
    llm.engagement_policy = "llm";
    RunOptions o;
    o.decision_client = fixtures::replying("STAY: nobody close");
    const auto record = run_scenario(scenario("jack_walkup"), llm, o);
    const auto lines = rendered(record.journal);
    EXPECT_EQ(count(lines, "Engagement check: ENGAGE"), 0u);
    EXPECT_EQ(replay(record, llm).status, ReplayVerdict::Status::Unsupported);
}

TEST(Runtime, LlmFallbackIsJournaled) {
    EngineConfig llm;
    llm.engagement_policy = "llm";
    llm.disengagement_policy = "llm";
    RunOptions o;
    o.decision_client = fixtures::failing("no reply within 5000 ms");
    const auto record = run_scenario(scenario("jack_walkup"), llm, o);
    const auto lines = rendered(record.journal);
    EXPECT_GE(count(lines, "[fallback to rules]"), 1u);
    EXPECT_EQ(count(lines, "Would you like to stay and chat a little longer?"), 1u);
    EXPECT_EQ(lines[0], "Jack has entered the public zone, 2 meters away, facing you.");
}
