#include "ditto/memory.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace ditto;
using namespace ditto::memory;

namespace {

Json reference_document() {
    std::ifstream in(fixtures::data_path("reference_context.json"));
    return Json::parse(in);
}

std::string validation_message(const Json& doc) {
    try {
        load_context(doc);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

Utterance user(std::string text) { return {Speaker::User, std::move(text), 0, 0, true, false}; }
Utterance agent(std::string text) { return {Speaker::Agent, std::move(text), 0, 0, true, false}; }

class FailingSummarizer final : public Summarizer {
public:
    std::string summarize(const SummaryRequest&) override { throw std::runtime_error("model unavailable"); }
};

}  // namespace

TEST(Context, LoadsReferenceDocument) {
    const auto ctx = load_context_file(fixtures::data_path("reference_context.json"), "2025-03-03");
    ASSERT_EQ(ctx.social_relationships.size(), 2u);
    EXPECT_EQ(ctx.social_relationships[0].who, "X");
    EXPECT_EQ(ctx.social_relationships[1].who, "Y");
    EXPECT_NE(ctx.find("Y")->relationship_info.find("dog park simulation"), std::string::npos);
    EXPECT_EQ(ctx.traits(), (std::vector<std::string>{"Cheerful", "Sarcastic", "Humorous", "Witty"}));
    EXPECT_EQ(ctx.valid_date, "2025-03-03");
    EXPECT_EQ(ctx.extra.at("$schema"), "./userContext-schema.json");
}

TEST(Context, MissingBackground) {
    auto doc = reference_document();
    doc.erase("Background");
    EXPECT_EQ(validation_message(doc), "Background required");
    doc["Background"] = "";
    EXPECT_EQ(validation_message(doc), "Background required");
}

TEST(Context, DuplicateWho) {
    auto doc = reference_document();
    doc["SocialRelationshipInfo"][1]["Who"] = "X";
    EXPECT_EQ(validation_message(doc), "duplicate Who 'X'");
}

TEST(Context, NamesOffendingField) {
    auto doc = reference_document();
    doc["SocialRelationshipInfo"][0].erase("SourceIntent");
    EXPECT_NE(validation_message(doc).find("SourceIntent"), std::string::npos);
    doc = reference_document();
    doc.erase("SocialRelationshipInfo");
    EXPECT_EQ(validation_message(doc), "SocialRelationshipInfo required");
    EXPECT_FALSE(validation_message(Json::array()).empty());
}

TEST(Context, JsonRoundTrip) {
    const auto ctx = load_context(reference_document(), "2025-03-03");
    EXPECT_EQ(load_context(to_json(ctx), "2025-03-03"), ctx);
}

TEST(Context, RotationReplacesOrKeeps) {
    ContextManager manager(load_context(reference_document()));
    auto day2 = reference_document();
    day2["SocialRelationshipInfo"][1]["SourceIntent"] = "Ask Y how the paper submission went.";
    manager.rotate_daily(day2, "2025-03-04");
    EXPECT_EQ(manager.active().find("Y")->source_intent, "Ask Y how the paper submission went.");
    EXPECT_EQ(manager.active().valid_date, "2025-03-04");

    auto bad = day2;
    bad.erase("Background");
    EXPECT_THROW(manager.rotate_daily(bad, "2025-03-05"), ValidationError);
    EXPECT_EQ(manager.active().valid_date, "2025-03-04");
}

TEST(Store, RecallOrdersByEpisode) {
    MemoryStore store;
    store.store_person("Y", "Y", {2, "d2", "second", false}, 200);
    store.store_person("Y", "Y", {1, "d1", "first", false}, 100);
    EXPECT_EQ(store.recall(std::string("Y")), std::string("first") + std::string(kEpisodeSeparator) + "second");
    EXPECT_EQ(store.recall(std::string("nobody")), "");
    EXPECT_EQ(store.recall(std::nullopt), "");
    EXPECT_EQ(store.person("Y")->last_interaction, 200);
}

TEST(Store, GeneralSummaryRedactsAndCaps) {
    MemoryStore store;
    const std::vector<std::string> names{"Jack", "Maya", "T-jack"};
    for (int i = 0; i < 3; ++i) store.merge_general({std::uint64_t(i), "", "Talked about Jack and maya's lunch plans, episode " + std::to_string(i), false}, names);
    EXPECT_EQ(store.general().episode_count, 3u);
    const auto text = store.recall(std::nullopt);
    for (const auto& n : names) EXPECT_EQ(text.find(n), std::string::npos) << n;
    EXPECT_EQ(text.find("maya"), std::string::npos);
    EXPECT_NE(text.find("someone"), std::string::npos);

    for (int i = 3; i < 15; ++i) store.merge_general({std::uint64_t(i), "", "ep " + std::to_string(i), false}, names);
    EXPECT_EQ(store.general().recent.size(), kGeneralSummaryCap);
    EXPECT_EQ(store.general().recent.front(), "ep 5");
    EXPECT_EQ(store.general().episode_count, 15u);
}

TEST(Store, RedactionIsWholeWord) {
    const std::vector<std::string> names{"Al"};
    EXPECT_EQ(redact_names("Al talked about algebra with AL.", names), "someone talked about algebra with someone.");
}

TEST(Store, PersistenceRoundTrip) {
    MemoryStore store;
    store.store_person("Jack", "Jack", {1, "2025-03-03", "pottery chat", false}, 10);
    store.merge_general({2, "2025-03-03", "a visitor", true}, {});
    const auto path = fixtures::temp_path("memory.json");
    store.save(path);
    const auto loaded = MemoryStore::load(path);
    EXPECT_EQ(loaded, store);
    EXPECT_EQ(loaded.recall(std::string("Jack")), store.recall(std::string("Jack")));
    EXPECT_EQ(MemoryStore::from_json(store.to_json()), store);
}

TEST(Summary, DeterministicTemplate) {
    const std::vector<Utterance> transcript{
        agent("Hi Y! Did you see my pottery?"),        user("Yes, the pottery bowl is lovely."),
        agent("Thanks, the glaze was tricky."),         user("Which glaze did you use?"),
        agent("A blue glaze on the pottery wheel bowl."), user("Nice."),
        agent("Want lunch?"),                            user("Sure."),
        agent("Great."),                                 user("Catch you later."),
        agent("Bye!"),                                   user("Take care."),
    };
    TemplateSummarizer summarizer;
    const auto out = summarize_episode({transcript, "Y", std::string("Pottery"), 6}, summarizer);
    ASSERT_TRUE(out);
    EXPECT_FALSE(out->warning);
    EXPECT_EQ(out->text, "Talked with Y for 6 turns about the topic Pottery. Recurring subjects: pottery, bowl, glaze.");

    MemoryStore store;
    store.store_person("Y", "Y", {1, "", out->text, false}, 0);
    EXPECT_NE(store.recall(std::string("Y")).find("pottery"), std::string::npos);
}

TEST(Summary, RecurringTermsOracle) {
    const std::vector<Utterance> transcript{user("The ring project demo"), agent("A ring demo, nice"), user("ring again")};
    EXPECT_EQ(recurring_terms(transcript), (std::vector<std::string>{"ring", "demo"}));
}

TEST(Summary, NoUserSpeechMeansNoSummary) {
    const std::vector<Utterance> transcript{agent("Hello there!")};
    TemplateSummarizer summarizer;
    EXPECT_FALSE(summarize_episode({transcript, "Y", std::nullopt, 0}, summarizer));
    EXPECT_FALSE(summarize_episode({{}, "Y", std::nullopt, 0}, summarizer));
}

TEST(Summary, FailureStoresExcerptWithWarning) {
    const std::vector<Utterance> transcript{agent("one"), user("two"), agent("three")};
    FailingSummarizer summarizer;
    const auto out = summarize_episode({transcript, "Y", std::nullopt, 1}, summarizer);
    ASSERT_TRUE(out);
    EXPECT_TRUE(out->warning);
    EXPECT_EQ(out->text, "user: two / agent: three");
    EXPECT_EQ(out->detail, "model unavailable");
}
