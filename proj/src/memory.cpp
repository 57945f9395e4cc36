#include "ditto/memory.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace ditto::memory {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

const std::string& required_string(const Json& obj, const char* field, const std::string& where) {
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) throw ValidationError(where + field + " required");
    if (!it->is_string()) throw ValidationError(where + field + " must be a string");
    return it->get_ref<const std::string&>();
}

// Function words and conversational filler; everything else counts as content.
const std::set<std::string>& stopwords() {
    static const std::set<std::string> words = {
        "the", "and", "for", "are", "but", "not", "you", "your", "yours", "with", "this", "that", "these", "those",
        "have", "has", "had", "was", "were", "been", "being", "will", "would", "could", "should", "can", "cannot",
        "what", "when", "where", "which", "who", "whom", "why", "how", "about", "from", "into", "onto", "over",
        "under", "than", "then", "there", "here", "they", "them", "their", "theirs", "our", "ours", "she", "her",
        "hers", "him", "his", "its", "it's", "i'm", "i've", "you're", "we're", "don't", "didn't", "doesn't",
        "isn't", "wasn't", "aren't", "can't", "won't", "just", "really", "very", "also", "some", "any", "all",
        "much", "many", "more", "most", "such", "only", "own", "same", "too", "yes", "yeah", "okay", "sure",
        "well", "like", "think", "know", "going", "get", "got", "did", "does", "doing", "done", "let", "lets",
        "let's", "one", "two", "out", "off", "again", "still", "now", "today", "yesterday", "tomorrow", "time",
        "thing", "things", "something", "anything", "nothing", "everything", "way", "lot", "bit", "kind",
        "pretty", "good", "great", "nice", "cool", "fun", "want", "need", "say", "said", "tell", "told", "thanks",
        "thank", "hello", "hey", "hi", "bye", "oh", "wow", "haha", "hmm", "because", "while", "after", "before",
        "did", "went", "come", "came", "make", "made", "see", "saw", "look", "looks", "new", "old", "back", "way",
        "maybe", "though", "even", "ever", "never", "always", "every", "each", "both", "other", "another",
        "sounds", "sound", "love", "glad", "happy", "chat", "talk", "talking", "stay", "longer", "little",
    };
    return words;
}

std::vector<std::string> tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        // trim apostrophes at the ends
        while (!cur.empty() && cur.back() == '\'') cur.pop_back();
        while (!cur.empty() && cur.front() == '\'') cur.erase(cur.begin());
        if (!cur.empty()) out.push_back(lower(cur));
        cur.clear();
    };
    for (char c : text) {
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '\'') {
            cur.push_back(c);
        } else {
            flush();
        }
    }
    flush();
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

const RelationshipEntry* UserContext::find(std::string_view who) const {
    auto it = std::find_if(social_relationships.begin(), social_relationships.end(),
                           [&](const auto& r) { return r.who == who; });
    return it == social_relationships.end() ? nullptr : &*it;
}

std::vector<std::string> UserContext::traits() const {
    std::vector<std::string> out;
    std::stringstream ss(personality_traits);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto b = item.find_first_not_of(" \t");
        auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

UserContext load_context(const Json& document, std::string valid_date) {
    if (!document.is_object()) throw ValidationError("context document must be an object");
    UserContext ctx;
    ctx.background = required_string(document, "Background", "");
    if (ctx.background.empty()) throw ValidationError("Background required");
    ctx.personality_traits = required_string(document, "PersonalityTraits", "");

    auto rel = document.find("SocialRelationshipInfo");
    if (rel == document.end() || rel->is_null()) throw ValidationError("SocialRelationshipInfo required");
    if (!rel->is_array()) throw ValidationError("SocialRelationshipInfo must be a list");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < rel->size(); ++i) {
        const Json& item = (*rel)[i];
        const std::string where = "SocialRelationshipInfo[" + std::to_string(i) + "].";
        if (!item.is_object()) throw ValidationError(where + " must be an object");
        RelationshipEntry entry;
        entry.who = required_string(item, "Who", where);
        if (entry.who.empty()) throw ValidationError(where + "Who required");
        entry.relationship_info = required_string(item, "RelationshipInfo", where);
        entry.source_intent = required_string(item, "SourceIntent", where);
        if (!seen.insert(entry.who).second) throw ValidationError("duplicate Who '" + entry.who + "'");
        ctx.social_relationships.push_back(std::move(entry));
    }

    for (const auto& [key, value] : document.items()) {
        if (key == "Background" || key == "PersonalityTraits" || key == "SocialRelationshipInfo" || key == "ValidDate") continue;
        ctx.extra[key] = value;
    }
    if (valid_date.empty() && document.contains("ValidDate") && document["ValidDate"].is_string())
        valid_date = document["ValidDate"].get<std::string>();
    ctx.valid_date = std::move(valid_date);
    return ctx;
}

UserContext load_context_file(const std::filesystem::path& path, std::string valid_date) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read context file " + path.string());
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return load_context(doc, std::move(valid_date));
}

Json to_json(const UserContext& ctx) {
    Json doc = ctx.extra;
    doc["Background"] = ctx.background;
    doc["PersonalityTraits"] = ctx.personality_traits;
    doc["SocialRelationshipInfo"] = Json::array();
    for (const auto& r : ctx.social_relationships) {
        doc["SocialRelationshipInfo"].push_back(
            {{"Who", r.who}, {"RelationshipInfo", r.relationship_info}, {"SourceIntent", r.source_intent}});
    }
    if (!ctx.valid_date.empty()) doc["ValidDate"] = ctx.valid_date;
    return doc;
}

const UserContext& ContextManager::rotate_daily(const Json& document, std::string date) {
    UserContext next = load_context(document, std::move(date));
    active_ = std::move(next);
    return active_;
}

// ---------------------------------------------------------------------------

std::string GeneralSummary::text() const {
    std::string out;
    for (const auto& s : recent) {
        if (!out.empty()) out += kEpisodeSeparator;
        out += s;
    }
    return out;
}

std::string redact_names(std::string text, std::span<const std::string> names) {
    for (const auto& name : names) {
        if (name.empty()) continue;
        const std::string needle = lower(name);
        std::string haystack = lower(text);
        std::string out;
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto hit = haystack.find(needle, pos);
            if (hit == std::string::npos) break;
            const bool left_ok = hit == 0 || !is_word_char(text[hit - 1]);
            const std::size_t end = hit + needle.size();
            const bool right_ok = end >= text.size() || !is_word_char(text[end]);
            out.append(text, pos, hit - pos);
            out += (left_ok && right_ok) ? std::string("someone") : text.substr(hit, needle.size());
            pos = end;
        }
        out.append(text, std::min(pos, text.size()), std::string::npos);
        text = std::move(out);
    }
    return text;
}

void MemoryStore::store_person(const std::string& person_key, const std::string& name, EpisodeSummary summary,
                               Millis when) {
    auto& mem = people_[person_key];
    mem.person_key = person_key;
    mem.name = name;
    mem.last_interaction = std::max(mem.last_interaction, when);
    auto pos = std::upper_bound(mem.summaries.begin(), mem.summaries.end(), summary.episode_id,
                                [](std::uint64_t id, const EpisodeSummary& s) { return id < s.episode_id; });
    mem.summaries.insert(pos, std::move(summary));
}

void MemoryStore::merge_general(const EpisodeSummary& summary, std::span<const std::string> names) {
    general_.recent.push_back(redact_names(summary.text, names));
    while (general_.recent.size() > kGeneralSummaryCap) general_.recent.pop_front();
    ++general_.episode_count;
}

std::string MemoryStore::recall(const std::optional<std::string>& person_key) const {
    if (!person_key) return general_.text();
    const auto* mem = person(*person_key);
    if (!mem) return {};
    std::string out;
    for (const auto& s : mem->summaries) {
        if (!out.empty()) out += kEpisodeSeparator;
        out += s.text;
    }
    return out;
}

const PersonMemory* MemoryStore::person(const std::string& key) const {
    auto it = people_.find(key);
    return it == people_.end() ? nullptr : &it->second;
}

Json MemoryStore::to_json() const {
    Json people = Json::object();
    for (const auto& [key, mem] : people_) {
        Json summaries = Json::array();
        for (const auto& s : mem.summaries) {
            summaries.push_back({{"episode_id", s.episode_id}, {"date", s.date}, {"text", s.text}, {"warning", s.warning}});
        }
        people[key] = {{"name", mem.name}, {"summaries", summaries}, {"last_interaction", mem.last_interaction}};
    }
    return {{"people", people},
            {"general", {{"recent", general_.recent}, {"episode_count", general_.episode_count}}}};
}

MemoryStore MemoryStore::from_json(const Json& j) {
    MemoryStore store;
    for (const auto& [key, p] : j.at("people").items()) {
        PersonMemory mem;
        mem.person_key = key;
        mem.name = p.at("name").get<std::string>();
        mem.last_interaction = p.value("last_interaction", Millis{0});
        for (const auto& s : p.at("summaries")) {
            mem.summaries.push_back({s.at("episode_id").get<std::uint64_t>(), s.value("date", std::string{}),
                                     s.at("text").get<std::string>(), s.value("warning", false)});
        }
        store.people_.emplace(key, std::move(mem));
    }
    const auto& g = j.at("general");
    for (const auto& s : g.at("recent")) store.general_.recent.push_back(s.get<std::string>());
    store.general_.episode_count = g.at("episode_count").get<std::uint64_t>();
    return store;
}

void MemoryStore::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write memory store " + path.string());
    out << to_json().dump(2) << '\n';
}

MemoryStore MemoryStore::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read memory store " + path.string());
    return from_json(Json::parse(in));
}

// ---------------------------------------------------------------------------

std::vector<std::string> recurring_terms(std::span<const Utterance> transcript, std::size_t limit) {
    std::vector<std::string> order;
    std::map<std::string, int> utterance_count;
    for (const auto& u : transcript) {
        std::set<std::string> seen_here;
        for (auto& t : tokens(u.text)) {
            if (t.size() < 3 || stopwords().contains(t)) continue;
            if (!seen_here.insert(t).second) continue;
            if (utterance_count[t]++ == 0) order.push_back(t);
        }
    }
    std::vector<std::string> out;
    for (const auto& t : order) {
        if (utterance_count[t] >= 2) out.push_back(t);
        if (out.size() == limit) break;
    }
    return out;
}

std::string TemplateSummarizer::summarize(const SummaryRequest& request) {
    std::ostringstream out;
    out << "Talked with " << request.addressee << " for " << request.turn_count
        << (request.turn_count == 1 ? " turn" : " turns");
    if (request.topic) out << " about the topic " << *request.topic;
    out << ".";
    const auto terms = recurring_terms(request.transcript);
    if (!terms.empty()) {
        out << " Recurring subjects: ";
        for (std::size_t i = 0; i < terms.size(); ++i) out << (i ? ", " : "") << terms[i];
        out << ".";
    }
    return out.str();
}

std::optional<SummaryOutcome> summarize_episode(const SummaryRequest& request, Summarizer& summarizer) {
    const bool has_user_speech = std::any_of(request.transcript.begin(), request.transcript.end(),
                                             [](const Utterance& u) { return u.speaker == Speaker::User; });
    if (!has_user_speech) return std::nullopt;
    try {
        auto text = summarizer.summarize(request);
        if (text.empty()) throw std::runtime_error("summarizer returned empty text");
        return SummaryOutcome{std::move(text), false, {}};
    } catch (const std::exception& e) {
        std::string excerpt;
        const auto n = request.transcript.size();
        for (std::size_t i = n >= 2 ? n - 2 : 0; i < n; ++i) {
            const auto& u = request.transcript[i];
            if (!excerpt.empty()) excerpt += " / ";
            excerpt += std::string(to_string(u.speaker)) + ": " + u.text;
        }
        return SummaryOutcome{std::move(excerpt), true, e.what()};
    }
}

}  // namespace ditto::memory
