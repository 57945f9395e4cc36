#include "ditto/journal.hpp"

#include <cmath>
#include <sstream>

namespace ditto::journal {

namespace {

std::string meters(double distance) {
    const long d = std::lround(distance);
    return std::to_string(d) + (d == 1 ? " meter" : " meters");
}

}  // namespace

std::string_view to_string(EntryKind kind) {
    switch (kind) {
        case EntryKind::Presence: return "presence";
        case EntryKind::UtteranceUser: return "utterance_user";
        case EntryKind::UtteranceAgent: return "utterance_agent";
        case EntryKind::Decision: return "decision";
        case EntryKind::SummaryWritten: return "summary_written";
    }
    return "presence";
}

EntryKind kind_from_string(std::string_view text) {
    if (text == "presence") return EntryKind::Presence;
    if (text == "utterance_user") return EntryKind::UtteranceUser;
    if (text == "utterance_agent") return EntryKind::UtteranceAgent;
    if (text == "decision") return EntryKind::Decision;
    if (text == "summary_written") return EntryKind::SummaryWritten;
    throw InputError("unknown journal kind '" + std::string(text) + "'");
}

Json to_json(const JournalEntry& e) {
    return Json{{"sequence_no", e.sequence_no}, {"timestamp", e.timestamp}, {"kind", to_string(e.kind)},
                {"structured", e.structured},   {"rendered", e.rendered},   {"subject", e.subject}};
}

JournalEntry entry_from_json(const Json& j) {
    JournalEntry e;
    e.sequence_no = j.at("sequence_no").get<std::uint64_t>();
    e.timestamp = j.at("timestamp").get<Millis>();
    e.kind = kind_from_string(j.at("kind").get<std::string>());
    e.structured = j.value("structured", Json::object());
    e.rendered = j.at("rendered").get<std::string>();
    e.subject = j.at("subject").get<std::string>();
    return e;
}

std::string subject_for(const std::optional<proxemics::PersonIdentity>& identity) {
    return identity ? identity->name : std::string(kPasserby);
}

std::string render_presence(const proxemics::PresenceEvent& event,
                            const std::optional<proxemics::PersonIdentity>& identity,
                            double distance,
                            bool facing) {
    using proxemics::PresenceKind;
    const std::string who = subject_for(identity);
    const std::string facing_text = facing ? "facing you." : "not facing you.";
    std::ostringstream out;
    switch (event.kind) {
        case PresenceKind::EnteredZone:
            if (identity) {
                out << who << " has entered the " << proxemics::to_string(event.zone) << " zone, " << meters(distance)
                    << " away, " << facing_text;
            } else {
                out << who << " has entered the zone, " << meters(distance) << " away, " << facing_text;
            }
            break;
        case PresenceKind::MovedZone:
            out << who << " has moved into the " << proxemics::to_string(event.zone) << " zone, " << meters(distance)
                << " away, " << facing_text;
            break;
        case PresenceKind::LeftZone:
            out << who << " has left the zone.";
            break;
        case PresenceKind::FacingChanged:
            if (facing) {
                out << who << " has turned toward you, " << meters(distance) << " away.";
            } else {
                out << who << " has turned away from you, " << meters(distance) << " away.";
            }
            break;
    }
    return out.str();
}

std::string render_user_utterance(std::string_view subject, std::string_view text) {
    return std::string(subject) + " said: \"" + std::string(text) + "\"";
}

std::string render_agent_utterance(std::string_view text, bool interrupted) {
    if (interrupted) return "You were interrupted while saying: \"" + std::string(text) + "\"";
    return "You said: \"" + std::string(text) + "\"";
}

// ---------------------------------------------------------------------------

Journal Journal::open(const std::filesystem::path& path) {
    Journal j;
    if (std::filesystem::exists(path)) {
        std::ifstream in(path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            Json parsed;
            try {
                parsed = Json::parse(line);
            } catch (const Json::parse_error& e) {
                throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
            }
            if (parsed.contains("engine_start")) continue;
            auto entry = entry_from_json(parsed);
            j.next_sequence_ = std::max(j.next_sequence_, entry.sequence_no + 1);
            j.last_timestamp_ = std::max(j.last_timestamp_, entry.timestamp);
            j.entries_.push_back(std::move(entry));
        }
    }
    j.sink_ = std::make_unique<std::ofstream>(path, std::ios::app);
    if (!*j.sink_) throw InputError("cannot open journal file " + path.string());
    return j;
}

std::uint64_t Journal::append(JournalEntry entry) {
    if (!entries_.empty() && entry.timestamp < last_timestamp_) {
        throw OrderingError("journal timestamp " + std::to_string(entry.timestamp) + " precedes " +
                            std::to_string(last_timestamp_));
    }
    if (entry.rendered.empty()) throw InputError("journal entry needs a rendered sentence");
    entry.sequence_no = next_sequence_++;
    last_timestamp_ = entry.timestamp;
    if (sink_) {
        *sink_ << to_json(entry).dump() << '\n';
        sink_->flush();
    }
    entries_.push_back(std::move(entry));
    return entries_.back().sequence_no;
}

void Journal::mark_session_start(Millis ts, const Json& info) {
    if (!sink_) return;
    *sink_ << Json{{"engine_start", info}, {"timestamp", ts}, {"continues_after", last_sequence()}}.dump() << '\n';
    sink_->flush();
}

std::vector<JournalEntry> Journal::window(std::size_t last_n, std::span<const EntryKind> kinds) const {
    if (last_n == 0) throw InputError("window size must be at least 1");
    std::vector<JournalEntry> out;
    for (auto it = entries_.rbegin(); it != entries_.rend() && out.size() < last_n; ++it) {
        if (!kinds.empty() && std::find(kinds.begin(), kinds.end(), it->kind) == kinds.end()) continue;
        out.push_back(*it);
    }
    std::reverse(out.begin(), out.end());
    return out;
}

}  // namespace ditto::journal
