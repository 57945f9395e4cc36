#include "ditto/harness/runtime.hpp"

#include <algorithm>
#include <set>

namespace ditto::harness {

using conversation::Purpose;
using engagement::EngineEvent;

Json to_json(const PromptRecord& p) {
    Json j{{"generation", p.generation},
           {"episode_id", p.episode_id},
           {"purpose", conversation::to_string(p.purpose)},
           {"addressee", p.addressee},
           {"person_key", p.person_key ? Json(*p.person_key) : Json()},
           {"topic", p.topic ? Json(*p.topic) : Json()},
           {"prior_summary", p.prior_summary},
           {"system_text", p.system_text},
           {"reply", p.reply},
           {"fallback", p.fallback}};
    if (p.warning) j["warning"] = *p.warning;
    if (p.prompt_warning) j["prompt_warning"] = *p.prompt_warning;
    return j;
}

namespace {

Purpose purpose_from_string(const std::string& s) {
    for (auto p : {Purpose::Greeting, Purpose::Reply, Purpose::StayPrompt, Purpose::Farewell})
        if (conversation::to_string(p) == s) return p;
    throw InputError("unknown purpose '" + s + "'");
}

std::optional<std::string> optional_string(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
}

}  // namespace

PromptRecord prompt_from_json(const Json& j) {
    PromptRecord p;
    p.generation = j.at("generation").get<std::uint64_t>();
    p.episode_id = j.at("episode_id").get<std::uint64_t>();
    p.purpose = purpose_from_string(j.at("purpose").get<std::string>());
    p.addressee = j.at("addressee").get<std::string>();
    p.person_key = optional_string(j, "person_key");
    p.topic = optional_string(j, "topic");
    p.prior_summary = j.value("prior_summary", std::string{});
    p.system_text = j.at("system_text").get<std::string>();
    p.reply = j.at("reply").get<std::string>();
    p.fallback = j.value("fallback", false);
    p.warning = optional_string(j, "warning");
    p.prompt_warning = optional_string(j, "prompt_warning");
    return p;
}

EngineConfig effective_config(const EngineConfig& base, const Json& overrides) {
    Json merged = to_json(base);
    merged.merge_patch(overrides);
    return config_from_json(merged);
}

namespace {

std::unique_ptr<engagement::Policy> make_policy(const std::string& kind, const EngineConfig& config,
                                                const std::shared_ptr<chat::Client>& client) {
    if (kind == "llm") {
        auto llm = engagement::default_llm_policy_config();
        llm.timeout = std::chrono::milliseconds(config.decision_timeout);
        llm.model = config.model;
        return std::make_unique<engagement::LlmPolicy>(client, llm, config.zones);
    }
    return std::make_unique<engagement::RulePolicy>(config.zones);
}

}  // namespace

Runtime::Runtime(RuntimeOptions options)
    : config_(std::move(options.config)),
      registry_(options.setup.registry),
      context_(memory::load_context(options.setup.context, options.setup.date)),
      date_(options.setup.date),
      daily_(std::move(options.setup.daily)),
      responder_(std::move(options.responder)),
      memory_path_(std::move(options.memory_path)),
      tracker_(config_.zones),
      fusion_(registry_, config_.fusion) {
    config_.validate();
    if (!responder_) throw ConfigError("runtime needs a responder");
    engagement_policy_ = make_policy(config_.engagement_policy, config_, options.decision_client);
    disengagement_policy_ = make_policy(config_.disengagement_policy, config_, options.decision_client);
    if (memory_path_ && std::filesystem::exists(*memory_path_)) memory_ = memory::MemoryStore::load(*memory_path_);
    if (options.journal_path) {
        journal_ = journal::Journal::open(*options.journal_path);
        now_ = journal_.last_timestamp();
        journal_.mark_session_start(now_, {{"responder", responder_->kind()}, {"config", to_json(config_)}});
    }
    last_state_ = state_message();
}

// ---------------------------------------------------------------------------
// Inputs

void Runtime::submit(const Inbound& input) {
    const auto ts = timestamp_of(input);
    if (ts && *ts < now_) {
        throw OrderingError("input at " + std::to_string(*ts) + " ms is behind the clock (" + std::to_string(now_) + " ms)");
    }
    if (const auto* m = std::get_if<MoveInput>(&input)) {
        if (const auto* t = tracker_.find(m->track_id); t && t->last.timestamp >= m->ts) {
            throw OrderingError("track " + m->track_id + " already observed at " + std::to_string(t->last.timestamp) + " ms");
        }
    }
    if (!running_ && !std::holds_alternative<ControlInput>(input)) throw StateError("engine is stopped");
    if (const auto* tag = std::get_if<TagInput>(&input); tag && !registry_.contains(tag->tag_id)) {
        // dropped, but the attempt is part of the session
        inputs_.push_back(input);
        advance_to(tag->ts);
        const auto err = error_message("unregistered_tag", "tag '" + tag->tag_id + "' is not in the registry");
        errors_.push_back(err);
        emit(err);
        return;
    }

    inputs_.push_back(input);
    if (ts) advance_to(*ts);
    std::visit([this](const auto& m) { handle(m); }, input);
    advance_to(now_);
    emit_state_if_changed();
}

void Runtime::handle(const MoveInput& m) {
    const auto obs = proxemics::make_observation(m.track_id, m.ts, {m.x, m.y}, m.facing_deg);
    for (const auto& a : fusion_.observe(obs)) {
        dispatch(engagement::IdentityUpdate{a.track_id, fusion_.identity_of(a.track_id)});
    }
    for (const auto& ev : tracker_.update(obs)) {
        dispatch(engagement::PresenceUpdate{ev, fusion_.identity_of(ev.track_id)});
    }
    if (state_.mode == engagement::Mode::NotEngaged) dispatch(engagement::Check{engagement::CheckTrigger::Observation});
}

void Runtime::handle(const TagInput& t) {
    auto result = fusion_.sight({t.tag_id, t.ts, t.present}, t.track_id);
    if (result.error) {
        auto err = error_message("tag", *result.error);
        errors_.push_back(err);
        emit(err);
    }
    for (const auto& a : result.released) dispatch(engagement::IdentityUpdate{a.track_id, std::nullopt});
    for (const auto& a : result.formed) dispatch(engagement::IdentityUpdate{a.track_id, fusion_.identity_of(a.track_id)});
}

void Runtime::handle(const SpeechInput& s) {
    auto& assembler = assemblers_.try_emplace(s.track_id, config_.silence_window).first->second;
    const bool voiced = s.text.find_first_not_of(" \t\r\n") != std::string::npos;
    auto done = assembler.push({s.ts, s.text, s.final});
    if (voiced) dispatch(engagement::UserSpeech{s.track_id});
    for (auto& u : done) close_utterance(s.track_id, std::move(u));
}

void Runtime::handle(const ControlInput& c) {
    if (c.action == "tick" || c.action == "snapshot") return;
    if (c.action == "start") {
        running_ = true;
        return;
    }
    if (c.action == "stop") {
        running_ = false;
        return;
    }
    if (c.action == "rotate_context") {
        const std::string date = c.args.value("date", std::string{});
        try {
            std::optional<conversation::DailyConfig> daily;
            if (auto it = c.args.find("daily"); it != c.args.end()) daily = conversation::daily_from_json(*it);
            context_.rotate_daily(c.args.at("context"), date);
            date_ = date;
            if (daily) {
                daily_ = std::move(*daily);
                responder_->replace_script(daily_.script);
            }
        } catch (const std::exception& e) {
            auto err = error_message("context_rejected", e.what());
            errors_.push_back(err);
            emit(err);
        }
    }
}

// ---------------------------------------------------------------------------
// Clock

void Runtime::schedule(Millis at, std::variant<SpeechEndTimer, ReplyTimer, PeriodicTimer> what) {
    timers_.push(Timer{at, timer_order_++, std::move(what)});
}

void Runtime::advance_to(Millis t) {
    for (;;) {
        std::optional<Millis> expiry = tracker_.next_timeout();
        std::optional<Millis> silence;
        for (const auto& [_, a] : assemblers_) {
            if (auto d = a.deadline(); d && (!silence || *d < *silence)) silence = d;
        }
        std::optional<Millis> timer;
        if (!timers_.empty()) timer = timers_.top().at;

        std::optional<Millis> next;
        for (const auto& c : {expiry, silence, timer})
            if (c && (!next || *c < *next)) next = c;
        if (!next || *next > t) break;
        now_ = std::max(now_, *next);

        if (expiry == next) {
            expire_tracks(*next);
        } else if (silence == next) {
            for (auto& [track, a] : assemblers_) {
                if (a.deadline() == next) {
                    if (auto u = a.poll(*next)) close_utterance(track, std::move(*u));
                }
            }
        } else {
            Timer fired = timers_.top();
            timers_.pop();
            std::visit(
                [this](const auto& w) {
                    using W = std::decay_t<decltype(w)>;
                    if constexpr (std::is_same_v<W, SpeechEndTimer>) {
                        dispatch(engagement::AgentSpeechEnded{w.generation});
                    } else if constexpr (std::is_same_v<W, ReplyTimer>) {
                        dispatch(w.reply);
                    } else {
                        if (state_.mode != engagement::Mode::NotEngaged && state_.episode_id == w.episode_id) {
                            dispatch(engagement::Check{engagement::CheckTrigger::Periodic});
                            if (state_.mode != engagement::Mode::NotEngaged && state_.episode_id == w.episode_id)
                                schedule(now_ + config_.periodic_interval, PeriodicTimer{w.episode_id});
                        }
                    }
                },
                fired.what);
        }
    }
    now_ = std::max(now_, t);
}

std::optional<Millis> Runtime::next_due() const {
    std::optional<Millis> next = tracker_.next_timeout();
    for (const auto& [_, a] : assemblers_) {
        if (auto d = a.deadline(); d && (!next || *d < *next)) next = d;
    }
    if (!timers_.empty() && (!next || timers_.top().at < *next)) next = timers_.top().at;
    return next;
}

void Runtime::settle(Millis horizon) {
    const Millis limit = now_ + horizon;
    for (auto next = next_due(); next && *next <= limit; next = next_due()) advance_to(*next);
    emit_state_if_changed();
}

void Runtime::expire_tracks(Millis at) {
    std::set<TrackId> before;
    for (const auto& [id, _] : tracker_.tracks()) before.insert(id);
    for (const auto& ev : tracker_.expire(at)) {
        dispatch(engagement::PresenceUpdate{ev, fusion_.identity_of(ev.track_id)});
    }
    for (const auto& id : before) {
        if (tracker_.find(id)) continue;
        if (fusion_.track_exited(id)) dispatch(engagement::IdentityUpdate{id, std::nullopt});
        assemblers_.erase(id);
    }
}

void Runtime::close_utterance(const TrackId& track, Utterance utterance) {
    last_user_utterance_[track] = {now_, utterance};
    transcript_.push_back(utterance);
    const bool partner = state_.mode != engagement::Mode::NotEngaged && state_.engaged_track == track;
    if (partner) episode_transcript_.push_back(utterance);
    dispatch(engagement::UserUtterance{track, fusion_.identity_of(track), std::move(utterance)});
}

// ---------------------------------------------------------------------------
// Engine

engagement::WorldView Runtime::world_view() const {
    engagement::WorldView w;
    w.journal_window = journal_.window(config_.journal_window);
    for (const auto& [id, t] : tracker_.tracks()) {
        engagement::TrackFeatures f;
        f.track_id = id;
        f.zone = t.zone;
        f.distance = t.last.distance;
        f.facing_offset = t.last.facing_offset;
        if (t.engage_since) {
            Millis since = *t.engage_since;
            if (auto it = state_.disengaged_at.find(id); it != state_.disengaged_at.end()) since = std::max(since, it->second);
            f.dwell = std::max<Millis>(0, t.last.timestamp - since);
        }
        f.identity = fusion_.identity_of(id);
        w.candidates.push_back(std::move(f));
    }
    if (state_.engaged_track) {
        if (auto it = assemblers_.find(*state_.engaged_track); it != assemblers_.end()) w.partner_speaking = it->second.pending();
    }
    return w;
}

void Runtime::dispatch(EngineEvent event) {
    pending_.push_back(std::move(event));
    if (pending_.size() > 1) return;  // already draining
    while (!pending_.empty()) {
        engagement::Policies policies{engagement_policy_.get(), disengagement_policy_.get()};
        engagement::StepConfig step_config{config_.ms_per_word, config_.farewell};
        auto result = engagement::step(state_, pending_.front(), world_view(), policies, step_config, now_);
        state_ = std::move(result.state);
        for (const auto& effect : result.effects) apply(effect);
        pending_.pop_front();
    }
}

void Runtime::apply(const engagement::Effect& effect) {
    std::visit(
        [this](const auto& e) {
            using E = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<E, engagement::JournalAppend>) {
                auto entry = e.entry;
                entry.sequence_no = journal_.append(entry);
                emit({{"type", "journal"}, {"entry", journal::to_json(entry)}});
            } else if constexpr (std::is_same_v<E, engagement::RequestUtterance>) {
                request_utterance(e);
            } else if constexpr (std::is_same_v<E, engagement::Speak>) {
                transcript_.push_back(e.utterance);
                episode_transcript_.push_back(e.utterance);
                agent_index_[e.generation] = {transcript_.size() - 1, episode_transcript_.size() - 1};
                schedule(e.utterance.ended, SpeechEndTimer{e.generation});
                emit({{"type", "utterance"},
                      {"speaker", "agent"},
                      {"text", e.utterance.text},
                      {"interrupted", false},
                      {"purpose", conversation::to_string(e.purpose)},
                      {"generation", e.generation},
                      {"started", e.utterance.started},
                      {"ended", e.utterance.ended}});
            } else if constexpr (std::is_same_v<E, engagement::InterruptAgent>) {
                if (auto it = agent_index_.find(e.generation); it != agent_index_.end()) {
                    auto& u = transcript_[it->second.first];
                    u.interrupted = true;
                    u.ended = e.at;
                    if (it->second.second < episode_transcript_.size()) {
                        episode_transcript_[it->second.second].interrupted = true;
                        episode_transcript_[it->second.second].ended = e.at;
                    }
                    emit({{"type", "utterance"},
                          {"speaker", "agent"},
                          {"text", u.text},
                          {"interrupted", true},
                          {"generation", e.generation},
                          {"started", u.started},
                          {"ended", e.at}});
                }
            } else if constexpr (std::is_same_v<E, engagement::EpisodeStarted>) {
                episode_transcript_.clear();
                agent_index_.clear();
                if (auto it = last_user_utterance_.find(e.track); it != last_user_utterance_.end() && it->second.first == now_)
                    episode_transcript_.push_back(it->second.second);
                const auto prior = memory_.recall(e.identity ? std::optional(e.identity->tag_id) : std::nullopt);
                episode_topic_ = conversation::choose_topic(daily_.topics, prior);
                schedule(now_ + config_.periodic_interval, PeriodicTimer{e.episode_id});
            } else if constexpr (std::is_same_v<E, engagement::EpisodeEnded>) {
                end_of_episode(e);
            } else if constexpr (std::is_same_v<E, engagement::ReplyDiscarded>) {
                discarded_.push_back(e.generation);
            } else if constexpr (std::is_same_v<E, engagement::FollowUpCheck>) {
                pending_.push_back(engagement::Check{e.trigger});
            } else if constexpr (std::is_same_v<E, engagement::ErrorRaised>) {
                auto err = error_message(e.code, e.detail);
                errors_.push_back(err);
                emit(err);
            }
        },
        effect);
}

void Runtime::request_utterance(const engagement::RequestUtterance& r) {
    const auto& identity = state_.engaged_identity;
    conversation::Addressee addressee;
    std::optional<std::string> person_key;
    if (identity) {
        addressee.name = identity->name;
        addressee.context_key = identity->context_key;
        person_key = identity->tag_id;
    }
    const std::string prior = memory_.recall(person_key);
    auto bundle = conversation::assemble_prompt(context_.active(), prior, episode_transcript_, episode_topic_, addressee,
                                                r.purpose, config_.rules_prompt);
    auto reply = responder_->respond(bundle);

    std::optional<std::string> warning = bundle.warning;
    if (reply.warning) warning = warning ? *warning + "; " + *reply.warning : *reply.warning;

    PromptRecord record;
    record.generation = r.generation;
    record.episode_id = state_.episode_id;
    record.purpose = r.purpose;
    record.addressee = bundle.addressee;
    record.person_key = person_key;
    if (episode_topic_) record.topic = episode_topic_->title;
    record.prior_summary = prior;
    record.system_text = bundle.system_text;
    record.reply = reply.text;
    record.fallback = reply.fallback;
    record.warning = reply.warning;
    record.prompt_warning = bundle.warning;
    prompts_.push_back(std::move(record));

    schedule(now_ + config_.responder_latency,
             ReplyTimer{engagement::AgentReply{r.generation, r.purpose, reply.text, reply.fallback, warning}});
}

std::vector<std::string> Runtime::protected_names() const {
    std::vector<std::string> names;
    for (const auto& p : registry_.people()) {
        names.push_back(p.name);
        names.push_back(p.tag_id);
    }
    for (const auto& r : context_.active().social_relationships) names.push_back(r.who);
    return names;
}

void Runtime::end_of_episode(const engagement::EpisodeEnded& e) {
    memory::SummaryRequest request;
    request.transcript = episode_transcript_;
    request.addressee = e.identity ? e.identity->name : std::string(conversation::kPasserbyAddressee);
    if (episode_topic_) request.topic = episode_topic_->title;
    request.turn_count = e.turn_count;
    auto outcome = memory::summarize_episode(request, summarizer_);
    episode_topic_.reset();
    if (!outcome) return;

    memory::EpisodeSummary summary{e.episode_id, date_, outcome->text, outcome->warning};
    const std::string subject = journal::subject_for(e.identity);
    journal::JournalEntry entry;
    entry.timestamp = now_;
    entry.kind = journal::EntryKind::SummaryWritten;
    entry.subject = subject;
    entry.structured = {{"episode_id", e.episode_id}, {"warning", outcome->warning}};
    if (e.identity) {
        memory_.store_person(e.identity->tag_id, e.identity->name, summary, now_);
        entry.structured["person_key"] = e.identity->tag_id;
        entry.structured["text"] = summary.text;
        entry.rendered = "Saved a summary of the conversation with " + e.identity->name + ".";
    } else {
        const auto names = protected_names();
        memory_.merge_general(summary, names);
        entry.structured["text"] = memory_.general().recent.back();
        entry.rendered = "Added the conversation to the general passerby summary.";
    }
    if (outcome->warning) entry.structured["detail"] = outcome->detail;
    const auto text = entry.structured["text"].get<std::string>();
    entry.sequence_no = journal_.append(entry);
    emit({{"type", "journal"}, {"entry", journal::to_json(entry)}});
    emit({{"type", "summary"}, {"subject", subject}, {"text", text}});
    if (memory_path_) memory_.save(*memory_path_);
}

// ---------------------------------------------------------------------------
// Outbound

void Runtime::emit(const Json& message) {
    if (listener_) listener_(message);
}

Json Runtime::state_message() const {
    Json tracks = Json::array();
    for (const auto& [id, t] : tracker_.tracks()) {
        Json track{{"track_id", id},
                   {"x", t.last.position.x},
                   {"y", t.last.position.y},
                   {"distance", t.last.distance},
                   {"facing_offset", t.last.facing_offset},
                   {"facing", t.facing},
                   {"zone", proxemics::to_string(t.zone)}};
        if (auto who = fusion_.identity_of(id)) track["name"] = who->name;
        tracks.push_back(std::move(track));
    }
    return {{"type", "state"},
            {"mode", engagement::to_string(state_.mode)},
            {"engaged", state_.engaged_track ? Json(*state_.engaged_track) : Json()},
            {"engaged_name", journal::subject_for(state_.engaged_identity)},
            {"turn_count", state_.turn_count},
            {"stay_prompt_issued", state_.stay_prompt_issued},
            {"behavior_cue", engagement::to_string(state_.cue)},
            {"running", running_},
            {"tracks", tracks}};
}

void Runtime::emit_state_if_changed() {
    auto state = state_message();
    if (state == last_state_) return;
    last_state_ = state;
    emit(state);
}

Json Runtime::snapshot() const {
    Json s = state_message();
    s["snapshot"] = true;
    s["now"] = now_;
    Json entries = Json::array();
    for (const auto& e : journal_.window(50)) entries.push_back(journal::to_json(e));
    s["journal"] = entries;
    Json transcript = Json::array();
    for (const auto& u : transcript_) transcript.push_back(to_json(u));
    s["transcript"] = transcript;
    Json summaries = Json::array();
    for (const auto& [key, person] : memory_.people()) {
        for (const auto& sum : person.summaries) summaries.push_back({{"subject", person.name}, {"text", sum.text}});
    }
    if (!memory_.general().recent.empty())
        summaries.push_back({{"subject", std::string(journal::kPasserby)}, {"text", memory_.general().text()}});
    s["summaries"] = summaries;
    return s;
}

}  // namespace ditto::harness
