#include "ditto/proxemics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace ditto {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Input: return "input_error";
        case ErrorCode::Ordering: return "ordering_error";
        case ErrorCode::State: return "state_error";
        case ErrorCode::Validation: return "validation_error";
        case ErrorCode::Config: return "config_error";
        case ErrorCode::Transport: return "transport_error";
        case ErrorCode::Schema: return "schema_error";
    }
    return "error";
}

}  // namespace ditto

namespace ditto::proxemics {

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

double facing_offset_deg(Vec2 position, double heading_deg) {
    if (position.x == 0.0 && position.y == 0.0) return 0.0;
    const double toward = std::atan2(-position.y, -position.x) * 180.0 / std::numbers::pi;
    double diff = std::fmod(heading_deg - toward, 360.0);
    if (diff < 0) diff += 360.0;
    if (diff > 180.0) diff = 360.0 - diff;
    return std::clamp(diff, 0.0, 180.0);
}

ProxemicObservation make_observation(TrackId track, Millis ts, Vec2 position, double heading_deg) {
    ProxemicObservation obs;
    obs.track_id = std::move(track);
    obs.timestamp = ts;
    obs.position = position;
    obs.distance = norm(position);
    obs.facing_offset = facing_offset_deg(position, heading_deg);
    return obs;
}

std::string_view to_string(Zone zone) {
    switch (zone) {
        case Zone::Social: return "social";
        case Zone::Public: return "public";
        case Zone::Outside: return "outside";
    }
    return "outside";
}

Zone zone_from_string(std::string_view text) {
    if (text == "social") return Zone::Social;
    if (text == "public") return Zone::Public;
    if (text == "outside") return Zone::Outside;
    throw InputError("unknown zone '" + std::string(text) + "'");
}

void ZoneConfig::validate() const {
    if (!(social_max > 0.0)) throw ValidationError("social_max must be positive");
    if (!(social_max < public_max)) throw ValidationError("social_max must be below public_max");
    if (!(facing_tolerance > 0.0 && facing_tolerance <= 180.0))
        throw ValidationError("facing_tolerance must be in (0, 180]");
    if (dwell_to_engage < 0) throw ValidationError("dwell_to_engage must be non-negative");
    if (track_timeout <= 0) throw ValidationError("track_timeout must be positive");
}

Zone classify_zone(double distance, const ZoneConfig& config) {
    if (!(distance >= 0.0)) throw InputError("distance must be non-negative");
    if (distance < config.social_max) return Zone::Social;
    if (distance < config.public_max) return Zone::Public;
    return Zone::Outside;
}

// ---------------------------------------------------------------------------

IdentityRegistry::IdentityRegistry(std::vector<PersonIdentity> people) {
    for (auto& p : people) add(std::move(p));
}

void IdentityRegistry::add(PersonIdentity person) {
    if (person.tag_id.empty()) throw ValidationError("tag_id required");
    if (person.name.empty()) throw ValidationError("name required for tag " + person.tag_id);
    if (find(person.tag_id)) throw ValidationError("duplicate tag_id " + person.tag_id);
    people_.push_back(std::move(person));
}

const PersonIdentity* IdentityRegistry::find(const TagId& tag) const {
    auto it = std::find_if(people_.begin(), people_.end(), [&](const auto& p) { return p.tag_id == tag; });
    return it == people_.end() ? nullptr : &*it;
}

IdentityFusion::IdentityFusion(const IdentityRegistry& registry, FusionConfig config)
    : registry_(&registry), config_(config) {}

std::optional<TrackId> IdentityFusion::pick_candidate(Millis now, const std::optional<TrackId>& hint) const {
    std::optional<TrackId> best;
    double best_distance = 0.0;
    for (const auto& [track, seen] : last_seen_) {
        if (by_track_.contains(track)) continue;
        if (hint && track != *hint) continue;
        if (std::llabs(now - seen.timestamp) > config_.window) continue;
        // map iteration is ordered by track id, so strict < keeps the lower id on ties
        if (!best || seen.receiver_distance < best_distance) {
            best = track;
            best_distance = seen.receiver_distance;
        }
    }
    return best;
}

void IdentityFusion::bind(const TrackId& track, const TagId& tag) {
    by_track_[track] = tag;
    by_tag_[tag] = track;
    pending_.erase(tag);
}

std::vector<Association> IdentityFusion::observe(const ProxemicObservation& obs) {
    const Vec2 rel{obs.position.x - config_.receiver.x, obs.position.y - config_.receiver.y};
    last_seen_[obs.track_id] = Seen{obs.timestamp, norm(rel)};

    std::vector<Association> formed;
    if (by_track_.contains(obs.track_id) || pending_.empty()) return formed;

    // Oldest pending sighting first, tag id breaking ties.
    std::vector<std::pair<Millis, TagId>> order;
    for (const auto& [tag, p] : pending_) order.emplace_back(p.since, tag);
    std::sort(order.begin(), order.end());
    for (const auto& [since, tag] : order) {
        const auto hint = pending_.at(tag).hint;
        if (auto track = pick_candidate(obs.timestamp, hint)) {
            bind(*track, tag);
            formed.push_back({*track, tag});
        }
    }
    return formed;
}

SightingResult IdentityFusion::sight(const TagSighting& sighting, const std::optional<TrackId>& track_hint) {
    SightingResult result;
    if (!registry_->contains(sighting.tag_id)) {
        result.error = "unregistered tag '" + sighting.tag_id + "'";
        return result;
    }
    const auto& tag = sighting.tag_id;
    if (!sighting.present) {
        pending_.erase(tag);
        if (auto it = by_tag_.find(tag); it != by_tag_.end()) {
            result.released.push_back({it->second, tag});
            by_track_.erase(it->second);
            by_tag_.erase(it);
        }
        return result;
    }
    if (by_tag_.contains(tag)) return result;  // already bound; repeated presence is a no-op

    if (auto track = pick_candidate(sighting.timestamp, track_hint)) {
        bind(*track, tag);
        result.formed.push_back({*track, tag});
    } else {
        auto [it, inserted] = pending_.try_emplace(tag, Pending{sighting.timestamp, track_hint});
        if (!inserted) it->second.hint = track_hint;
    }
    return result;
}

std::optional<Association> IdentityFusion::track_exited(const TrackId& track) {
    last_seen_.erase(track);
    auto it = by_track_.find(track);
    if (it == by_track_.end()) return std::nullopt;
    Association released{track, it->second};
    by_tag_.erase(it->second);
    // the tag is still in range; keep looking for its wearer (same track id preferred if it reappears)
    pending_[it->second] = Pending{0, std::nullopt};
    by_track_.erase(it);
    return released;
}

std::optional<PersonIdentity> IdentityFusion::identity_of(const TrackId& track) const {
    auto it = by_track_.find(track);
    if (it == by_track_.end()) return std::nullopt;
    if (const auto* p = registry_->find(it->second)) return *p;
    return std::nullopt;
}

std::optional<TrackId> IdentityFusion::track_of(const TagId& tag) const {
    auto it = by_tag_.find(tag);
    if (it == by_tag_.end()) return std::nullopt;
    return it->second;
}

std::set<TagId> IdentityFusion::pending() const {
    std::set<TagId> out;
    for (const auto& [tag, p] : pending_) out.insert(tag);
    return out;
}

FusionOutcome fuse_identity(std::span<const ProxemicObservation> observations,
                            std::span<const TagSighting> sightings,
                            const IdentityRegistry& registry,
                            Millis window,
                            Vec2 receiver) {
    IdentityFusion fusion(registry, FusionConfig{window, receiver});
    FusionOutcome out;

    std::size_t i = 0, j = 0;
    while (i < observations.size() || j < sightings.size()) {
        const bool take_obs = j >= sightings.size() ||
                              (i < observations.size() && observations[i].timestamp <= sightings[j].timestamp);
        if (take_obs) {
            fusion.observe(observations[i++]);
        } else {
            auto r = fusion.sight(sightings[j++]);
            if (r.error) out.errors.push_back(*r.error);
        }
    }
    for (const auto& [track, tag] : fusion.associations()) out.associations.emplace(track, *registry.find(tag));
    out.pending = fusion.pending();
    return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(PresenceKind kind) {
    switch (kind) {
        case PresenceKind::EnteredZone: return "entered_zone";
        case PresenceKind::MovedZone: return "moved_zone";
        case PresenceKind::LeftZone: return "left_zone";
        case PresenceKind::FacingChanged: return "facing_changed";
    }
    return "unknown";
}

PresenceTracker::PresenceTracker(ZoneConfig config) : config_(config) { config_.validate(); }

const TrackState* PresenceTracker::find(const TrackId& track) const {
    auto it = tracks_.find(track);
    return it == tracks_.end() ? nullptr : &it->second;
}

std::vector<PresenceEvent> PresenceTracker::update(const ProxemicObservation& obs) {
    const Zone zone = classify_zone(obs.distance, config_);
    const bool facing = obs.facing_offset <= config_.facing_tolerance;

    auto make = [&](PresenceKind kind, Zone previous) {
        PresenceEvent ev;
        ev.kind = kind;
        ev.track_id = obs.track_id;
        ev.timestamp = obs.timestamp;
        ev.zone = zone;
        ev.previous = previous;
        ev.distance = obs.distance;
        ev.facing_offset = obs.facing_offset;
        ev.facing = facing;
        return ev;
    };

    std::vector<PresenceEvent> events;
    auto it = tracks_.find(obs.track_id);
    if (it == tracks_.end()) {
        TrackState st;
        st.last = obs;
        st.zone = zone;
        st.facing = facing;
        if (zone == Zone::Social && facing) st.engage_since = obs.timestamp;
        tracks_.emplace(obs.track_id, st);
        if (in_zone(zone)) events.push_back(make(PresenceKind::EnteredZone, Zone::Outside));
        return events;
    }

    TrackState& st = it->second;
    if (obs.timestamp <= st.last.timestamp) {
        throw OrderingError("observation for track " + obs.track_id + " at " + std::to_string(obs.timestamp) +
                            " does not follow " + std::to_string(st.last.timestamp));
    }

    const Zone previous = st.zone;
    if (!in_zone(previous) && in_zone(zone)) {
        events.push_back(make(PresenceKind::EnteredZone, previous));
    } else if (in_zone(previous) && !in_zone(zone)) {
        events.push_back(make(PresenceKind::LeftZone, previous));
    } else if (in_zone(zone) && previous != zone) {
        events.push_back(make(PresenceKind::MovedZone, previous));
    } else if (in_zone(zone) && facing != st.facing) {
        events.push_back(make(PresenceKind::FacingChanged, previous));
    }

    const bool engaging = zone == Zone::Social && facing;
    if (!engaging) {
        st.engage_since.reset();
    } else if (!st.engage_since) {
        st.engage_since = obs.timestamp;
    }
    st.last = obs;
    st.zone = zone;
    st.facing = facing;
    return events;
}

std::vector<PresenceEvent> PresenceTracker::expire(Millis now) {
    std::vector<PresenceEvent> events;
    for (auto it = tracks_.begin(); it != tracks_.end();) {
        const TrackState& st = it->second;
        if (now - st.last.timestamp < config_.track_timeout) {
            ++it;
            continue;
        }
        if (in_zone(st.zone)) {
            PresenceEvent ev;
            ev.kind = PresenceKind::LeftZone;
            ev.track_id = it->first;
            ev.timestamp = now;
            ev.zone = Zone::Outside;
            ev.previous = st.zone;
            ev.distance = st.last.distance;
            ev.facing_offset = st.last.facing_offset;
            ev.facing = st.facing;
            ev.reason = LeaveReason::Timeout;
            events.push_back(ev);
        }
        it = tracks_.erase(it);
    }
    return events;
}

std::optional<Millis> PresenceTracker::next_timeout() const {
    std::optional<Millis> next;
    for (const auto& [id, st] : tracks_) {
        const Millis due = st.last.timestamp + config_.track_timeout;
        if (!next || due < *next) next = due;
    }
    return next;
}

Millis PresenceTracker::dwell(const TrackId& track) const {
    const auto* st = find(track);
    if (!st || !st->engage_since) return 0;
    return st->last.timestamp - *st->engage_since;
}

}  // namespace ditto::proxemics
