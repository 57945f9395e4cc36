#pragma once

#include "ditto/common.hpp"

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace ditto::proxemics {

// Planar coordinates in meters; the Ditto sits at the origin.
struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Vec2&) const = default;
};

double norm(Vec2 v);

// One timestamped sighting of a tracked body.
struct ProxemicObservation {
    TrackId track_id;
    Millis timestamp = 0;
    Vec2 position;
    double distance = 0.0;       // |position|
    double facing_offset = 0.0;  // degrees in [0, 180], 0 = looking straight at the Ditto
};

// Angle between a body's heading (world frame, degrees, counter-clockwise from +x)
// and the direction from the body toward the origin.
double facing_offset_deg(Vec2 position, double heading_deg);

// Builds an observation from raw pose, deriving distance and facing offset.
ProxemicObservation make_observation(TrackId track, Millis ts, Vec2 position, double heading_deg);

enum class Zone { Social, Public, Outside };

std::string_view to_string(Zone zone);
Zone zone_from_string(std::string_view text);

struct ZoneConfig {
    double social_max = 1.2;
    double public_max = 4.5;
    double facing_tolerance = 45.0;
    Millis dwell_to_engage = 2000;
    Millis track_timeout = 3000;

    // Throws ValidationError on inconsistent thresholds.
    void validate() const;
    bool operator==(const ZoneConfig&) const = default;
};

// Half-open bands: [0, social_max) social, [social_max, public_max) public, beyond outside.
Zone classify_zone(double distance, const ZoneConfig& config);

inline bool in_zone(Zone z) { return z != Zone::Outside; }

// ---------------------------------------------------------------------------
// Identity

struct PersonIdentity {
    TagId tag_id;
    std::string name;
    std::optional<std::string> context_key;  // Who key in the user context, if listed

    bool operator==(const PersonIdentity&) const = default;
};

struct TagSighting {
    TagId tag_id;
    Millis timestamp = 0;
    bool present = true;
};

class IdentityRegistry {
public:
    IdentityRegistry() = default;
    explicit IdentityRegistry(std::vector<PersonIdentity> people);

    void add(PersonIdentity person);
    const PersonIdentity* find(const TagId& tag) const;
    bool contains(const TagId& tag) const { return find(tag) != nullptr; }
    const std::vector<PersonIdentity>& people() const { return people_; }

private:
    std::vector<PersonIdentity> people_;
};

struct FusionConfig {
    Millis window = 1000;
    Vec2 receiver{};
    bool operator==(const FusionConfig&) const = default;
};

struct Association {
    TrackId track_id;
    TagId tag_id;
};

struct SightingResult {
    std::vector<Association> formed;
    std::vector<Association> released;
    std::optional<std::string> error;
};

// Associates identity tags with tracked bodies. A present tag binds to the nearest
// recently seen unbound track; the binding holds until the tag leaves or the track exits.
// Both directions of the map stay injective.
class IdentityFusion {
public:
    IdentityFusion(const IdentityRegistry& registry, FusionConfig config = {});

    // Records the observation and resolves any pending tags it makes eligible.
    std::vector<Association> observe(const ProxemicObservation& obs);

    // `track_hint` pins the sighting to a specific track, as the simulator knows who wears the tag.
    SightingResult sight(const TagSighting& sighting, const std::optional<TrackId>& track_hint = {});

    // Drops the track; a still-present tag goes back to pending.
    std::optional<Association> track_exited(const TrackId& track);

    std::optional<PersonIdentity> identity_of(const TrackId& track) const;
    std::optional<TrackId> track_of(const TagId& tag) const;
    const std::map<TrackId, TagId>& associations() const { return by_track_; }
    std::set<TagId> pending() const;

private:
    struct Pending {
        Millis since = 0;
        std::optional<TrackId> hint;
    };
    struct Seen {
        Millis timestamp = 0;
        double receiver_distance = 0.0;
    };

    std::optional<TrackId> pick_candidate(Millis now, const std::optional<TrackId>& hint) const;
    void bind(const TrackId& track, const TagId& tag);

    const IdentityRegistry* registry_;
    FusionConfig config_;
    std::map<TrackId, Seen> last_seen_;
    std::map<TrackId, TagId> by_track_;
    std::map<TagId, TrackId> by_tag_;
    std::map<TagId, Pending> pending_;
};

struct FusionOutcome {
    std::map<TrackId, PersonIdentity> associations;
    std::set<TagId> pending;
    std::vector<std::string> errors;
};

// Batch form of IdentityFusion over two recorded streams, merged by timestamp
// (observations before sightings at equal times).
FusionOutcome fuse_identity(std::span<const ProxemicObservation> observations,
                            std::span<const TagSighting> sightings,
                            const IdentityRegistry& registry,
                            Millis window,
                            Vec2 receiver = {});

// ---------------------------------------------------------------------------
// Presence

enum class PresenceKind { EnteredZone, MovedZone, LeftZone, FacingChanged };
enum class LeaveReason { ZoneExit, Timeout };

std::string_view to_string(PresenceKind kind);

struct PresenceEvent {
    PresenceKind kind = PresenceKind::EnteredZone;
    TrackId track_id;
    Millis timestamp = 0;
    Zone zone = Zone::Outside;
    Zone previous = Zone::Outside;
    double distance = 0.0;
    double facing_offset = 0.0;
    bool facing = false;
    LeaveReason reason = LeaveReason::ZoneExit;
};

struct TrackState {
    ProxemicObservation last;
    Zone zone = Zone::Outside;
    bool facing = false;
    // Start of the current social-zone-and-facing stretch, if one is running.
    std::optional<Millis> engage_since;
};

class PresenceTracker {
public:
    explicit PresenceTracker(ZoneConfig config = {});

    // Throws OrderingError when a track's timestamps do not strictly increase.
    std::vector<PresenceEvent> update(const ProxemicObservation& obs);

    // Emits left_zone for tracks silent for at least the timeout and forgets them.
    std::vector<PresenceEvent> expire(Millis now);

    std::optional<Millis> next_timeout() const;

    const std::map<TrackId, TrackState>& tracks() const { return tracks_; }
    const TrackState* find(const TrackId& track) const;

    // How long the track has been in the social zone facing the Ditto, as of its last sighting.
    Millis dwell(const TrackId& track) const;

    const ZoneConfig& config() const { return config_; }

private:
    ZoneConfig config_;
    std::map<TrackId, TrackState> tracks_;
};

}  // namespace ditto::proxemics
