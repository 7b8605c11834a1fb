#ifndef GRIDFLEX_REGISTRY_HPP
#define GRIDFLEX_REGISTRY_HPP

#include "gridflex/time.hpp"

#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace gridflex {

enum class EntityKind { substation, feeder, voltage_point, plant, meter, other };

std::string to_string(EntityKind kind);
EntityKind parse_entity_kind(const std::string& text);

struct Signal {
    std::string id;
    std::string name;
    std::string unit;
};

struct Entity {
    std::string id;
    std::string name;
    EntityKind kind = EntityKind::other;
    std::optional<std::string> parent; // entity id
};

struct TimeSeries {
    std::string id;
    std::string signal; // signal id
    std::string entity; // entity id
    Minutes resolution = kDefaultResolution;
};

/// A series listing row joined with its signal and entity.
struct SeriesContext {
    TimeSeries series;
    Signal signal;
    Entity entity;
};

struct ContextFilter {
    std::optional<std::string> signal_fragment; // case-insensitive substring of the signal name
    std::optional<EntityKind> kind;
    std::optional<std::string> parent; // entity id
};

/// Signals (what is measured), entities (where) and their time series.
///
/// Identifiers are derived from the registration keys, so registry contents
/// depend only on the set of registration calls, never on their order.
/// Registration is idempotent: repeating a key returns the existing id.
class Registry {
public:
    std::string register_signal(const std::string& name, const std::string& unit);
    std::string register_entity(const std::string& name, EntityKind kind,
                                const std::optional<std::string>& parent = std::nullopt);
    std::string declare_timeseries(const std::string& signal_id, const std::string& entity_id,
                                   Minutes resolution = kDefaultResolution);

    std::vector<SeriesContext> search_context(const ContextFilter& filter = {}) const;

    std::optional<Signal> signal(const std::string& id) const;
    std::optional<Entity> entity(const std::string& id) const;
    std::optional<TimeSeries> series(const std::string& id) const;

    std::optional<std::string> signal_by_name(const std::string& name) const;
    std::optional<std::string> entity_by_name(const std::string& name) const;
    std::optional<std::string> series_for(const std::string& signal_id, const std::string& entity_id) const;

    std::vector<Signal> signals() const;
    std::vector<Entity> entities() const;
    std::vector<TimeSeries> all_series() const;

    std::size_t signal_count() const;
    std::size_t entity_count() const;
    std::size_t series_count() const;

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, Signal> signals_;
    std::map<std::string, Entity> entities_;
    std::map<std::string, TimeSeries> series_;
    std::map<std::pair<std::string, std::string>, std::string> series_by_pair_;
};

} // namespace gridflex

#endif // GRIDFLEX_REGISTRY_HPP
