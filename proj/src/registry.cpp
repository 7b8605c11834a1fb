#include "gridflex/registry.hpp"

#include "gridflex/error.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <tuple>

namespace gridflex {

namespace {

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::uint64_t fnv1a(const std::string& text)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string token(const char* prefix, const std::string& key)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%s-%016llx", prefix, static_cast<unsigned long long>(fnv1a(key)));
    return buf;
}

} // namespace

std::string to_string(EntityKind kind)
{
    switch (kind) {
    case EntityKind::substation: return "substation";
    case EntityKind::feeder: return "feeder";
    case EntityKind::voltage_point: return "voltage_point";
    case EntityKind::plant: return "plant";
    case EntityKind::meter: return "meter";
    case EntityKind::other: return "other";
    }
    return "other";
}

EntityKind parse_entity_kind(const std::string& text)
{
    for (auto k : {EntityKind::substation, EntityKind::feeder, EntityKind::voltage_point, EntityKind::plant,
                   EntityKind::meter, EntityKind::other})
        if (to_string(k) == text) return k;
    throw Error(ErrorCode::invalid_parameter, "unknown entity kind", {text});
}

std::string Registry::register_signal(const std::string& name, const std::string& unit)
{
    if (name.empty()) throw Error(ErrorCode::invalid_parameter, "signal name is empty");
    const auto id = token("sig", lower(name));
    std::unique_lock lock(mutex_);
    auto it = signals_.find(id);
    if (it != signals_.end()) {
        if (lower(it->second.name) != lower(name))
            throw Error(ErrorCode::invalid_parameter, "signal identifier collision", {name, it->second.name});
        return id;
    }
    signals_.emplace(id, Signal{id, name, unit});
    return id;
}

std::string Registry::register_entity(const std::string& name, EntityKind kind,
                                      const std::optional<std::string>& parent)
{
    if (name.empty()) throw Error(ErrorCode::invalid_parameter, "entity name is empty");
    const auto id = token("ent", lower(name));
    std::unique_lock lock(mutex_);
    auto it = entities_.find(id);
    if (it != entities_.end()) {
        if (lower(it->second.name) != lower(name))
            throw Error(ErrorCode::invalid_parameter, "entity identifier collision", {name, it->second.name});
        return id;
    }
    if (parent) {
        if (*parent == id) throw Error(ErrorCode::parent_cycle, "entity cannot be its own parent", {name});
        // walk the ancestor chain; it terminates because parents pre-exist
        for (auto p = std::optional<std::string>(*parent); p;) {
            auto pit = entities_.find(*p);
            if (pit == entities_.end()) throw Error(ErrorCode::unknown_entity, "parent entity not registered", {*p});
            if (pit->first == id) throw Error(ErrorCode::parent_cycle, "entity parent chain forms a cycle", {name});
            p = pit->second.parent;
        }
    }
    entities_.emplace(id, Entity{id, name, kind, parent});
    return id;
}

std::string Registry::declare_timeseries(const std::string& signal_id, const std::string& entity_id,
                                         Minutes resolution)
{
    if (resolution.count() <= 0) throw Error(ErrorCode::invalid_parameter, "resolution must be positive");
    std::unique_lock lock(mutex_);
    if (!signals_.count(signal_id)) throw Error(ErrorCode::unknown_signal, "signal not registered", {signal_id});
    if (!entities_.count(entity_id)) throw Error(ErrorCode::unknown_entity, "entity not registered", {entity_id});
    const auto key = std::make_pair(signal_id, entity_id);
    if (auto it = series_by_pair_.find(key); it != series_by_pair_.end()) return it->second;
    const auto id = token("ts", signal_id + "|" + entity_id);
    series_.emplace(id, TimeSeries{id, signal_id, entity_id, resolution});
    series_by_pair_.emplace(key, id);
    return id;
}

std::vector<SeriesContext> Registry::search_context(const ContextFilter& filter) const
{
    std::shared_lock lock(mutex_);
    const auto fragment = filter.signal_fragment ? lower(*filter.signal_fragment) : std::string();
    std::vector<SeriesContext> out;
    for (const auto& [id, ts] : series_) {
        const auto& sig = signals_.at(ts.signal);
        const auto& ent = entities_.at(ts.entity);
        if (filter.signal_fragment && lower(sig.name).find(fragment) == std::string::npos) continue;
        if (filter.kind && ent.kind != *filter.kind) continue;
        if (filter.parent && ent.parent != filter.parent) continue;
        out.push_back(SeriesContext{ts, sig, ent});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.entity.name, a.signal.name) < std::tie(b.entity.name, b.signal.name);
    });
    return out;
}

std::optional<Signal> Registry::signal(const std::string& id) const
{
    std::shared_lock lock(mutex_);
    auto it = signals_.find(id);
    if (it == signals_.end()) return std::nullopt;
    return it->second;
}

std::optional<Entity> Registry::entity(const std::string& id) const
{
    std::shared_lock lock(mutex_);
    auto it = entities_.find(id);
    if (it == entities_.end()) return std::nullopt;
    return it->second;
}

std::optional<TimeSeries> Registry::series(const std::string& id) const
{
    std::shared_lock lock(mutex_);
    auto it = series_.find(id);
    if (it == series_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::string> Registry::signal_by_name(const std::string& name) const
{
    const auto id = token("sig", lower(name));
    std::shared_lock lock(mutex_);
    if (!signals_.count(id)) return std::nullopt;
    return id;
}

std::optional<std::string> Registry::entity_by_name(const std::string& name) const
{
    const auto id = token("ent", lower(name));
    std::shared_lock lock(mutex_);
    if (!entities_.count(id)) return std::nullopt;
    return id;
}

std::optional<std::string> Registry::series_for(const std::string& signal_id, const std::string& entity_id) const
{
    std::shared_lock lock(mutex_);
    auto it = series_by_pair_.find({signal_id, entity_id});
    if (it == series_by_pair_.end()) return std::nullopt;
    return it->second;
}

std::vector<Signal> Registry::signals() const
{
    std::shared_lock lock(mutex_);
    std::vector<Signal> out;
    for (const auto& [id, s] : signals_) out.push_back(s);
    return out;
}

std::vector<Entity> Registry::entities() const
{
    std::shared_lock lock(mutex_);
    std::vector<Entity> out;
    for (const auto& [id, e] : entities_) out.push_back(e);
    return out;
}

std::vector<TimeSeries> Registry::all_series() const
{
    std::shared_lock lock(mutex_);
    std::vector<TimeSeries> out;
    for (const auto& [id, s] : series_) out.push_back(s);
    return out;
}

std::size_t Registry::signal_count() const
{
    std::shared_lock lock(mutex_);
    return signals_.size();
}

std::size_t Registry::entity_count() const
{
    std::shared_lock lock(mutex_);
    return entities_.size();
}

std::size_t Registry::series_count() const
{
    std::shared_lock lock(mutex_);
    return series_.size();
}

} // namespace gridflex
