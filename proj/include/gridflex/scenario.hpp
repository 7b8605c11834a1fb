#ifndef GRIDFLEX_SCENARIO_HPP
#define GRIDFLEX_SCENARIO_HPP

#include "gridflex/time.hpp"
#include "gridflex/timeseries_store.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gridflex {

/// Scales the feeders under `entity` (a substation or a single feeder) by
/// (1 + magnitude) during [start, start + duration).
struct Injection {
    std::string entity;
    Instant start{};
    Minutes duration{120};
    double magnitude = 0.2;
};

struct ScenarioCounts {
    int substations = 1;
    int feeders = 2;
    int voltage_points = 3;
    int signals = 2;
    int entities = 6;
    int series = 6;
    int models = 6;
};

struct ScenarioSpec {
    std::string name = "custom";
    std::uint64_t seed = 1;
    int days = 28;
    Instant start = parse_instant("2024-01-01T00:00:00Z");
    ScenarioCounts counts;
    std::vector<Injection> injections;

    Instant history_end() const { return start + std::chrono::hours{24} * days; }

    /// Throws invalid_config for inconsistent counts or injections outside the history.
    void validate() const;
};

/// Germany, Switzerland and Cyprus installation sizes; throws invalid_parameter otherwise.
ScenarioSpec preset_spec(std::string_view preset);

/// An injection at the evening peak (17:00 for two hours) of the last history day.
Injection peak_injection(const ScenarioSpec& spec, const std::string& entity, double magnitude);

nlohmann::json to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);

/// Deterministic synthetic installation: the configuration it declares and
/// the value of every series at any 15-minute instant, before or after the
/// generated history.
class SyntheticGrid {
public:
    explicit SyntheticGrid(ScenarioSpec spec);

    const ScenarioSpec& spec() const noexcept { return spec_; }
    const nlohmann::json& config() const noexcept { return config_; }

    std::size_t series_count() const noexcept { return defs_.size(); }
    const std::string& series_id(std::size_t i) const { return ids_.at(i); }

    double value(std::size_t series, Instant t) const;

    /// Readings of every series at grid instants in [from, to).
    std::vector<ReadingRow> readings(Instant from, Instant to) const;

    enum class Role { substation, feeder, voltage, bus_voltage, generic };

    struct SeriesDef {
        std::string signal;
        std::string entity;
        Role role = Role::generic;
        double level = 0.0; // base load, nominal voltage or signal level
        double daily = 0.0;
        int peak_hour = 18;
        double noise = 0.0; // absolute sd
        double peak = 0.0;  // deterministic maximum of the driving load
        std::vector<std::size_t> inputs; // feeders of a substation, driving loads of a voltage
        std::string substation;          // for feeders
    };

private:
    double feeder_load(std::size_t def, Instant t) const;

    ScenarioSpec spec_;
    std::vector<SeriesDef> defs_;
    std::vector<std::string> ids_;
    nlohmann::json config_;
};

/// Writes config.json and history.csv into `dir` (created if needed).
void generate(const ScenarioSpec& spec, const std::filesystem::path& dir);

struct RunOptions {
    int hours = 24;
    unsigned workers = 8;
};

/// Replays the installation in `dir` on a simulated clock: loads history,
/// trains models, then each hour ingests synthetic readings, runs due jobs
/// and a DOMS run. Returns the report; wall time sits under "timing".
nlohmann::json run_scenario(const std::filesystem::path& dir, const RunOptions& options);

} // namespace gridflex

#endif // GRIDFLEX_SCENARIO_HPP
