#ifndef GRIDFLEX_TESTS_FIXTURES_HPP
#define GRIDFLEX_TESTS_FIXTURES_HPP

#include "gridflex/forecasting.hpp"
#include "gridflex/timeseries_store.hpp"

#include <cmath>
#include <map>
#include <random>

namespace fixture {

using namespace gridflex;

inline const Instant kStart = parse_instant("2024-02-05T00:00:00Z"); // a Monday

/// Daily-periodic load with deterministic noise, stored and mirrored in memory
/// so oracles can read values without going through the store.
struct Bench {
    Registry registry;
    std::string load, driver;
    TimeseriesStore store;
    std::map<std::string, std::map<Instant, double>> truth;

    Bench() : load(declare("L")), driver(declare("D")), store(registry, open_sqlite_storage(":memory:")) {}

    std::string declare(const std::string& entity)
    {
        const auto sig = registry.register_signal("active power", "MW");
        return registry.declare_timeseries(sig, registry.register_entity(entity, EntityKind::feeder));
    }

    void fill(int days, std::uint64_t seed = 1)
    {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, 0.2);
        std::vector<DataPoint> l, d;
        for (int i = 0; i < days * 96; ++i) {
            const auto t = kStart + kDefaultResolution * i;
            const double phase = 2.0 * M_PI * (i % 96) / 96.0;
            const double dv = 5.0 + 2.0 * std::cos(phase) + noise(rng);
            const double lv = 10.0 + 3.0 * std::sin(phase) + 0.4 * dv + noise(rng);
            l.push_back({t, lv});
            d.push_back({t, dv});
        }
        put(load, l);
        put(driver, d);
    }

    void put(const std::string& series, std::span<const DataPoint> pts)
    {
        store.ingest(series, pts);
        for (const auto& p : pts) truth[series][p.timestamp] = p.value;
    }

    ModelConfig config(const std::string& id, Algorithm a, nlohmann::json hyper = nlohmann::json::object()) const
    {
        ModelConfig c;
        c.id = id;
        c.target = load;
        c.algorithm = a;
        c.hyperparameters = std::move(hyper);
        if (a == Algorithm::ridge_autoregressive) c.feature_series = {driver};
        c.train_schedule = Recurrence{kStart + std::chrono::hours{2}, Minutes{1440}};
        c.score_schedule = Recurrence{kStart, Minutes{60}};
        return c;
    }
};

} // namespace fixture

#endif
