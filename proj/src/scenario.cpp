#include "gridflex/scenario.hpp"

#include "gridflex/doms.hpp"
#include "gridflex/forecasting.hpp"
#include "gridflex/installation.hpp"
#include "gridflex/scheduler.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

namespace gridflex {

using nlohmann::json;

namespace {

struct SignalProfile {
    const char* name;
    const char* unit;
    double level;
    double daily; // relative amplitude
    int peak_hour;
    double noise; // relative sd
};

// The first two are the grid signals; the rest are synthetic fillers.
constexpr std::array<SignalProfile, 19> kSignals{{
    {"active power", "MW", 0, 0, 18, 0},
    {"voltage", "V", 0, 0, 18, 0},
    {"reactive power", "Mvar", 1.0, 0.2, 18, 0.02},
    {"current", "A", 150.0, 0.25, 18, 0.02},
    {"apparent power", "MVA", 3.0, 0.25, 18, 0.02},
    {"energy", "MWh", 0.8, 0.25, 18, 0.02},
    {"power factor", "1", 0.95, 0.02, 12, 0.005},
    {"frequency", "Hz", 50.0, 0.0005, 12, 0.0002},
    {"wind generation", "MW", 5.0, 0.15, 3, 0.05},
    {"solar generation", "MW", 2.0, 0.9, 13, 0.03},
    {"irradiance", "W/m2", 400.0, 0.9, 13, 0.03},
    {"ambient temperature", "degC", 18.0, 0.3, 15, 0.02},
    {"wind speed", "m/s", 7.0, 0.2, 3, 0.05},
    {"transformer temperature", "degC", 55.0, 0.1, 19, 0.01},
    {"tap position", "1", 5.0, 0.05, 18, 0.01},
    {"battery state of charge", "%", 50.0, 0.4, 20, 0.02},
    {"heat pump load", "MW", 0.5, 0.3, 7, 0.03},
    {"ev charging load", "MW", 0.3, 0.6, 20, 0.04},
    {"humidity", "%", 60.0, 0.2, 5, 0.02},
}};

constexpr double kFeederDaily = 0.25;
constexpr double kFeederWeekly = 0.03;
constexpr double kFeederNoise = 0.01;
constexpr double kSubstationNoise = 0.002;
constexpr double kRangeHeadroom = 1.1;
constexpr double kVoltageNoise = 0.3;
constexpr double kVoltageLow = 216.0;
constexpr double kVoltageHigh = 253.0;

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

// Counter-based draws: the same (seed, stream, counter) always gives the same value.
double uniform(std::uint64_t seed, std::uint64_t stream, std::int64_t counter)
{
    return unit_uniform(splitmix64(seed ^ splitmix64(stream * 0x632BE59BD9B4E019ull ^ static_cast<std::uint64_t>(counter))));
}

double normal(std::uint64_t seed, std::uint64_t stream, std::int64_t counter)
{
    const auto a = splitmix64(seed ^ splitmix64(stream * 0x632BE59BD9B4E019ull ^ static_cast<std::uint64_t>(counter)));
    const auto b = splitmix64(a);
    const double u1 = std::max(unit_uniform(a), 0x1.0p-53);
    const double u2 = unit_uniform(b);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return std::clamp(z, -3.0, 3.0);
}

std::int64_t step_index(Instant t) { return t.time_since_epoch().count() / 900; }

double hour_fraction(Instant t) { return static_cast<double>(t.time_since_epoch().count() % 86400) / 3600.0; }

double daily_shape(Instant t, int peak_hour)
{
    return std::cos(2.0 * std::numbers::pi * (hour_fraction(t) - peak_hour) / 24.0);
}

double weekly_shape(Instant t)
{
    const double days = static_cast<double>(t.time_since_epoch().count()) / 86400.0;
    return std::cos(2.0 * std::numbers::pi * days / 7.0);
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::string two_digits(int i)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d", i);
    return buf;
}

std::string slug(const std::string& s)
{
    std::string out;
    for (char c : s) out.push_back(c == ' ' ? '_' : c);
    return out;
}

} // namespace

void ScenarioSpec::validate() const
{
    const auto& c = counts;
    auto bad = [](const std::string& m) { throw Error(ErrorCode::invalid_config, m); };
    if (c.substations <= 0 || c.feeders <= 0 || c.voltage_points <= 0 || c.signals <= 0 || c.entities <= 0 ||
        c.series <= 0 || c.models <= 0)
        bad("scenario counts must be positive");
    if (days <= 0) bad("scenario needs at least one day of history");
    if (c.feeders < c.substations) bad("every substation needs at least one feeder");
    if (c.signals < 2 || c.signals > static_cast<int>(kSignals.size()))
        bad("signal count must lie in [2, " + std::to_string(kSignals.size()) + "]");
    const int grid = c.substations + c.feeders + c.voltage_points;
    if (c.entities < grid) bad("entity count is below the number of grid nodes");
    if (c.series < grid) bad("series count is below the number of grid series");
    const long extra_capacity = static_cast<long>(c.entities) * (c.signals - 2);
    if (c.series - grid > extra_capacity) bad("series count exceeds the available signal/entity pairs");
    if (c.models < grid) bad("every grid series needs a model, so models must cover the grid");
    if (c.models > c.series) bad("more models than series");
    for (const auto& inj : injections) {
        if (inj.start < start || inj.start + inj.duration > history_end())
            bad("injection lies outside the history: " + inj.entity);
        if (!std::isfinite(inj.magnitude) || inj.magnitude <= -1.0) bad("injection magnitude must exceed -1");
    }
}

ScenarioSpec preset_spec(std::string_view preset)
{
    ScenarioSpec s;
    s.name = std::string(preset);
    // series, entities, signals, models as in the demonstration table; the
    // substation/feeder/voltage split is only known for Cyprus.
    if (preset == "germany")
        s.counts = {1, 2, 3, 13, 11, 18, 11};
    else if (preset == "switzerland")
        s.counts = {4, 12, 16, 11, 48, 196, 61};
    else if (preset == "cyprus")
        s.counts = {15, 29, 41, 19, 179, 531, 174};
    else
        throw Error(ErrorCode::invalid_parameter, "unknown preset", {std::string(preset)});
    return s;
}

Injection peak_injection(const ScenarioSpec& spec, const std::string& entity, double magnitude)
{
    return Injection{entity, spec.history_end() - std::chrono::hours{7}, Minutes{120}, magnitude};
}

json to_json(const ScenarioSpec& spec)
{
    json injections = json::array();
    for (const auto& i : spec.injections)
        injections.push_back({{"entity", i.entity},
                              {"start", format_instant(i.start)},
                              {"duration_minutes", i.duration.count()},
                              {"magnitude", i.magnitude}});
    const auto& c = spec.counts;
    return json{{"name", spec.name},
                {"seed", spec.seed},
                {"days", spec.days},
                {"start", format_instant(spec.start)},
                {"counts",
                 {{"substations", c.substations},
                  {"feeders", c.feeders},
                  {"voltage_points", c.voltage_points},
                  {"signals", c.signals},
                  {"entities", c.entities},
                  {"series", c.series},
                  {"models", c.models}}},
                {"injections", injections}};
}

ScenarioSpec scenario_from_json(const json& j)
{
    try {
        ScenarioSpec s;
        s.name = j.at("name").get<std::string>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.days = j.at("days").get<int>();
        s.start = parse_instant(j.at("start").get<std::string>());
        const auto& c = j.at("counts");
        s.counts = {c.at("substations").get<int>(), c.at("feeders").get<int>(), c.at("voltage_points").get<int>(),
                    c.at("signals").get<int>(),     c.at("entities").get<int>(), c.at("series").get<int>(),
                    c.at("models").get<int>()};
        for (const auto& i : j.at("injections"))
            s.injections.push_back(Injection{i.at("entity").get<std::string>(), parse_instant(i.at("start").get<std::string>()),
                                             Minutes{i.at("duration_minutes").get<long>()}, i.at("magnitude").get<double>()});
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_config, std::string("malformed scenario block: ") + e.what());
    }
}

using Role = SyntheticGrid::Role;
using SeriesDef = SyntheticGrid::SeriesDef;

namespace {

SeriesDef make_def(std::string signal, std::string entity, Role role)
{
    SeriesDef d;
    d.signal = std::move(signal);
    d.entity = std::move(entity);
    d.role = role;
    return d;
}

} // namespace

SyntheticGrid::SyntheticGrid(ScenarioSpec spec) : spec_(std::move(spec))
{
    spec_.validate();
    const auto& c = spec_.counts;
    const auto seed = spec_.seed;
    auto u = [seed](std::size_t stream) { return uniform(seed, stream, -1); };

    std::vector<std::string> subs, feeders, vps;
    std::vector<std::string> feeder_parent;
    json entities = json::array();
    for (int s = 0; s < c.substations; ++s) {
        subs.push_back("SUB-" + two_digits(s + 1));
        entities.push_back({{"name", subs.back()}, {"kind", "substation"}, {"parent", nullptr}});
    }
    for (int s = 0, f = 0; s < c.substations; ++s) {
        const int here = c.feeders / c.substations + (s < c.feeders % c.substations ? 1 : 0);
        for (int k = 0; k < here; ++k, ++f) {
            feeders.push_back("FDR-" + two_digits(s + 1) + "-" + std::string(1, static_cast<char>('A' + k)));
            feeder_parent.push_back(subs[static_cast<std::size_t>(s)]);
            entities.push_back({{"name", feeders.back()}, {"kind", "feeder"}, {"parent", feeder_parent.back()}});
        }
    }
    // voltage point 1 sits on the main bus; the others go to feeders, then substations
    std::vector<std::string> vp_attach;
    for (int v = 0; v < c.voltage_points; ++v) {
        vps.push_back("VP-" + two_digits(v + 1));
        std::string at;
        if (v == 0) at = subs[0];
        else if (v - 1 < c.feeders) at = feeders[static_cast<std::size_t>(v - 1)];
        else at = subs[static_cast<std::size_t>((v - 1 - c.feeders) % c.substations)];
        vp_attach.push_back(at);
        entities.push_back({{"name", vps.back()}, {"kind", "voltage_point"}, {"parent", at}});
    }
    std::vector<std::string> all_entities;
    for (const auto& e : entities) all_entities.push_back(e.at("name").get<std::string>());
    const int extras = c.entities - static_cast<int>(all_entities.size());
    for (int k = 0; k < extras; ++k) {
        std::string name, kind, parent;
        if (k % 2 == 0) {
            name = "PLANT-" + two_digits(k / 2 + 1);
            kind = "plant";
            parent = subs[static_cast<std::size_t>((k / 2) % c.substations)];
        } else {
            name = "MTR-" + two_digits(k / 2 + 1);
            kind = "meter";
            parent = feeders[static_cast<std::size_t>((k / 2) % c.feeders)];
        }
        all_entities.push_back(name);
        entities.push_back({{"name", name}, {"kind", kind}, {"parent", parent}});
    }

    json signals = json::array();
    for (int s = 0; s < c.signals; ++s)
        signals.push_back({{"name", kSignals[static_cast<std::size_t>(s)].name},
                           {"unit", kSignals[static_cast<std::size_t>(s)].unit},
                           {"synthetic", s >= 2}});

    // grid series: substations, feeders, voltage points
    std::map<std::string, std::size_t> load_def;
    for (const auto& s : subs) {
        load_def[s] = defs_.size();
        defs_.push_back(make_def("active power", s, Role::substation));
    }
    for (std::size_t f = 0; f < feeders.size(); ++f) {
        auto d = make_def("active power", feeders[f], Role::feeder);
        d.level = 2.0 + 4.0 * u(defs_.size());
        d.daily = kFeederDaily;
        d.noise = kFeederNoise * d.level;
        d.peak = d.level * (1.0 + kFeederDaily + kFeederWeekly);
        d.substation = feeder_parent[f];
        load_def[feeders[f]] = defs_.size();
        auto& sub = defs_[load_def.at(d.substation)];
        sub.inputs.push_back(defs_.size());
        sub.level += d.level;
        sub.peak += d.peak;
        defs_.push_back(std::move(d));
    }
    for (std::size_t s = 0; s < subs.size(); ++s) defs_[s].noise = kSubstationNoise * defs_[s].level;
    for (std::size_t v = 0; v < vps.size(); ++v) {
        auto d = make_def("voltage", vps[v], v == 0 ? Role::bus_voltage : Role::voltage);
        d.level = (v == 0 ? 232.0 : 229.0) + 2.0 * u(defs_.size());
        d.noise = kVoltageNoise;
        if (v == 0) {
            for (std::size_t s = 0; s < subs.size(); ++s) {
                d.inputs.push_back(s);
                d.peak += defs_[s].peak;
            }
            d.daily = 8.0; // volts of drop at the aggregate peak
        } else {
            const auto in = load_def.at(vp_attach[v]);
            d.inputs.push_back(in);
            d.peak = defs_[in].peak;
            d.daily = 4.0 + 2.0 * u(defs_.size() + 7919);
        }
        defs_.push_back(std::move(d));
    }

    // filler series: rotate through the synthetic signals entity by entity
    const int extra_signals = c.signals - 2;
    const int filler = c.series - static_cast<int>(defs_.size());
    for (int k = 0; k < filler; ++k) {
        const int round = k / c.entities;
        const int i = k % c.entities;
        const auto& prof = kSignals[static_cast<std::size_t>(2 + (i + round) % extra_signals)];
        auto d = make_def(prof.name, all_entities[static_cast<std::size_t>(i)], Role::generic);
        d.level = prof.level * (0.5 + u(defs_.size()));
        d.daily = prof.daily;
        d.peak_hour = prof.peak_hour;
        d.noise = prof.noise * d.level;
        defs_.push_back(std::move(d));
    }

    json series = json::array();
    for (const auto& d : defs_) series.push_back({{"signal", d.signal}, {"entity", d.entity}, {"resolution_minutes", 15}});

    auto ref = [](const SeriesDef& d) { return json{{"signal", d.signal}, {"entity", d.entity}}; };
    const json train{{"anchor", format_instant(spec_.start + std::chrono::hours{2})}, {"interval_minutes", 1440}};
    const json score{{"anchor", format_instant(spec_.start)}, {"interval_minutes", 60}};
    json models = json::array();
    for (int m = 0; m < c.models; ++m) {
        const auto& d = defs_[static_cast<std::size_t>(m)];
        json model{{"id", "m-" + d.entity + "-" + slug(d.signal)},
                   {"target", ref(d)},
                   {"train", train},
                   {"score", score},
                   {"horizon", kHorizonSteps},
                   {"resolution_minutes", 15}};
        json features = json::array();
        switch (d.role) {
        case Role::substation:
        case Role::feeder:
            model["algorithm"] = "seasonal_naive";
            break;
        case Role::voltage:
        case Role::bus_voltage:
            model["algorithm"] = "ridge_autoregressive";
            model["hyperparameters"] = {{"ridge", 1.0}};
            features.push_back(ref(defs_[d.inputs.front()]));
            break;
        case Role::generic: {
            static constexpr const char* kCycle[] = {"persistence", "seasonal_naive", "ridge_autoregressive"};
            model["algorithm"] = kCycle[m % 3];
            if (m % 3 == 2) model["hyperparameters"] = {{"ridge", 1.0}};
            break;
        }
        }
        model["feature_series"] = features;
        models.push_back(std::move(model));
    }

    json ranges = json::array();
    for (std::size_t s = 0; s < subs.size(); ++s)
        ranges.push_back({{"entity", subs[s]}, {"low", 0.0}, {"high", round6(kRangeHeadroom * defs_[s].peak)}});
    for (const auto& v : vps) ranges.push_back({{"entity", v}, {"low", kVoltageLow}, {"high", kVoltageHigh}});

    json relational = json::array();
    for (const auto& s : subs) {
        json parents = json::array();
        for (auto f : defs_[load_def.at(s)].inputs) parents.push_back(defs_[f].entity);
        relational.push_back({{"child", s}, {"parents", parents}, {"kind", "linear"}, {"ridge", 0.0}});
    }
    // the interaction model: main-bus voltage against every substation load
    relational.push_back({{"child", vps[0]}, {"parents", subs}, {"kind", "linear"}, {"ridge", 0.0}});

    json feeder_nodes = json::array();
    for (std::size_t f = 0; f < feeders.size(); ++f)
        feeder_nodes.push_back({{"entity", feeders[f]}, {"substation", feeder_parent[f]}});
    json vp_nodes = json::array();
    for (std::size_t v = 0; v < vps.size(); ++v) vp_nodes.push_back({{"entity", vps[v]}, {"attached_to", vp_attach[v]}});

    config_ = json{{"schema", kConfigSchema},
                   {"installation", spec_.name},
                   {"signals", signals},
                   {"entities", entities},
                   {"series", series},
                   {"grid",
                    {{"load_signal", "active power"},
                     {"voltage_signal", "voltage"},
                     {"substations", subs},
                     {"feeders", feeder_nodes},
                     {"voltage_points", vp_nodes},
                     {"ranges", ranges},
                     {"controllable", feeders},
                     {"relational_models", relational},
                     {"options", json::object()}}},
                   {"models", models},
                   {"scenario", to_json(spec_)}};

    const auto installation = parse_installation(config_);
    const auto& reg = *installation.registry;
    for (const auto& d : defs_)
        ids_.push_back(*reg.series_for(*reg.signal_by_name(d.signal), *reg.entity_by_name(d.entity)));
}

double SyntheticGrid::feeder_load(std::size_t i, Instant t) const
{
    const auto& d = defs_[i];
    double v = d.level * (1.0 + d.daily * daily_shape(t, d.peak_hour) + kFeederWeekly * weekly_shape(t));
    for (const auto& inj : spec_.injections)
        if ((inj.entity == d.entity || inj.entity == d.substation) && t >= inj.start && t < inj.start + inj.duration)
            v *= 1.0 + inj.magnitude;
    return v + d.noise * normal(spec_.seed, i, step_index(t));
}

double SyntheticGrid::value(std::size_t i, Instant t) const
{
    const auto& d = defs_.at(i);
    const auto n = normal(spec_.seed, i, step_index(t));
    double v = 0.0;
    switch (d.role) {
    case Role::feeder:
        v = feeder_load(i, t);
        break;
    case Role::substation:
        for (auto f : d.inputs) v += feeder_load(f, t);
        v += d.noise * n;
        break;
    case Role::voltage:
    case Role::bus_voltage: {
        double load = 0.0;
        for (auto in : d.inputs) load += defs_[in].role == Role::feeder ? feeder_load(in, t) : value(in, t);
        v = d.level - d.daily * load / d.peak + d.noise * n;
        break;
    }
    case Role::generic:
        v = d.level * (1.0 + d.daily * daily_shape(t, d.peak_hour)) + d.noise * n;
        break;
    }
    return round6(v);
}

std::vector<ReadingRow> SyntheticGrid::readings(Instant from, Instant to) const
{
    std::vector<ReadingRow> rows;
    const auto first = floor_to(from, kDefaultResolution) + (is_aligned(from, kDefaultResolution) ? Minutes{0} : kDefaultResolution);
    for (std::size_t i = 0; i < defs_.size(); ++i)
        for (auto t = first; t < to; t += kDefaultResolution) rows.push_back(ReadingRow{ids_[i], t, value(i, t)});
    return rows;
}

void generate(const ScenarioSpec& spec, const std::filesystem::path& dir)
{
    const SyntheticGrid grid(spec);
    std::filesystem::create_directories(dir);
    const InstallationPaths paths{dir};
    {
        std::ofstream out(paths.config(), std::ios::binary);
        out << grid.config().dump(2) << '\n';
        if (!out) throw Error(ErrorCode::storage_failure, "cannot write configuration", {paths.config().string()});
    }
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(paths.history().string().c_str(), "wb"), &std::fclose);
    if (!file) throw Error(ErrorCode::storage_failure, "cannot write history", {paths.history().string()});
    std::fputs("series_id,timestamp,value\n", file.get());
    for (std::size_t i = 0; i < grid.series_count(); ++i) {
        for (auto t = spec.start; t < spec.history_end(); t += kDefaultResolution)
            std::fprintf(file.get(), "%s,%s,%.6f\n", grid.series_id(i).c_str(), format_instant(t).c_str(), grid.value(i, t));
    }
    if (std::ferror(file.get())) throw Error(ErrorCode::storage_failure, "cannot write history", {paths.history().string()});
}

namespace {

void ingest_rows(TimeseriesStore& store, const std::vector<ReadingRow>& rows)
{
    std::map<std::string, std::vector<DataPoint>> by_series;
    for (const auto& r : rows) by_series[r.series].push_back(DataPoint{r.timestamp, r.value});
    for (const auto& [series, points] : by_series) {
        const auto report = store.ingest(series, points);
        if (!report.rejected.empty())
            throw Error(report.rejected.front().reason, "history contains rejected points", {series});
    }
}

double seconds_since(std::chrono::steady_clock::time_point t)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

} // namespace

json run_scenario(const std::filesystem::path& dir, const RunOptions& options)
{
    if (options.hours < 0) throw Error(ErrorCode::invalid_parameter, "hours must be non-negative");
    const auto wall_start = std::chrono::steady_clock::now();
    const InstallationPaths paths{dir};
    const auto installation = load_installation(paths.config());
    if (installation.scenario.empty())
        throw Error(ErrorCode::invalid_config, "configuration has no scenario block", {paths.config().string()});
    const SyntheticGrid grid(scenario_from_json(installation.scenario));
    const auto& reg = *installation.registry;

    // the store is derived from the installation files and rebuilt per run
    for (const char* suffix : {"", "-wal", "-shm"}) std::filesystem::remove(paths.store().string() + suffix);
    TimeseriesStore store(reg, open_sqlite_storage(paths.store().string()));
    {
        std::ifstream in(paths.history());
        if (!in) throw Error(ErrorCode::invalid_config, "history file missing", {paths.history().string()});
        ingest_rows(store, parse_readings_csv(in));
    }
    const double load_seconds = seconds_since(wall_start);

    ForecastingEngine engine(store, installation.models);
    JobRunner runner(engine, store);
    WorkerPool pool(options.workers);
    DomsService doms(installation, store, engine);

    const Instant t0 = grid.spec().history_end();
    std::vector<Job> initial;
    for (const auto& c : installation.models) initial.push_back(Job{c.id, JobKind::train, t0});
    std::size_t initial_failed = 0;
    for (const auto& r : runner.run_jobs(initial, pool)) initial_failed += r.status == JobStatus::failed;
    doms.fit_relational_models(t0);

    auto entity_name = [&reg](const std::string& series) {
        const auto ts = reg.series(series);
        return ts ? reg.entity(ts->entity)->name : series;
    };

    Scheduler scheduler(installation.models, t0);
    json hours = json::array();
    json violations = json::array();
    json windows = json::array();
    std::map<std::string, std::size_t> failures; // detail -> count
    std::size_t score_ok = 0, score_failed = 0, train_ok = 0, train_failed = 0, violation_total = 0, window_total = 0;
    double slowest_hour = 0.0;
    const auto forecasts_before = store.storage().forecast_count();

    for (int h = 1; h <= options.hours; ++h) {
        const auto hour_start = std::chrono::steady_clock::now();
        const Instant now = t0 + std::chrono::hours{h};
        ingest_rows(store, grid.readings(now - std::chrono::hours{1} + kDefaultResolution, now + kDefaultResolution));

        const auto jobs = scheduler.due_jobs(now);
        std::size_t hour_scores = 0, hour_failed = 0;
        for (const auto& r : runner.run_jobs(jobs, pool)) {
            const bool ok = r.status == JobStatus::succeeded;
            if (r.kind == JobKind::score) {
                ++hour_scores;
                (ok ? score_ok : score_failed)++;
            } else {
                (ok ? train_ok : train_failed)++;
            }
            if (!ok) {
                ++hour_failed;
                ++failures[r.detail];
            }
        }

        json hour{{"time", format_instant(now)}, {"score_jobs", hour_scores}, {"failed_jobs", hour_failed}};
        try {
            const auto result = doms.run(now);
            hour["violations"] = result.violations.size();
            hour["flex_windows"] = result.windows.size();
            violation_total += result.violations.size();
            window_total += result.windows.size();
            for (const auto& v : result.violations)
                violations.push_back({{"issue_time", format_instant(now)},
                                      {"entity", entity_name(v.series)},
                                      {"series_id", v.series},
                                      {"step", v.step},
                                      {"timestamp", format_instant(v.timestamp)},
                                      {"bound", to_string(v.bound)},
                                      {"limit", v.limit},
                                      {"predicted_mean", v.predicted_mean},
                                      {"exceedance_probability", v.exceedance_probability}});
            for (const auto& w : result.windows)
                windows.push_back({{"issue_time", format_instant(now)},
                                   {"entity", entity_name(w.series)},
                                   {"series_id", w.series},
                                   {"start", format_instant(w.start)},
                                   {"end", format_instant(w.end)},
                                   {"steps", w.amounts.size()},
                                   {"energy_mwh", w.energy}});
        } catch (const Error& e) {
            hour["doms_error"] = std::string(to_string(e.code())) + ": " + e.what();
        }
        hours.push_back(std::move(hour));
        slowest_hour = std::max(slowest_hour, seconds_since(hour_start));
    }

    json failure_list = json::array();
    for (const auto& [detail, count] : failures) failure_list.push_back({{"detail", detail}, {"count", count}});

    return json{{"installation", installation.name},
                {"seed", grid.spec().seed},
                {"start", format_instant(t0)},
                {"end", format_instant(t0 + std::chrono::hours{options.hours})},
                {"hours", options.hours},
                {"counts",
                 {{"series", reg.series_count()},
                  {"entities", reg.entity_count()},
                  {"signals", reg.signal_count()},
                  {"models", installation.models.size()},
                  {"grid_variables", installation.topology.size()},
                  {"relational_models", installation.relational.size()}}},
                {"initial_training", {{"jobs", initial.size()}, {"failed", initial_failed}}},
                {"jobs",
                 {{"score", {{"succeeded", score_ok}, {"failed", score_failed}}},
                  {"train", {{"succeeded", train_ok}, {"failed", train_failed}}}}},
                {"forecasts_issued", store.storage().forecast_count() - forecasts_before},
                {"violations_total", violation_total},
                {"flex_windows_total", window_total},
                {"per_hour", hours},
                {"violations", violations},
                {"flex_windows", windows},
                {"failures", failure_list},
                {"timing",
                 {{"wall_seconds", seconds_since(wall_start)},
                  {"load_seconds", load_seconds},
                  {"slowest_hour_seconds", slowest_hour},
                  {"workers", pool.size()}}}};
}

} // namespace gridflex
