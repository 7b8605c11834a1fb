// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include "fixtures.hpp"
#include "grid_fixture.hpp"
#include "oracles.hpp"

#include "gridflex/doms.hpp"
#include "gridflex/scenario.hpp"
#include "gridflex/scheduler.hpp"
#include "gridflex/service_api.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>

using namespace gridflex;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome inference_oracle()
{
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(20240501);
    std::uniform_int_distribution<int> size(1, 50);
    const int graphs = 250;
    double worst = 0.0;
    for (int i = 0; i < graphs; ++i) {
        const auto g = oracle::random_graph(rng, size(rng));
        const auto post = infer(g);
        const auto ref = oracle::joint(g);
        worst = std::max(worst, (post.mean - ref.mean).cwiseAbs().maxCoeff());
        worst = std::max(worst, (post.marginal_variance - ref.covariance.diagonal()).cwiseAbs().maxCoeff());
    }
    const double elapsed = seconds_since(start);
    return {worst < 1e-8 && elapsed < 60.0,
            fmt("%d graphs of 1-50 variables, worst abs error %.3g, %.2f s", graphs, worst, elapsed)};
}

// ---------------------------------------------------------------------------

struct FlexFixture {
    json config;
    std::map<std::string, std::pair<double, double>> forecasts; // entity -> mean, variance
};

// Substations with 2-4 feeders each under exact-sum models at the floor;
// every feeder controllable, each substation limited to [0, limit].
FlexFixture random_flex_fixture(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> subs_n(1, 3), feeders_n(2, 4);
    std::uniform_real_distribution<double> excess(5.0, 25.0), var(10.0, 50.0), limit(80.0, 200.0), share(0.5, 1.5);
    FlexFixture f;
    json entities = json::array(), series = json::array(), feeders = json::array(), ranges = json::array(),
         controllable = json::array(), relational = json::array(), models = json::array(), substations = json::array();
    const int subs = subs_n(rng);
    for (int s = 0; s < subs; ++s) {
        const auto sub = "S" + std::to_string(s);
        entities.push_back({{"name", sub}, {"kind", "substation"}});
        series.push_back({{"signal", "active power"}, {"entity", sub}});
        substations.push_back(sub);
        const double lim = limit(rng);
        ranges.push_back({{"entity", sub}, {"low", 0.0}, {"high", lim}});
        const int n = feeders_n(rng);
        std::vector<double> weights(static_cast<std::size_t>(n));
        double wsum = 0.0;
        for (auto& w : weights) wsum += (w = share(rng));
        const double total = lim + excess(rng);
        json parents = json::array();
        for (int k = 0; k < n; ++k) {
            const auto fdr = sub + "-F" + std::to_string(k);
            entities.push_back({{"name", fdr}, {"kind", "feeder"}, {"parent", sub}});
            series.push_back({{"signal", "active power"}, {"entity", fdr}});
            feeders.push_back({{"entity", fdr}, {"substation", sub}});
            controllable.push_back(fdr);
            parents.push_back(fdr);
            models.push_back({{"id", "m-" + fdr},
                              {"target", {{"signal", "active power"}, {"entity", fdr}}},
                              {"algorithm", "persistence"}});
            f.forecasts[fdr] = {total * weights[static_cast<std::size_t>(k)] / wsum, var(rng)};
        }
        relational.push_back({{"child", sub},
                              {"parents", parents},
                              {"weights", std::vector<double>(static_cast<std::size_t>(n), 1.0)},
                              {"residual_variance", 1e-9}});
    }
    f.config = json{{"schema", kConfigSchema},
                    {"installation", "random-flex"},
                    {"signals", {{{"name", "active power"}, {"unit", "MW"}}}},
                    {"entities", entities},
                    {"series", series},
                    {"grid",
                     {{"substations", substations},
                      {"feeders", feeders},
                      {"ranges", ranges},
                      {"controllable", controllable},
                      {"relational_models", relational}}},
                    {"models", models}};
    return f;
}

// Runs the fixture through /api/doms/run and /api/doms/whatif; returns the
// worst relative distance of a violated mean from its limit after the what-if.
struct FlexCheck {
    bool ok = true;
    double worst_rel = 0.0;
    double worst_p = 0.0;
    std::size_t violations = 0;
    std::string problem;
};

void check_flex(const FlexFixture& f, FlexCheck& out)
{
    fixture::GridBench g(f.config);
    for (const auto& [entity, mv] : f.forecasts) g.forecast(entity, mv.first, mv.second);
    const ApiHandler api(g.inst, g.store, g.engine, g.doms);
    const auto issue = format_instant(fixture::kIssue);

    const auto base_resp = api.handle({"POST", "/api/doms/run", {}, json{{"issue_time", issue}}.dump(), "application/json"});
    if (base_resp.status != 200) {
        out.ok = false;
        out.problem = "run returned " + std::to_string(base_resp.status);
        return;
    }
    const auto base = json::parse(base_resp.body)["result"];
    if (base["violations"].empty()) {
        out.ok = false;
        out.problem = "fixture produced no violation";
        return;
    }
    out.violations += base["violations"].size();
    json adjustments = json::object();
    std::map<std::pair<std::string, int>, int> covered; // (series, step) -> feeders with a request
    for (const auto& q : base["requests"]) {
        adjustments[q["series_id"].get<std::string>()].push_back({{"step", q["step"]}, {"delta", q["amount"]}});
        ++covered[{q["covering"]["series_id"].get<std::string>(), q["step"].get<int>()}];
    }
    const auto resp = api.handle({"POST", "/api/doms/whatif", {}, json{{"issue_time", issue}, {"adjustments", adjustments}}.dump(),
                                  "application/json"});
    if (resp.status != 200) {
        out.ok = false;
        out.problem = "whatif returned " + std::to_string(resp.status);
        return;
    }
    const auto after = json::parse(resp.body)["result"];
    const double threshold = g.inst.settings.p_threshold;
    for (const auto& v : base["violations"]) {
        const auto series = v["series_id"].get<std::string>();
        const auto step = v["step"].get<int>();
        const double limit = v["limit"].get<double>();
        double mean = NAN, sd = NAN;
        for (const auto& e : after["steps"][static_cast<std::size_t>(step)]["estimates"])
            if (e["series_id"] == series) mean = e["mean"].get<double>(), sd = e["sd"].get<double>();
        const double rel = std::abs(mean - limit) / std::abs(limit);
        const double p = v["bound"] == "high" ? exceedance_high(mean, sd, limit) : exceedance_low(mean, sd, limit);
        out.worst_rel = std::max(out.worst_rel, rel);
        out.worst_p = std::max(out.worst_p, p);
        if (!(rel <= 1e-6) || !(p < threshold)) {
            out.ok = false;
            if (out.problem.empty())
                out.problem = fmt("%s step %d: mean %.9g limit %.9g p %.4f", series.c_str(), step, mean, limit, p);
        }
    }
}

Outcome flex_sufficiency()
{
    FlexCheck check;
    FlexFixture two;
    two.config = fixture::two_feeder_config();
    two.forecasts = {{"FA", {55.0, 25.0}}, {"FB", {55.0, 100.0}}};
    check_flex(two, check);
    std::mt19937_64 rng(77);
    for (int i = 0; i < 20; ++i) check_flex(random_flex_fixture(rng), check);
    return {check.ok, fmt("2-feeder + 20 random fixtures, %zu violations, worst |mean-limit|/limit %.3g, worst p %.4f%s%s",
                          check.violations, check.worst_rel, check.worst_p, check.problem.empty() ? "" : "; first failure: ",
                          check.problem.c_str())};
}

// ---------------------------------------------------------------------------

Outcome cyprus_replica()
{
    const auto dir = std::filesystem::temp_directory_path() / "gridflex-acceptance-cyprus";
    std::filesystem::remove_all(dir);
    auto spec = preset_spec("cyprus");
    generate(spec, dir);
    const auto report = run_scenario(dir, RunOptions{1, 8});

    const auto inst = load_installation(InstallationPaths{dir}.config());
    const auto& reg = *inst.registry;
    TimeseriesStore store(reg, open_sqlite_storage(InstallationPaths{dir}.store().string()));
    ForecastingEngine engine(store, inst.models);
    DomsService doms(inst, store, engine);
    const auto t1 = spec.history_end() + 1h;
    const auto graph = doms.step_graph(t1, 0);

    std::size_t good_forecasts = 0;
    std::set<std::string> targets;
    for (const auto& m : inst.models) {
        targets.insert(m.target);
        const auto f = store.find_latest_forecast(m.target, t1);
        if (!f || f->issue_time != t1 || f->points.size() != 96) continue;
        bool spaced = f->points.front().timestamp == t1 + 15min;
        for (std::size_t k = 1; k < f->points.size(); ++k) spaced = spaced && f->points[k].timestamp - f->points[k - 1].timestamp == 15min;
        good_forecasts += spaced;
    }
    const double hour_seconds = report["timing"]["slowest_hour_seconds"].get<double>();
    const bool counts = reg.series_count() == 531 && reg.entity_count() == 179 && reg.signal_count() == 19 && inst.models.size() == 174;
    const bool shape = graph.graph.size() == 85 && graph.relational_factors == 16;
    const bool issued = report["forecasts_issued"] == 174 && good_forecasts == 174 && targets.size() == 174;
    std::filesystem::remove_all(dir);
    return {counts && shape && issued && hour_seconds < 120.0,
            fmt("%zu series, %zu entities, %zu signals, %zu models; graph %zu vars + %zu relational factors; "
                "%zu/174 forecasts of 96 x 15 min; hour took %.2f s",
                reg.series_count(), reg.entity_count(), reg.signal_count(), inst.models.size(), graph.graph.size(),
                graph.relational_factors, good_forecasts, hour_seconds)};
}

// ---------------------------------------------------------------------------

Outcome forecasting_correctness()
{
    using fixture::Bench;
    using fixture::kStart;
    std::vector<std::string> problems;

    // seasonal naive on a strictly periodic fixture
    double seasonal_error = 0.0;
    {
        Bench b;
        std::vector<DataPoint> pts;
        for (int i = 0; i < 96 * 10; ++i) pts.push_back({kStart + 15min * i, 10.0 + (i % 96) * 0.25 + ((i % 96) % 7)});
        b.put(b.load, pts);
        ForecastingEngine engine(b.store, {b.config("s", Algorithm::seasonal_naive)});
        for (int d = 2; d < 9; ++d) {
            const auto issue = kStart + 24h * d + 1h * (d * 5 % 24);
            const auto v = engine.train(engine.config("s"), issue);
            for (const auto& p : engine.score(v, issue).points)
                seasonal_error = std::max(seasonal_error, std::abs(p.value - b.truth[b.load].at(p.timestamp)));
        }
    }
    if (seasonal_error != 0.0) problems.push_back(fmt("seasonal error %.3g", seasonal_error));

    // ridge coefficients against the normal equations
    double ridge_error = 0.0;
    {
        Bench b;
        b.fill(21);
        const double ridge = 1.0;
        ForecastingEngine engine(b.store, {b.config("r", Algorithm::ridge_autoregressive, {{"training_days", 14}})});
        const auto as_of = kStart + 24h * 20;
        const auto beta_impl = engine.train(engine.config("r"), as_of).parameters.at("coefficients").get<std::vector<double>>();
        const auto& L = b.truth[b.load];
        const auto& D = b.truth[b.driver];
        std::vector<Eigen::VectorXd> rows;
        std::vector<double> ys;
        for (auto t = as_of - 24h * 13; t < as_of; t += 15min) {
            Eigen::VectorXd r = Eigen::VectorXd::Zero(35);
            r(0) = L.at(t - 15min);
            r(1) = L.at(t - 30min);
            r(2) = L.at(t - 24h);
            r(3) = D.at(t - 24h);
            r(4 + hour_of_day(t)) = 1.0;
            r(28 + day_of_week(t)) = 1.0;
            rows.push_back(r);
            ys.push_back(L.at(t));
        }
        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 35);
        for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
        const Eigen::Map<Eigen::VectorXd> y(ys.data(), static_cast<Eigen::Index>(ys.size()));
        const Eigen::VectorXd beta =
            (x.transpose() * x + ridge * Eigen::MatrixXd::Identity(35, 35)).colPivHouseholderQr().solve(x.transpose() * y);
        if (beta_impl.size() != 35) ridge_error = INFINITY;
        else
            for (Eigen::Index j = 0; j < 35; ++j) ridge_error = std::max(ridge_error, std::abs(beta_impl[static_cast<std::size_t>(j)] - beta(j)));
    }
    if (!(ridge_error < 1e-6)) problems.push_back(fmt("ridge coefficient error %.3g", ridge_error));

    // poisoned future leaves training and scoring untouched
    bool leak = false;
    for (auto alg : {Algorithm::persistence, Algorithm::seasonal_naive, Algorithm::ridge_autoregressive}) {
        Bench b;
        b.fill(18);
        ForecastingEngine engine(b.store, {b.config("m", alg)});
        const auto as_of = kStart + 24h * 16;
        const auto v = engine.train(engine.config("m"), as_of);
        const auto before_v = json(v).dump();
        const auto before_f = engine.score(v, as_of).points;
        std::vector<DataPoint> poison;
        for (auto t = as_of + 15min; t < kStart + 24h * 18; t += 15min) poison.push_back({t, 1e9});
        poison.push_back({as_of, -1e9}); // the issue point itself is history for scoring, not for training
        b.store.ingest(b.load, std::span(poison).first(poison.size() - 1));
        b.store.ingest(b.driver, std::span(poison).first(poison.size() - 1));
        if (engine.score(v, as_of).points != before_f) leak = true;
        b.store.ingest(b.load, std::span(poison).last(1));
        if (json(engine.train(engine.config("m"), as_of)).dump() != before_v) leak = true;
    }
    if (leak) problems.push_back("poisoned future changed a model or forecast");

    std::string detail = fmt("seasonal max error %.3g, ridge max coefficient error %.3g, no-leakage %s", seasonal_error,
                             ridge_error, leak ? "violated" : "held");
    return {problems.empty(), detail};
}

// ---------------------------------------------------------------------------

Outcome scheduler_exactness()
{
    using fixture::Bench;
    using fixture::kStart;
    const auto start = std::chrono::steady_clock::now();
    Bench b;
    b.fill(3);
    std::vector<ModelConfig> configs;
    for (int i = 0; i < 174; ++i) configs.push_back(b.config(fmt("m%03d", i), Algorithm::persistence));
    ForecastingEngine engine(b.store, configs);
    JobRunner runner(engine, b.store);
    WorkerPool pool(8);
    const auto t0 = kStart + 48h;
    std::vector<Job> initial;
    for (const auto& c : configs) initial.push_back(Job{c.id, JobKind::train, t0});
    runner.run_jobs(initial, pool);

    Scheduler scheduler(configs, t0);
    std::size_t failed = 0;
    for (int h = 1; h <= 24; ++h)
        for (const auto& r : runner.run_jobs(scheduler.due_jobs(t0 + 1h * h), pool)) failed += r.status != JobStatus::succeeded;

    JobFilter filter;
    filter.kind = JobKind::score;
    const auto records = b.store.storage().jobs(filter);
    std::set<std::pair<std::string, Instant>> seen;
    for (const auto& r : records) seen.emplace(r.config_id, r.scheduled);
    std::size_t missing = 0;
    for (const auto& c : configs)
        for (int h = 1; h <= 24; ++h) missing += !seen.count({c.id, t0 + 1h * h});
    const bool ok = records.size() == 4176 && seen.size() == 4176 && missing == 0 && failed == 0;
    return {ok, fmt("%zu score jobs recorded, %zu distinct, %zu missing, %zu failed, 8 workers, %.2f s", records.size(),
                    seen.size(), missing, failed, seconds_since(start))};
}

// ---------------------------------------------------------------------------

Outcome store_properties()
{
    Registry reg;
    const auto sig = reg.register_signal("active power", "MW");
    const auto a = reg.declare_timeseries(sig, reg.register_entity("A", EntityKind::feeder));
    const auto t0 = parse_instant("2024-03-01T00:00:00Z");
    std::mt19937_64 rng(31);
    std::vector<DataPoint> pts;
    for (int i = 0; i < 500; ++i) pts.push_back({t0 + 15min * i, static_cast<double>(rng() % 100000) / 13.0});

    bool idempotent = true, commutative = true;
    std::vector<DataPoint> reference;
    for (int trial = 0; trial < 10; ++trial) {
        TimeseriesStore store(reg, open_sqlite_storage(":memory:"));
        auto shuffled = pts;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        for (std::size_t i = 0; i < shuffled.size(); i += 61)
            store.ingest(a, std::span(shuffled).subspan(i, std::min<std::size_t>(61, shuffled.size() - i)));
        const auto once = store.read_range(a, t0, t0 + 1000h);
        if (store.ingest(a, shuffled).upserted != 0 || store.read_range(a, t0, t0 + 1000h) != once) idempotent = false;
        if (trial == 0) reference = once;
        if (once != reference || once != pts) commutative = false;
    }

    TimeseriesStore store(reg, open_sqlite_storage(":memory:"));
    std::vector<int> hours(72);
    for (int i = 0; i < 72; ++i) hours[static_cast<std::size_t>(i)] = i;
    std::shuffle(hours.begin(), hours.end(), rng);
    for (int h : hours) {
        ForecastRecord r;
        r.series = a;
        r.model_version = "m@v1";
        r.issue_time = t0 + 1h * h;
        for (int k = 1; k <= 96; ++k) r.points.push_back({r.issue_time + 15min * k, static_cast<double>(h)});
        store.store_forecast(r);
    }
    std::size_t checked = 0, wrong = 0;
    for (auto as_of = t0 - 1h; as_of < t0 + 80h; as_of += 5min) {
        ++checked;
        const auto f = store.find_latest_forecast(a, as_of);
        if (as_of < t0) {
            wrong += f.has_value();
            continue;
        }
        const auto expected = std::min(t0 + 71h, floor_to(as_of, Minutes{60}));
        if (!f || f->issue_time != expected || f->points.front().value != static_cast<double>((expected - t0) / 1h)) ++wrong;
    }
    return {idempotent && commutative && wrong == 0,
            fmt("10 permuted batchings of 500 points: idempotent %s, commutative %s; %zu/%zu latest-forecast probes correct",
                idempotent ? "yes" : "no", commutative ? "yes" : "no", checked - wrong, checked)};
}

} // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"inference oracle", inference_oracle},
        {"flexibility sufficiency", flex_sufficiency},
        {"cyprus structural replica", cyprus_replica},
        {"forecasting correctness", forecasting_correctness},
        {"scheduler exactness", scheduler_exactness},
        {"store properties", store_properties},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed ? 1 : 0;
}
