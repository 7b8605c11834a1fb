#include <doctest.h>

#include "fixtures.hpp"
#include "gridflex/scheduler.hpp"

#include <atomic>
#include <set>

using namespace gridflex;
using namespace std::chrono_literals;
using fixture::Bench;
using fixture::kStart;

namespace {

std::vector<ModelConfig> many_configs(const Bench& b, int n)
{
    std::vector<ModelConfig> out;
    for (int i = 0; i < n; ++i) out.push_back(b.config("m" + std::to_string(i), Algorithm::persistence));
    return out;
}

using Key = std::tuple<std::string, JobKind, Instant>;

} // namespace

TEST_CASE("due jobs are emitted exactly once in time order")
{
    Bench b;
    Scheduler s(many_configs(b, 3), kStart);
    std::vector<Job> all;
    for (auto now : {kStart + 30min, kStart + 3h, kStart + 3h, kStart + 2h, kStart + 26h + 10min, kStart + 48h})
        for (auto& j : s.due_jobs(now)) all.push_back(j);
    // 48 hourly scores and 2 trains per config
    CHECK(all.size() == 3 * (48 + 2));
    std::set<Key> keys;
    for (const auto& j : all) keys.emplace(j.config_id, j.kind, j.scheduled);
    CHECK(keys.size() == all.size());
    CHECK(s.last_tick() == kStart + 48h);

    Scheduler t(many_configs(b, 2), kStart);
    const auto jobs = t.due_jobs(kStart + 3h);
    for (std::size_t i = 1; i < jobs.size(); ++i) CHECK(jobs[i - 1].scheduled <= jobs[i].scheduled);
    const auto train = std::find_if(jobs.begin(), jobs.end(), [](const Job& j) { return j.kind == JobKind::train; });
    REQUIRE(train != jobs.end());
    CHECK(train->scheduled == kStart + 2h);
    CHECK((train + 1)->kind == JobKind::train);
    CHECK((train + 2)->kind == JobKind::score);
}

TEST_CASE("property: concurrent ticks partition the occurrences")
{
    Bench b;
    const auto configs = many_configs(b, 20);
    Scheduler s(configs, kStart);
    std::mutex m;
    std::vector<Job> all;
    {
        std::vector<std::jthread> threads;
        for (int t = 0; t < 8; ++t)
            threads.emplace_back([&, t] {
                std::mt19937_64 rng(static_cast<std::uint64_t>(t));
                for (int i = 0; i < 200; ++i) {
                    const auto now = kStart + Minutes{static_cast<long>(rng() % (24 * 60 + 1))};
                    auto jobs = s.due_jobs(now);
                    std::lock_guard lock(m);
                    all.insert(all.end(), jobs.begin(), jobs.end());
                }
                auto rest = s.due_jobs(kStart + 24h);
                std::lock_guard lock(m);
                all.insert(all.end(), rest.begin(), rest.end());
            });
    }
    std::set<Key> keys;
    for (const auto& j : all) keys.emplace(j.config_id, j.kind, j.scheduled);
    CHECK(keys.size() == all.size());
    CHECK(all.size() == 20 * (24 + 1));
}

TEST_CASE("worker pool runs every task")
{
    WorkerPool pool(8);
    CHECK(pool.size() == 8);
    std::atomic<int> count = 0;
    for (int i = 0; i < 1000; ++i) pool.submit([&] { count.fetch_add(1); });
    pool.wait_idle();
    CHECK(count.load() == 1000);
    pool.wait_idle();
    CHECK(WorkerPool(0).size() == 1);
}

TEST_CASE("job runner records outcomes")
{
    Bench b;
    b.fill(3);
    ForecastingEngine engine(b.store, many_configs(b, 2));
    JobRunner runner(engine, b.store);
    const auto failed = runner.run_job(Job{"m0", JobKind::score, kStart + 48h});
    CHECK(failed.status == JobStatus::failed);
    CHECK(failed.detail.rfind("not_found", 0) == 0);
    CHECK(failed.id > 0);

    const auto trained = runner.run_job(Job{"m0", JobKind::train, kStart + 48h});
    CHECK(trained.status == JobStatus::succeeded);
    CHECK(trained.result == "m0@v1");
    const auto scored = runner.run_job(Job{"m0", JobKind::score, kStart + 49h});
    CHECK(scored.status == JobStatus::succeeded);
    CHECK(b.store.latest_forecast(b.load, kStart + 49h).model_version == "m0@v1");
    CHECK(runner.run_job(Job{"nope", JobKind::train, kStart + 48h}).status == JobStatus::failed);

    JobFilter filter;
    filter.status = JobStatus::failed;
    CHECK(b.store.storage().jobs(filter).size() == 2);
}

TEST_CASE("a day of hourly scoring with eight workers")
{
    Bench b;
    b.fill(3);
    auto configs = many_configs(b, 12);
    ForecastingEngine engine(b.store, configs);
    JobRunner runner(engine, b.store);
    WorkerPool pool(8);
    Scheduler s(configs, kStart + 48h);
    // initial training at the start of the window
    std::vector<Job> initial;
    for (const auto& c : configs) initial.push_back(Job{c.id, JobKind::train, kStart + 48h});
    for (const auto& r : runner.run_jobs(initial, pool)) CHECK(r.status == JobStatus::succeeded);

    std::size_t scores = 0, trains = 0, failures = 0;
    for (int h = 1; h <= 24; ++h) {
        const auto jobs = s.due_jobs(kStart + 48h + 1h * h);
        for (const auto& r : runner.run_jobs(jobs, pool)) {
            (r.kind == JobKind::score ? scores : trains) += 1;
            if (r.status != JobStatus::succeeded) ++failures;
        }
    }
    CHECK(scores == 12 * 24);
    CHECK(trains == 12);
    CHECK(failures == 0);
    JobFilter filter;
    filter.kind = JobKind::score;
    CHECK(b.store.storage().jobs(filter).size() == 12 * 24);
}
