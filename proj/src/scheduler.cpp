#include "gridflex/scheduler.hpp"

#include <algorithm>
#include <tuple>

namespace gridflex {

Scheduler::Scheduler(std::vector<ModelConfig> configs, Instant start)
    : configs_(std::move(configs)), last_tick_(start)
{
}

std::vector<Job> Scheduler::due_jobs(Instant now)
{
    std::vector<Job> out;
    std::lock_guard lock(mutex_);
    if (now <= last_tick_) return out;
    for (const auto& c : configs_) {
        for (auto t : c.train_schedule.occurrences(last_tick_, now)) out.push_back(Job{c.id, JobKind::train, t});
        for (auto t : c.score_schedule.occurrences(last_tick_, now)) out.push_back(Job{c.id, JobKind::score, t});
    }
    last_tick_ = now;
    std::stable_sort(out.begin(), out.end(), [](const Job& a, const Job& b) {
        return std::tie(a.scheduled, a.kind, a.config_id) < std::tie(b.scheduled, b.kind, b.config_id);
    });
    return out;
}

Instant Scheduler::last_tick() const
{
    std::lock_guard lock(mutex_);
    return last_tick_;
}

WorkerPool::WorkerPool(unsigned workers)
{
    workers = std::max(1u, workers);
    for (unsigned i = 0; i < workers; ++i) threads_.emplace_back([this](std::stop_token st) { loop(st); });
}

WorkerPool::~WorkerPool()
{
    for (auto& t : threads_) t.request_stop();
    work_ready_.notify_all();
}

void WorkerPool::submit(std::function<void()> task)
{
    {
        std::lock_guard lock(mutex_);
        queue_.push_back(std::move(task));
    }
    work_ready_.notify_one();
}

void WorkerPool::wait_idle()
{
    std::unique_lock lock(mutex_);
    idle_.wait(lock, [this] { return queue_.empty() && running_ == 0; });
}

void WorkerPool::loop(std::stop_token stop)
{
    for (;;) {
        std::function<void()> task;
        {
            std::unique_lock lock(mutex_);
            if (!work_ready_.wait(lock, stop, [this] { return !queue_.empty(); })) return;
            task = std::move(queue_.front());
            queue_.pop_front();
            ++running_;
        }
        task();
        {
            std::lock_guard lock(mutex_);
            --running_;
            if (queue_.empty() && running_ == 0) idle_.notify_all();
        }
    }
}

JobRunner::JobRunner(ForecastingEngine& engine, TimeseriesStore& store) : engine_(engine), store_(store) {}

std::mutex& JobRunner::lock_for(const std::string& config_id)
{
    std::lock_guard lock(locks_mutex_);
    auto& slot = config_locks_[config_id];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

JobRecord JobRunner::run_job(const Job& job)
{
    JobRecord record;
    record.config_id = job.config_id;
    record.kind = job.kind;
    record.scheduled = job.scheduled;
    {
        std::lock_guard exclusive(lock_for(job.config_id));
        try {
            const auto& config = engine_.config(job.config_id);
            if (job.kind == JobKind::train) {
                auto version = engine_.train(config, job.scheduled);
                record.result = engine_.save_version(version).id;
            } else {
                const auto version = engine_.latest_version(config.id, job.scheduled);
                if (!version) throw Error(ErrorCode::not_found, "no trained version available", {config.id});
                const auto forecast = engine_.score(*version, job.scheduled);
                record.result = std::to_string(store_.store_forecast(forecast));
            }
            record.status = JobStatus::succeeded;
        } catch (const Error& e) {
            record.status = JobStatus::failed;
            record.detail = std::string(to_string(e.code())) + ": " + e.what();
        } catch (const std::exception& e) {
            record.status = JobStatus::failed;
            record.detail = std::string("internal: ") + e.what();
        }
    }
    record.id = store_.storage().insert_job(record);
    return record;
}

std::vector<JobRecord> JobRunner::run_jobs(std::span<const Job> jobs, WorkerPool& pool)
{
    // Training completes before scoring so that a score job never races the
    // train job scheduled at the same instant.
    std::vector<JobRecord> out(jobs.size());
    for (auto phase : {JobKind::train, JobKind::score}) {
        for (std::size_t i = 0; i < jobs.size(); ++i)
            if (jobs[i].kind == phase) pool.submit([this, &jobs, &out, i] { out[i] = run_job(jobs[i]); });
        pool.wait_idle();
    }
    return out;
}

} // namespace gridflex
