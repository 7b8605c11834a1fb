#ifndef GRIDFLEX_SCHEDULER_HPP
#define GRIDFLEX_SCHEDULER_HPP

#include "gridflex/forecasting.hpp"

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace gridflex {

struct Job {
    std::string config_id;
    JobKind kind = JobKind::score;
    Instant scheduled{};

    friend bool operator==(const Job&, const Job&) = default;
};

/// Expands the train and score recurrences of every config. Each occurrence
/// is emitted by exactly one due_jobs() call, also under concurrent ticks.
class Scheduler {
public:
    Scheduler(std::vector<ModelConfig> configs, Instant start);

    /// Occurrences in (last tick, now], sorted by time, train before score.
    std::vector<Job> due_jobs(Instant now);
    Instant last_tick() const;

private:
    std::vector<ModelConfig> configs_;
    mutable std::mutex mutex_;
    Instant last_tick_;
};

/// Fixed-size thread pool draining a FIFO queue.
class WorkerPool {
public:
    explicit WorkerPool(unsigned workers);
    ~WorkerPool();
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    void submit(std::function<void()> task);
    /// Blocks until the queue is empty and no task is running.
    void wait_idle();
    unsigned size() const noexcept { return static_cast<unsigned>(threads_.size()); }

private:
    void loop(std::stop_token stop);

    std::mutex mutex_;
    std::condition_variable_any work_ready_;
    std::condition_variable idle_;
    std::deque<std::function<void()>> queue_;
    std::size_t running_ = 0;
    std::vector<std::jthread> threads_;
};

/// Executes train/score jobs and records their outcome; failures become
/// failed job records rather than exceptions. Jobs of one config never run
/// concurrently.
class JobRunner {
public:
    JobRunner(ForecastingEngine& engine, TimeseriesStore& store);

    JobRecord run_job(const Job& job);
    std::vector<JobRecord> run_jobs(std::span<const Job> jobs, WorkerPool& pool);

private:
    std::mutex& lock_for(const std::string& config_id);

    ForecastingEngine& engine_;
    TimeseriesStore& store_;
    std::mutex locks_mutex_;
    std::map<std::string, std::unique_ptr<std::mutex>> config_locks_;
};

} // namespace gridflex

#endif // GRIDFLEX_SCHEDULER_HPP
