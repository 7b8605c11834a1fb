#ifndef GRIDFLEX_TIMESERIES_STORE_HPP
#define GRIDFLEX_TIMESERIES_STORE_HPP

#include "gridflex/error.hpp"
#include "gridflex/registry.hpp"
#include "gridflex/time.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gridflex {

struct DataPoint {
    Instant timestamp{};
    double value = 0.0;

    friend bool operator==(const DataPoint&, const DataPoint&) = default;
};

struct ForecastRecord {
    std::int64_t id = 0; // assigned by the store
    std::string series;
    std::string model_version;
    Instant issue_time{};
    std::vector<DataPoint> points;
};

struct MetadataRecord {
    std::string kind;
    std::string key;
    int version = 0;
    Instant created{};
    std::string body;
};

enum class JobKind { train, score };
enum class JobStatus { succeeded, failed };

std::string to_string(JobKind kind);
std::string to_string(JobStatus status);

struct JobRecord {
    std::int64_t id = 0;
    std::string config_id;
    JobKind kind = JobKind::score;
    Instant scheduled{};
    JobStatus status = JobStatus::succeeded;
    std::string detail; // failure reason
    std::string result; // model version id or forecast id
};

struct JobFilter {
    std::optional<std::string> config_id;
    std::optional<JobKind> kind;
    std::optional<JobStatus> status;
};

/// Persistence backend. Every call is atomic; implementations must be safe
/// to call from several threads.
class Storage {
public:
    virtual ~Storage() = default;

    /// Returns the number of points inserted or changed.
    virtual std::size_t upsert_points(const std::string& series, std::span<const DataPoint> points) = 0;
    virtual std::vector<DataPoint> read_points(const std::string& series, Instant from, Instant to) const = 0;

    /// Identical (series, version, issue time, points) returns the existing id.
    virtual std::int64_t insert_forecast(const ForecastRecord& record, Minutes spacing) = 0;
    virtual std::optional<ForecastRecord> latest_forecast(const std::string& series, Instant as_of) const = 0;
    virtual std::vector<ForecastRecord> forecasts(const std::string& series) const = 0;
    virtual std::size_t forecast_count() const = 0;

    /// Appends a new version; returns its number (1-based).
    virtual int put_metadata(const std::string& kind, const std::string& key, const std::string& body,
                             Instant created) = 0;
    virtual std::optional<MetadataRecord> metadata(const std::string& kind, const std::string& key,
                                                   std::optional<int> version = std::nullopt) const = 0;
    virtual std::vector<MetadataRecord> latest_metadata(const std::string& kind) const = 0;

    virtual std::int64_t insert_job(const JobRecord& job) = 0;
    virtual std::vector<JobRecord> jobs(const JobFilter& filter) const = 0;
};

/// Embedded SQLite backend; pass ":memory:" for a private in-memory database.
std::unique_ptr<Storage> open_sqlite_storage(const std::string& path);

struct RejectedPoint {
    std::size_t index = 0;
    Instant timestamp{};
    ErrorCode reason = ErrorCode::misaligned_timestamp;
};

struct IngestReport {
    std::size_t upserted = 0;
    std::vector<RejectedPoint> rejected;
};

/// Readings and versioned forecasts, validated against the registry.
class TimeseriesStore {
public:
    TimeseriesStore(const Registry& registry, std::unique_ptr<Storage> storage);

    /// Grid-misaligned or non-finite points are rejected individually; an
    /// unknown series rejects the whole call.
    IngestReport ingest(const std::string& series, std::span<const DataPoint> points);

    /// Half-open [from, to), time-ordered.
    std::vector<DataPoint> read_range(const std::string& series, Instant from, Instant to) const;

    std::int64_t store_forecast(const ForecastRecord& record);

    /// Record with the greatest issue_time <= as_of; throws not_found.
    ForecastRecord latest_forecast(const std::string& series, Instant as_of) const;
    std::optional<ForecastRecord> find_latest_forecast(const std::string& series, Instant as_of) const;

    const Registry& registry() const noexcept { return registry_; }
    Storage& storage() noexcept { return *storage_; }
    const Storage& storage() const noexcept { return *storage_; }

private:
    TimeSeries require_series(const std::string& series) const;

    const Registry& registry_;
    std::unique_ptr<Storage> storage_;
};

/// One row of the bulk ingestion format `series_id,timestamp,value`.
struct ReadingRow {
    std::string series;
    Instant timestamp{};
    double value = 0.0;
};

/// Parses the delimited ingestion format; the header line is required.
std::vector<ReadingRow> parse_readings_csv(std::istream& in);
void write_readings_csv(std::ostream& out, std::span<const ReadingRow> rows);

/// Forecast export: `series_id,timestamp,value,issue_time,model_version`.
void write_forecast_csv(std::ostream& out, std::span<const ForecastRecord> records);

} // namespace gridflex

#endif // GRIDFLEX_TIMESERIES_STORE_HPP
