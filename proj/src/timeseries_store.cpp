#include "gridflex/timeseries_store.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

namespace gridflex {

std::string to_string(JobKind kind) { return kind == JobKind::train ? "train" : "score"; }
std::string to_string(JobStatus status) { return status == JobStatus::succeeded ? "succeeded" : "failed"; }

TimeseriesStore::TimeseriesStore(const Registry& registry, std::unique_ptr<Storage> storage)
    : registry_(registry), storage_(std::move(storage))
{
    if (!storage_) throw Error(ErrorCode::invalid_parameter, "store needs a storage backend");
}

TimeSeries TimeseriesStore::require_series(const std::string& series) const
{
    auto ts = registry_.series(series);
    if (!ts) throw Error(ErrorCode::unknown_series, "series not declared", {series});
    return *ts;
}

IngestReport TimeseriesStore::ingest(const std::string& series, std::span<const DataPoint> points)
{
    const auto resolution = require_series(series).resolution;
    IngestReport report;
    std::vector<DataPoint> accepted;
    accepted.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (!is_aligned(p.timestamp, resolution))
            report.rejected.push_back({i, p.timestamp, ErrorCode::misaligned_timestamp});
        else if (!std::isfinite(p.value))
            report.rejected.push_back({i, p.timestamp, ErrorCode::invalid_parameter});
        else
            accepted.push_back(p);
    }
    if (!accepted.empty()) report.upserted = storage_->upsert_points(series, accepted);
    return report;
}

std::vector<DataPoint> TimeseriesStore::read_range(const std::string& series, Instant from, Instant to) const
{
    require_series(series);
    if (to < from) throw Error(ErrorCode::invalid_parameter, "range end precedes its start", {series});
    if (to == from) return {};
    return storage_->read_points(series, from, to);
}

std::int64_t TimeseriesStore::store_forecast(const ForecastRecord& record)
{
    const auto resolution = require_series(record.series).resolution;
    const auto expected = std::chrono::hours{24} / resolution;
    if (static_cast<long>(record.points.size()) != expected)
        throw Error(ErrorCode::invalid_parameter,
                    "forecast must have " + std::to_string(expected) + " points, got " +
                        std::to_string(record.points.size()),
                    {record.series});
    if (record.points.front().timestamp < record.issue_time)
        throw Error(ErrorCode::invalid_parameter, "forecast starts before its issue time", {record.series});
    for (std::size_t i = 0; i < record.points.size(); ++i) {
        const auto& p = record.points[i];
        if (!std::isfinite(p.value))
            throw Error(ErrorCode::invalid_parameter, "forecast value is not finite", {record.series});
        if (!is_aligned(p.timestamp, resolution))
            throw Error(ErrorCode::misaligned_timestamp, "forecast point off the series grid", {record.series});
        if (i > 0 && p.timestamp - record.points[i - 1].timestamp != resolution)
            throw Error(ErrorCode::invalid_parameter, "forecast points are not evenly spaced", {record.series});
    }
    return storage_->insert_forecast(record, resolution);
}

ForecastRecord TimeseriesStore::latest_forecast(const std::string& series, Instant as_of) const
{
    auto r = find_latest_forecast(series, as_of);
    if (!r) throw Error(ErrorCode::not_found, "no forecast issued at or before " + format_instant(as_of), {series});
    return *r;
}

std::optional<ForecastRecord> TimeseriesStore::find_latest_forecast(const std::string& series, Instant as_of) const
{
    require_series(series);
    return storage_->latest_forecast(series, as_of);
}

std::vector<ReadingRow> parse_readings_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) return {};
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "series_id,timestamp,value")
        throw Error(ErrorCode::invalid_parameter, "expected header series_id,timestamp,value", {line});

    std::vector<ReadingRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos)
            throw Error(ErrorCode::invalid_parameter, "malformed row at line " + std::to_string(line_no), {line});
        ReadingRow row;
        row.series = line.substr(0, c1);
        row.timestamp = parse_instant(std::string_view(line).substr(c1 + 1, c2 - c1 - 1));
        const auto value_text = line.substr(c2 + 1);
        char* end = nullptr;
        row.value = std::strtod(value_text.c_str(), &end);
        if (end == value_text.c_str() || *end != '\0')
            throw Error(ErrorCode::invalid_parameter, "malformed value at line " + std::to_string(line_no), {line});
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_readings_csv(std::ostream& out, std::span<const ReadingRow> rows)
{
    out << "series_id,timestamp,value\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.value);
        out << r.series << ',' << format_instant(r.timestamp) << ',' << buf << '\n';
    }
}

void write_forecast_csv(std::ostream& out, std::span<const ForecastRecord> records)
{
    out << "series_id,timestamp,value,issue_time,model_version\n";
    char buf[64];
    for (const auto& r : records) {
        const auto issued = format_instant(r.issue_time);
        for (const auto& p : r.points) {
            std::snprintf(buf, sizeof buf, "%.6f", p.value);
            out << r.series << ',' << format_instant(p.timestamp) << ',' << buf << ',' << issued << ','
                << r.model_version << '\n';
        }
    }
}

} // namespace gridflex
