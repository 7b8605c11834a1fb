#include "gridflex/service_api.hpp"

#include "gridflex/wire.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace gridflex {

using nlohmann::json;

namespace {

ApiResponse reply(int status, json payload) { return ApiResponse{status, envelope(std::move(payload)).dump(), "application/json"}; }

ApiResponse fail(const Error& e) { return ApiResponse{http_status(e.code()), error_body(e).dump(), "application/json"}; }

std::optional<std::string> query(const ApiRequest& r, const std::string& key)
{
    auto it = r.query.find(key);
    if (it == r.query.end() || it->second.empty()) return std::nullopt;
    return it->second;
}

json parse_body(const ApiRequest& r)
{
    try {
        return r.body.empty() ? json::object() : json::parse(r.body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_parameter, std::string("request body is not valid JSON: ") + e.what());
    }
}

Instant instant_field(const json& body, const char* key)
{
    if (!body.contains(key) || !body.at(key).is_string())
        throw Error(ErrorCode::invalid_parameter, std::string("missing field ") + key, {key});
    return parse_instant(body.at(key).get<std::string>());
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

json node_list(const std::vector<GridNode>& nodes, const Registry& reg)
{
    json out = json::array();
    for (const auto& n : nodes) {
        json item{{"entity", n.entity}, {"series_id", n.series}};
        if (auto id = reg.entity_by_name(n.entity)) item["entity_id"] = *id;
        if (!n.parent.empty()) item["parent"] = n.parent;
        out.push_back(std::move(item));
    }
    return out;
}

} // namespace

int http_status(ErrorCode code)
{
    switch (code) {
    case ErrorCode::unknown_series:
    case ErrorCode::unknown_signal:
    case ErrorCode::unknown_entity:
    case ErrorCode::not_found:
        return 404;
    case ErrorCode::missing_forecast:
        return 409;
    case ErrorCode::under_determined_graph:
    case ErrorCode::singular_conditioning:
    case ErrorCode::insufficient_history:
    case ErrorCode::insufficient_samples:
    case ErrorCode::degenerate_parent:
    case ErrorCode::gap_too_large:
        return 422;
    case ErrorCode::storage_failure:
        return 500;
    default:
        return 400;
    }
}

ApiHandler::ApiHandler(const Installation& installation, TimeseriesStore& store, const ForecastingEngine& engine,
                       const DomsService& doms)
    : installation_(installation), store_(store), engine_(engine), doms_(doms)
{
}

ApiResponse ApiHandler::handle(const ApiRequest& r) const
{
    try {
        const auto& p = r.path;
        if (r.method == "GET" && p == "/api/health")
            return reply(200, json{{"status", "ok"}, {"installation", installation_.name}});
        if (p == "/api/readings" && r.method == "POST") return post_readings(r);
        if (r.method == "GET" && starts_with(p, "/api/forecasts/") && p.size() > 15) return get_forecast(p.substr(15), r);
        if (p == "/api/doms/run" && r.method == "POST") return post_doms(r, false);
        if (p == "/api/doms/whatif" && r.method == "POST") return post_doms(r, true);
        if (r.method == "GET" && p == "/api/grid/topology") return get_topology();
        if (r.method == "GET" && starts_with(p, "/api/registry/")) return get_registry(p.substr(14), r);
        if (r.method == "GET" && (p == "/api/jobs" || p == "/api/jobs/")) return get_jobs(r);
        if (r.method == "GET" && p == "/api/models") return get_models();
        return fail(Error(ErrorCode::not_found, "no such endpoint", {r.method + " " + p}));
    } catch (const Error& e) {
        return fail(e);
    } catch (const std::exception& e) {
        return ApiResponse{500, envelope(json{{"error", {{"code", "internal"}, {"message", e.what()}, {"subjects", json::array()}}}}).dump()};
    }
}

ApiResponse ApiHandler::post_readings(const ApiRequest& r) const
{
    std::vector<ReadingRow> rows;
    const bool csv = r.content_type.find("csv") != std::string::npos || starts_with(r.body, "series_id");
    if (csv) {
        std::istringstream in(r.body);
        rows = parse_readings_csv(in);
    } else {
        const auto body = parse_body(r);
        if (!body.contains("readings") || !body.at("readings").is_array())
            throw Error(ErrorCode::invalid_parameter, "body needs a readings array", {"readings"});
        for (const auto& item : body.at("readings")) {
            if (!item.contains("series_id") || !item.contains("timestamp") || !item.contains("value") ||
                !item.at("value").is_number())
                throw Error(ErrorCode::invalid_parameter, "reading needs series_id, timestamp and numeric value");
            rows.push_back(ReadingRow{item.at("series_id").get<std::string>(),
                                      parse_instant(item.at("timestamp").get<std::string>()), item.at("value").get<double>()});
        }
    }

    // unknown series reject the whole batch, before anything is written
    std::set<std::string> unknown;
    for (const auto& row : rows)
        if (!store_.registry().series(row.series)) unknown.insert(row.series);
    if (!unknown.empty())
        return fail(Error(ErrorCode::unknown_series, "batch refers to unknown series",
                          std::vector<std::string>(unknown.begin(), unknown.end())));

    std::map<std::string, std::vector<std::size_t>> by_series;
    for (std::size_t i = 0; i < rows.size(); ++i) by_series[rows[i].series].push_back(i);

    std::size_t upserted = 0, accepted = 0;
    json rejected = json::array();
    for (const auto& [series, indices] : by_series) {
        std::vector<DataPoint> points;
        for (auto i : indices) points.push_back(DataPoint{rows[i].timestamp, rows[i].value});
        const auto report = store_.ingest(series, points);
        upserted += report.upserted;
        accepted += points.size() - report.rejected.size();
        for (const auto& rej : report.rejected)
            rejected.push_back({{"row", indices[rej.index]},
                                {"series_id", series},
                                {"timestamp", format_instant(rej.timestamp)},
                                {"reason", std::string(to_string(rej.reason))}});
    }
    std::sort(rejected.begin(), rejected.end(),
              [](const json& a, const json& b) { return a.at("row").get<std::size_t>() < b.at("row").get<std::size_t>(); });
    const int status = rejected.empty() ? 200 : 207;
    return reply(status, json{{"received", rows.size()}, {"accepted", accepted}, {"upserted", upserted}, {"rejected", rejected}});
}

ApiResponse ApiHandler::get_forecast(const std::string& series, const ApiRequest& r) const
{
    if (!store_.registry().series(series)) throw Error(ErrorCode::unknown_series, "unknown series", {series});
    const auto as_of = query(r, "as_of");
    const Instant t = as_of ? parse_instant(*as_of) : Instant{std::chrono::seconds{253402300799}}; // 9999-12-31
    const auto record = store_.latest_forecast(series, t);
    if (query(r, "format") == std::optional<std::string>("csv")) {
        std::ostringstream out;
        write_forecast_csv(out, std::span<const ForecastRecord>(&record, 1));
        return ApiResponse{200, out.str(), "text/csv"};
    }
    return reply(200, json{{"forecast", to_wire(record)}});
}

ApiResponse ApiHandler::post_doms(const ApiRequest& r, bool whatif) const
{
    const auto body = parse_body(r);
    const auto issue_time = instant_field(body, "issue_time");
    Adjustments adjustments;
    if (whatif && body.contains("adjustments")) adjustments = adjustments_from_wire(body.at("adjustments"));
    const auto result = doms_.run(issue_time, adjustments);
    return reply(200, json{{"result", to_wire(result)}});
}

ApiResponse ApiHandler::get_topology() const
{
    const auto& t = installation_.topology;
    const auto& reg = *installation_.registry;
    json ranges = json::array();
    for (const auto& range : installation_.ranges)
        ranges.push_back({{"series_id", range.series}, {"low", range.low}, {"high", range.high}});
    json relational = json::array();
    for (const auto& spec : installation_.relational)
        relational.push_back({{"child", spec.model.child}, {"parents", spec.model.parents}, {"fitted", spec.fit}});
    return reply(200, json{{"substations", node_list(t.substations, reg)},
                           {"feeders", node_list(t.feeders, reg)},
                           {"voltage_points", node_list(t.voltage_points, reg)},
                           {"ranges", ranges},
                           {"controllable", installation_.controllables},
                           {"relational_models", relational},
                           {"counts",
                            {{"substations", t.substations.size()},
                             {"feeders", t.feeders.size()},
                             {"voltage_points", t.voltage_points.size()},
                             {"variables", t.size()},
                             {"relational_models", installation_.relational.size()}}}});
}

ApiResponse ApiHandler::get_registry(const std::string& what, const ApiRequest& r) const
{
    const auto& reg = store_.registry();
    json items = json::array();
    if (what == "signals") {
        for (const auto& s : reg.signals()) items.push_back(to_wire(s));
    } else if (what == "entities") {
        const auto kind = query(r, "kind");
        for (const auto& e : reg.entities())
            if (!kind || to_string(e.kind) == *kind) items.push_back(to_wire(e));
    } else if (what == "series") {
        ContextFilter filter;
        filter.signal_fragment = query(r, "signal");
        if (auto kind = query(r, "kind")) filter.kind = parse_entity_kind(*kind);
        if (auto parent = query(r, "parent")) {
            // parent may be given by name or id
            auto id = reg.entity_by_name(*parent);
            if (!id && !reg.entity(*parent)) throw Error(ErrorCode::unknown_entity, "unknown parent entity", {*parent});
            filter.parent = id ? *id : *parent;
        }
        for (const auto& c : reg.search_context(filter)) items.push_back(to_wire(c));
    } else {
        throw Error(ErrorCode::not_found, "no such registry listing", {what});
    }
    return reply(200, json{{"count", items.size()}, {"items", std::move(items)}});
}

ApiResponse ApiHandler::get_jobs(const ApiRequest& r) const
{
    JobFilter filter;
    filter.config_id = query(r, "config");
    if (auto kind = query(r, "kind")) {
        if (*kind == "train") filter.kind = JobKind::train;
        else if (*kind == "score") filter.kind = JobKind::score;
        else throw Error(ErrorCode::invalid_parameter, "kind must be train or score", {*kind});
    }
    if (auto status = query(r, "status")) {
        if (*status == "succeeded") filter.status = JobStatus::succeeded;
        else if (*status == "failed") filter.status = JobStatus::failed;
        else throw Error(ErrorCode::invalid_parameter, "status must be succeeded or failed", {*status});
    }
    const auto jobs = store_.storage().jobs(filter);
    std::size_t limit = jobs.size();
    if (auto l = query(r, "limit")) limit = std::min<std::size_t>(limit, std::stoul(*l));
    json items = json::array();
    // most recent first
    for (std::size_t k = 0; k < limit; ++k) items.push_back(to_wire(jobs[jobs.size() - 1 - k]));
    return reply(200, json{{"count", jobs.size()}, {"items", std::move(items)}});
}

ApiResponse ApiHandler::get_models() const
{
    json items = json::array();
    for (const auto& c : engine_.configs()) {
        json item = c;
        const auto latest = engine_.latest_version(c.id);
        item["latest_version"] = latest ? json(latest->id) : json();
        items.push_back(std::move(item));
    }
    return reply(200, json{{"count", items.size()}, {"items", std::move(items)}});
}

} // namespace gridflex
