#include "gridflex/wire.hpp"

namespace gridflex {

using nlohmann::json;

json to_wire(const Violation& v)
{
    return json{{"series_id", v.series},
                {"step", v.step},
                {"timestamp", format_instant(v.timestamp)},
                {"bound", to_string(v.bound)},
                {"limit", v.limit},
                {"predicted_mean", v.predicted_mean},
                {"predicted_sd", v.predicted_sd},
                {"exceedance_probability", v.exceedance_probability}};
}

json to_wire(const FlexRequest& r)
{
    return json{{"series_id", r.series},
                {"step", r.step},
                {"timestamp", format_instant(r.timestamp)},
                {"amount", r.amount},
                {"covering", {{"series_id", r.covering.series}, {"step", r.covering.step}, {"bound", to_string(r.covering.bound)}}}};
}

json to_wire(const FlexWindow& w)
{
    return json{{"series_id", w.series},
                {"start_step", w.start_step},
                {"end_step", w.end_step},
                {"start", format_instant(w.start)},
                {"end", format_instant(w.end)},
                {"amounts", w.amounts},
                {"energy", w.energy}};
}

json to_wire(const DomsRunResult& r)
{
    json steps = json::array();
    for (const auto& s : r.steps) {
        json est = json::array();
        for (const auto& e : s.estimates) est.push_back({{"series_id", e.series}, {"mean", e.mean}, {"sd", e.sd}});
        steps.push_back({{"step", s.step}, {"timestamp", format_instant(s.timestamp)}, {"estimates", std::move(est)}});
    }
    json violations = json::array();
    for (const auto& v : r.violations) violations.push_back(to_wire(v));
    json requests = json::array();
    for (const auto& q : r.requests) requests.push_back(to_wire(q));
    json windows = json::array();
    for (const auto& w : r.windows) windows.push_back(to_wire(w));
    return json{{"issue_time", format_instant(r.issue_time)},
                {"steps", std::move(steps)},
                {"violations", std::move(violations)},
                {"requests", std::move(requests)},
                {"flex_windows", std::move(windows)},
                {"forecast_versions", r.forecast_versions},
                {"notes", r.notes}};
}

json to_wire(const ForecastRecord& f)
{
    json points = json::array();
    for (const auto& p : f.points) points.push_back({{"timestamp", format_instant(p.timestamp)}, {"value", p.value}});
    return json{{"id", f.id},
                {"series_id", f.series},
                {"model_version", f.model_version},
                {"issue_time", format_instant(f.issue_time)},
                {"points", std::move(points)}};
}

json to_wire(const Signal& s) { return json{{"id", s.id}, {"name", s.name}, {"unit", s.unit}}; }

json to_wire(const Entity& e)
{
    return json{{"id", e.id}, {"name", e.name}, {"kind", to_string(e.kind)}, {"parent", e.parent ? json(*e.parent) : json()}};
}

json to_wire(const SeriesContext& c)
{
    return json{{"id", c.series.id},
                {"resolution_minutes", c.series.resolution.count()},
                {"signal", to_wire(c.signal)},
                {"entity", to_wire(c.entity)}};
}

json to_wire(const JobRecord& j)
{
    return json{{"id", j.id},
                {"config_id", j.config_id},
                {"kind", to_string(j.kind)},
                {"scheduled", format_instant(j.scheduled)},
                {"status", to_string(j.status)},
                {"detail", j.detail},
                {"result", j.result}};
}

Adjustments adjustments_from_wire(const json& j)
{
    Adjustments out;
    if (j.is_null()) return out;
    if (!j.is_object()) throw Error(ErrorCode::invalid_parameter, "adjustments must be an object keyed by series id");
    for (const auto& [series, list] : j.items()) {
        auto& target = out[series];
        for (const auto& a : list) {
            if (!a.contains("step") || !a.contains("delta") || !a.at("step").is_number_integer() || !a.at("delta").is_number())
                throw Error(ErrorCode::invalid_parameter, "adjustment needs integer step and numeric delta", {series});
            target.push_back(Adjustment{a.at("step").get<int>(), a.at("delta").get<double>()});
        }
    }
    return out;
}

json envelope(json payload)
{
    payload["schema"] = kWireSchema;
    return payload;
}

json error_body(const Error& e)
{
    return envelope(json{{"error", {{"code", std::string(to_string(e.code()))}, {"message", e.what()}, {"subjects", e.subjects()}}}});
}

} // namespace gridflex
