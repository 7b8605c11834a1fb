#ifndef GRIDFLEX_WIRE_HPP
#define GRIDFLEX_WIRE_HPP

// JSON bodies exchanged over the HTTP interface. Timestamps are RFC 3339 UTC.

#include "gridflex/doms.hpp"
#include "gridflex/registry.hpp"
#include "gridflex/timeseries_store.hpp"

#include <json.hpp>

namespace gridflex {

inline constexpr const char* kWireSchema = "gridflex/v1";

nlohmann::json to_wire(const Violation& v);
nlohmann::json to_wire(const FlexRequest& r);
nlohmann::json to_wire(const FlexWindow& w);
nlohmann::json to_wire(const DomsRunResult& r);
nlohmann::json to_wire(const ForecastRecord& f);
nlohmann::json to_wire(const Signal& s);
nlohmann::json to_wire(const Entity& e);
nlohmann::json to_wire(const SeriesContext& c);
nlohmann::json to_wire(const JobRecord& j);

/// `{"<series>": [{"step": s, "delta": d}, ...]}`
Adjustments adjustments_from_wire(const nlohmann::json& j);

/// Wraps a payload object with the schema field.
nlohmann::json envelope(nlohmann::json payload);
nlohmann::json error_body(const Error& e);

} // namespace gridflex

#endif // GRIDFLEX_WIRE_HPP
