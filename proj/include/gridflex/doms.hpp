#ifndef GRIDFLEX_DOMS_HPP
#define GRIDFLEX_DOMS_HPP

#include "gridflex/flexibility.hpp"
#include "gridflex/forecasting.hpp"
#include "gridflex/installation.hpp"
#include "gridflex/timeseries_store.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace gridflex {

struct SeriesEstimate {
    std::string series;
    double mean = 0.0;
    double sd = 0.0;
};

struct StepSummary {
    int step = 0;
    Instant timestamp{};
    std::vector<SeriesEstimate> estimates; // sorted by series
};

struct Adjustment {
    int step = 0;
    double delta = 0.0;
};

using Adjustments = std::map<std::string, std::vector<Adjustment>>;

struct DomsRunResult {
    Instant issue_time{};
    std::vector<StepSummary> steps;
    std::vector<Violation> violations;
    std::vector<FlexRequest> requests;
    std::vector<FlexWindow> windows;
    std::map<std::string, std::string> forecast_versions; // series -> model version used
    std::vector<std::string> notes;                        // steps whose flexibility could not be estimated
};

void to_json(nlohmann::json& j, const RelationalModel& m);
void from_json(const nlohmann::json& j, RelationalModel& m);

inline constexpr const char* kRelationalModelKind = "relational-model";

/// Grid decision support: per-step graphs from the latest forecasts and
/// readings, violation detection and flexibility estimation.
class DomsService {
public:
    DomsService(const Installation& installation, TimeseriesStore& store, const ForecastingEngine& engine);

    /// Fits every declared-to-fit relational model on the `fit_days` before
    /// `as_of` and stores the result as a new metadata version.
    std::vector<RelationalModel> fit_relational_models(Instant as_of);

    /// Fixed models plus the latest fitted version of the others; throws
    /// not_found when a model was never fitted.
    std::vector<RelationalModel> relational_models() const;

    /// Graph of one horizon step, before any what-if adjustment.
    GridGraph step_graph(Instant issue_time, int step) const;

    /// Baseline run, or a what-if when `adjustments` is non-empty. Each
    /// non-zero delta pins its controllable at baseline mean + delta.
    DomsRunResult run(Instant issue_time, const Adjustments& adjustments = {}) const;

    const Installation& installation() const noexcept { return installation_; }

private:
    struct Inputs;
    Inputs gather(Instant issue_time) const;
    GraphBuildInput step_input(const Inputs& in, int step) const;
    void validate(const Adjustments& adjustments) const;

    const Installation& installation_;
    TimeseriesStore& store_;
    const ForecastingEngine& engine_;
};

} // namespace gridflex

#endif // GRIDFLEX_DOMS_HPP
