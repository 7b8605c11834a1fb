#include "gridflex/doms.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <set>
#include <thread>
#include <tuple>

namespace gridflex {

namespace {

const char* to_string(RelationKind k) { return k == RelationKind::linear ? "linear" : "mlp_linearized"; }

Instant step_time(Instant issue_time, int step) { return issue_time + kDefaultResolution * (step + 1); }

// Runs f(0..n-1) on a few threads. Exceptions are rethrown for the lowest
// failing index so the outcome does not depend on scheduling.
template <typename F>
void parallel_for(int n, F&& f)
{
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    const unsigned workers = std::clamp(std::thread::hardware_concurrency(), 1u, static_cast<unsigned>(std::max(n, 1)));
    {
        std::vector<std::jthread> threads;
        for (unsigned w = 0; w < workers; ++w)
            threads.emplace_back([&] {
                for (int i = next++; i < n; i = next++) {
                    try {
                        f(i);
                    } catch (...) {
                        errors[static_cast<std::size_t>(i)] = std::current_exception();
                    }
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace

void to_json(nlohmann::json& j, const RelationalModel& m)
{
    j = nlohmann::json{{"child", m.child},
                       {"parents", m.parents},
                       {"kind", to_string(m.kind)},
                       {"weights", std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size())},
                       {"bias", m.bias},
                       {"residual_variance", m.residual_variance}};
    if (m.operating_point)
        j["operating_point"] =
            std::vector<double>(m.operating_point->data(), m.operating_point->data() + m.operating_point->size());
}

void from_json(const nlohmann::json& j, RelationalModel& m)
{
    m.child = j.at("child").get<std::string>();
    m.parents = j.at("parents").get<std::vector<std::string>>();
    m.kind = j.value("kind", std::string("linear")) == "linear" ? RelationKind::linear : RelationKind::mlp_linearized;
    const auto w = j.at("weights").get<std::vector<double>>();
    m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.bias = j.at("bias").get<double>();
    m.residual_variance = j.at("residual_variance").get<double>();
    m.operating_point.reset();
    if (j.contains("operating_point")) {
        const auto op = j.at("operating_point").get<std::vector<double>>();
        m.operating_point = Eigen::Map<const Eigen::VectorXd>(op.data(), static_cast<Eigen::Index>(op.size()));
    }
}

struct DomsService::Inputs {
    Instant issue_time{};
    std::vector<RelationalModel> models;
    std::map<std::string, std::vector<GaussianEstimate>> forecasts; // series -> per step
    std::map<std::string, std::map<int, GaussianEstimate>> readings;
    std::map<std::string, std::string> versions;
};

DomsService::DomsService(const Installation& installation, TimeseriesStore& store, const ForecastingEngine& engine)
    : installation_(installation), store_(store), engine_(engine)
{
}

std::vector<RelationalModel> DomsService::fit_relational_models(Instant as_of)
{
    const Instant from = as_of - std::chrono::hours{24} * installation_.settings.fit_days;
    std::vector<RelationalModel> fitted;
    for (const auto& spec : installation_.relational) {
        if (!spec.fit) continue;
        const auto& m = spec.model;

        // inner join of child and parents on timestamp
        std::map<Instant, std::vector<double>> rows;
        const auto columns = m.parents.size() + 1;
        auto add = [&](const std::string& series, std::size_t col) {
            for (const auto& p : store_.read_range(series, from, as_of)) {
                auto& row = rows[p.timestamp];
                if (row.empty()) row.assign(columns, std::nan(""));
                row[col] = p.value;
            }
        };
        add(m.child, 0);
        for (std::size_t k = 0; k < m.parents.size(); ++k) add(m.parents[k], k + 1);

        std::vector<const std::vector<double>*> complete;
        for (const auto& [t, row] : rows)
            if (std::none_of(row.begin(), row.end(), [](double x) { return std::isnan(x); })) complete.push_back(&row);

        const auto n = static_cast<Eigen::Index>(complete.size());
        Eigen::VectorXd y(n);
        Eigen::MatrixXd x(n, static_cast<Eigen::Index>(m.parents.size()));
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& row = *complete[static_cast<std::size_t>(i)];
            y(i) = row[0];
            for (Eigen::Index k = 0; k < x.cols(); ++k) x(i, k) = row[static_cast<std::size_t>(k) + 1];
        }
        RelationalModel model;
        try {
            model = fit_linear_model(y, x, FitOptions{spec.ridge, installation_.settings.residual_floor});
        } catch (const Error& e) {
            throw Error(e.code(), std::string("fitting relational model for ") + m.child + ": " + e.what(), {m.child});
        }
        model.child = m.child;
        model.parents = m.parents;
        store_.storage().put_metadata(kRelationalModelKind, m.child, nlohmann::json(model).dump(), as_of);
        fitted.push_back(std::move(model));
    }
    return fitted;
}

std::vector<RelationalModel> DomsService::relational_models() const
{
    std::vector<RelationalModel> out;
    for (const auto& spec : installation_.relational) {
        if (!spec.fit) {
            out.push_back(spec.model);
            continue;
        }
        const auto record = store_.storage().metadata(kRelationalModelKind, spec.model.child);
        if (!record)
            throw Error(ErrorCode::not_found, "relational model has not been fitted", {spec.model.child});
        auto model = nlohmann::json::parse(record->body).get<RelationalModel>();
        if (model.parents != spec.model.parents)
            throw Error(ErrorCode::not_found, "stored relational model does not match the configured parents",
                        {spec.model.child});
        out.push_back(std::move(model));
    }
    return out;
}

DomsService::Inputs DomsService::gather(Instant issue_time) const
{
    if (!is_aligned(issue_time, kDefaultResolution))
        throw Error(ErrorCode::misaligned_timestamp, "issue time is not on the 15-minute grid",
                    {format_instant(issue_time)});

    Inputs in;
    in.issue_time = issue_time;
    in.models = relational_models();

    const auto grid_series = installation_.topology.series();
    std::set<std::string> forecasted;
    for (const auto& c : installation_.models)
        if (std::binary_search(grid_series.begin(), grid_series.end(), c.target)) forecasted.insert(c.target);

    const double floor = installation_.settings.residual_floor;
    std::map<std::string, std::optional<ModelVersion>> version_cache;
    std::vector<std::string> missing;
    for (const auto& series : forecasted) {
        const auto record = store_.find_latest_forecast(series, issue_time);
        if (!record) {
            missing.push_back(series);
            continue;
        }
        auto cached = version_cache.find(record->model_version);
        if (cached == version_cache.end())
            cached = version_cache.emplace(record->model_version, engine_.version(record->model_version)).first;
        const auto& version = cached->second;

        std::map<Instant, std::size_t> index;
        for (std::size_t k = 0; k < record->points.size(); ++k) index.emplace(record->points[k].timestamp, k);

        std::vector<GaussianEstimate> steps(kHorizonSteps);
        bool covered = true;
        for (int s = 0; s < kHorizonSteps && covered; ++s) {
            auto it = index.find(step_time(issue_time, s));
            if (it == index.end()) {
                covered = false;
                break;
            }
            const auto k = it->second;
            steps[static_cast<std::size_t>(s)].mean = record->points[k].value;
            // no version record: the build default applies (variance <= 0)
            if (version && k < version->residual_variance_per_step.size())
                steps[static_cast<std::size_t>(s)].variance = std::max(version->residual_variance_per_step[k], floor);
        }
        if (!covered) {
            missing.push_back(series);
            continue;
        }
        in.forecasts.emplace(series, std::move(steps));
        in.versions.emplace(series, record->model_version);
    }
    if (!missing.empty())
        throw Error(ErrorCode::missing_forecast, "no forecast covers the horizon for " + missing.front(), missing);

    const double rel = installation_.settings.reading_relative_sd;
    for (const auto& series : grid_series) {
        for (const auto& p : store_.read_range(series, step_time(issue_time, 0), step_time(issue_time, kHorizonSteps))) {
            const auto step = static_cast<int>((p.timestamp - issue_time) / kDefaultResolution) - 1;
            const double sd = rel * std::abs(p.value);
            in.readings[series][step] = GaussianEstimate{p.value, std::max(sd * sd, floor)};
        }
    }
    return in;
}

GraphBuildInput DomsService::step_input(const Inputs& in, int step) const
{
    GraphBuildInput input;
    input.topology = installation_.topology;
    input.ranges = installation_.ranges;
    input.models = in.models;
    for (const auto& [series, steps] : in.forecasts) input.forecasts.emplace(series, steps[static_cast<std::size_t>(step)]);
    for (const auto& [series, by_step] : in.readings) {
        auto it = by_step.find(step);
        if (it != by_step.end()) input.readings.emplace(series, it->second);
    }
    return input;
}

GridGraph DomsService::step_graph(Instant issue_time, int step) const
{
    if (step < 0 || step >= kHorizonSteps)
        throw Error(ErrorCode::invalid_parameter, "step out of range", {std::to_string(step)});
    const auto in = gather(issue_time);
    return build_graph(step_input(in, step), step, installation_.build_options());
}

void DomsService::validate(const Adjustments& adjustments) const
{
    const auto grid_series = installation_.topology.series();
    for (const auto& [series, list] : adjustments) {
        if (!installation_.controllables.count(series)) {
            const bool known = std::binary_search(grid_series.begin(), grid_series.end(), series);
            throw Error(known ? ErrorCode::not_controllable : ErrorCode::unknown_series,
                        known ? "series is not controllable" : "series is not part of the grid model", {series});
        }
        std::set<int> seen;
        for (const auto& a : list) {
            if (a.step < 0 || a.step >= kHorizonSteps)
                throw Error(ErrorCode::invalid_parameter, "adjustment step out of range [0, 95]",
                            {series, std::to_string(a.step)});
            if (!std::isfinite(a.delta))
                throw Error(ErrorCode::invalid_parameter, "adjustment delta must be finite", {series});
            if (!seen.insert(a.step).second)
                throw Error(ErrorCode::invalid_parameter, "step adjusted twice", {series, std::to_string(a.step)});
        }
    }
}

DomsRunResult DomsService::run(Instant issue_time, const Adjustments& adjustments) const
{
    validate(adjustments);
    const auto in = gather(issue_time);

    std::vector<std::vector<std::pair<std::string, double>>> pins(kHorizonSteps);
    for (const auto& [series, list] : adjustments)
        for (const auto& a : list)
            if (a.delta != 0.0) pins[static_cast<std::size_t>(a.step)].emplace_back(series, a.delta);

    const auto& settings = installation_.settings;
    const auto build_options = installation_.build_options();
    const auto flex_options = installation_.flex_options();

    struct StepOutput {
        StepSummary summary;
        std::vector<Violation> violations;
        std::vector<FlexRequest> requests;
        std::string note;
    };
    std::vector<StepOutput> outputs(kHorizonSteps);

    parallel_for(kHorizonSteps, [&](int s) {
        auto& out = outputs[static_cast<std::size_t>(s)];
        const Instant t = step_time(issue_time, s);
        auto graph = build_graph(step_input(in, s), s, build_options);
        auto posterior = infer(graph.graph);

        const auto& step_pins = pins[static_cast<std::size_t>(s)];
        if (!step_pins.empty()) {
            for (const auto& [series, delta] : step_pins) {
                const auto v = graph.variable(series);
                graph.graph.add_factor(prior_factor(v, posterior.mean_of(v) + delta, settings.residual_floor));
            }
            posterior = infer(graph.graph);
        }

        out.summary.step = s;
        out.summary.timestamp = t;
        for (const auto& [series, v] : graph.series)
            out.summary.estimates.push_back(SeriesEstimate{series, posterior.mean_of(v), posterior.sd_of(v)});

        out.violations = detect_violations(posterior, graph, installation_.ranges, settings.p_threshold, t);
        std::vector<Violation> coverable;
        for (const auto& v : out.violations)
            if (!installation_.controllables.count(v.series)) coverable.push_back(v);
        if (coverable.empty() || installation_.controllables.empty()) return;
        try {
            out.requests = estimate_flexibility(graph, coverable, installation_.controllables, flex_options);
        } catch (const Error& e) {
            out.note = "step " + std::to_string(s) + ": " + std::string(to_string(e.code())) + ": " + e.what();
        }
    });

    DomsRunResult result;
    result.issue_time = issue_time;
    result.forecast_versions = in.versions;
    for (auto& out : outputs) {
        result.steps.push_back(std::move(out.summary));
        result.violations.insert(result.violations.end(), out.violations.begin(), out.violations.end());
        result.requests.insert(result.requests.end(), out.requests.begin(), out.requests.end());
        if (!out.note.empty()) result.notes.push_back(std::move(out.note));
    }
    result.windows = aggregate_requests(result.requests);
    return result;
}

} // namespace gridflex
