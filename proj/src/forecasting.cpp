#include "gridflex/forecasting.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace gridflex {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::size_t steps_per_day(Minutes resolution) { return static_cast<std::size_t>(std::chrono::hours{24} / resolution); }

[[noreturn]] void insufficient(const ModelConfig& c, std::size_t required, std::size_t available, const char* what)
{
    throw Error(ErrorCode::insufficient_history,
                "model " + c.id + " needs " + std::to_string(required) + " " + what + ", has " +
                    std::to_string(available),
                {c.id, std::to_string(required)});
}

std::size_t count_present(const std::vector<double>& v)
{
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double x) { return !std::isnan(x); }));
}

// ---------------------------------------------------------------------------

class Persistence final : public ForecastAlgorithm {
public:
    std::size_t lookback(const ModelConfig&) const override { return 1; }

    nlohmann::json fit(const ModelConfig& config, const FeatureFrame& frame) const override
    {
        const auto n = count_present(frame.target);
        if (n < 1) insufficient(config, 1, n, "points");
        return nlohmann::json::object();
    }

    std::vector<double> predict(const ModelConfig& config, const nlohmann::json&, const FeatureFrame& frame,
                                std::size_t issue_index) const override
    {
        return std::vector<double>(static_cast<std::size_t>(config.horizon), frame.target.at(issue_index));
    }
};

class SeasonalNaive final : public ForecastAlgorithm {
public:
    std::size_t lookback(const ModelConfig& config) const override { return steps_per_day(config.resolution); }

    nlohmann::json fit(const ModelConfig& config, const FeatureFrame& frame) const override
    {
        const auto period = steps_per_day(config.resolution);
        const auto n = count_present(frame.target);
        if (n < period) insufficient(config, period, n, "points");
        return nlohmann::json{{"period", period}};
    }

    std::vector<double> predict(const ModelConfig& config, const nlohmann::json&, const FeatureFrame& frame,
                                std::size_t issue_index) const override
    {
        const auto period = static_cast<long>(steps_per_day(config.resolution));
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(config.horizon));
        for (long h = 1; h <= config.horizon; ++h) {
            const long back = period * ((h + period - 1) / period);
            out.push_back(frame.target.at(static_cast<std::size_t>(static_cast<long>(issue_index) + h - back)));
        }
        return out;
    }
};

class RidgeAutoregressive final : public ForecastAlgorithm {
public:
    std::size_t lookback(const ModelConfig& config) const override
    {
        const auto s = RidgeSettings::from(config);
        int deepest = s.lags.empty() ? 1 : *std::max_element(s.lags.begin(), s.lags.end());
        if (!config.feature_series.empty()) deepest = std::max(deepest, s.feature_lag);
        return static_cast<std::size_t>(deepest);
    }

    nlohmann::json fit(const ModelConfig& config, const FeatureFrame& frame) const override
    {
        const auto s = RidgeSettings::from(config);
        const auto nf = frame.features.size();
        const auto p = s.parameter_count(nf);

        auto value_at = [&](int series, long idx) {
            if (idx < 0 || idx >= static_cast<long>(frame.size())) return kMissing;
            const auto& v = series < 0 ? frame.target : frame.features[static_cast<std::size_t>(series)];
            return v[static_cast<std::size_t>(idx)];
        };

        std::vector<std::vector<double>> rows;
        std::vector<double> y;
        for (std::size_t t = 0; t < frame.size(); ++t) {
            if (std::isnan(frame.target[t])) continue;
            auto row = ridge_design_row(s, nf, frame.time(t), static_cast<long>(t), value_at);
            if (std::any_of(row.begin(), row.end(), [](double x) { return std::isnan(x); })) continue;
            rows.push_back(std::move(row));
            y.push_back(frame.target[t]);
        }
        if (rows.size() < 2 * p) insufficient(config, 2 * p, rows.size(), "samples");

        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < p; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));

        Eigen::MatrixXd gram = x.transpose() * x;
        gram.diagonal().array() += s.ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
        const Eigen::VectorXd beta = ldlt.solve(x.transpose() * yv);
        if (ldlt.info() != Eigen::Success || !beta.allFinite())
            throw Error(ErrorCode::degenerate_parent, "ridge normal equations are singular", {config.id});

        return nlohmann::json{{"coefficients", std::vector<double>(beta.data(), beta.data() + beta.size())},
                              {"lags", s.lags},
                              {"ridge", s.ridge},
                              {"calendar", s.calendar},
                              {"feature_lag", s.feature_lag}};
    }

    std::vector<double> predict(const ModelConfig& config, const nlohmann::json& parameters,
                                const FeatureFrame& frame, std::size_t issue_index) const override
    {
        const auto s = RidgeSettings::from(config);
        const auto beta = parameters.at("coefficients").get<std::vector<double>>();
        const auto nf = frame.features.size();
        if (beta.size() != s.parameter_count(nf))
            throw Error(ErrorCode::dimension_mismatch, "stored coefficients do not match the model", {config.id});

        std::vector<double> predicted;
        predicted.reserve(static_cast<std::size_t>(config.horizon));
        const auto issue = static_cast<long>(issue_index);
        auto value_at = [&](int series, long idx) -> double {
            if (series < 0 && idx > issue) return predicted.at(static_cast<std::size_t>(idx - issue - 1));
            if (idx < 0 || idx > issue) return kMissing;
            const auto& v = series < 0 ? frame.target : frame.features[static_cast<std::size_t>(series)];
            return v[static_cast<std::size_t>(idx)];
        };
        for (long h = 1; h <= config.horizon; ++h) {
            const long t = issue + h;
            const auto row = ridge_design_row(s, nf, frame.time(static_cast<std::size_t>(t)), t, value_at);
            double yhat = 0.0;
            for (std::size_t j = 0; j < row.size(); ++j) yhat += beta[j] * row[j];
            predicted.push_back(yhat);
        }
        return predicted;
    }
};

Instant epoch_of(const nlohmann::json& j) { return parse_instant(j.get<std::string>()); }

nlohmann::json recurrence_json(const Recurrence& r)
{
    return nlohmann::json{{"anchor", format_instant(r.anchor)}, {"interval_minutes", r.interval.count()}};
}

Recurrence recurrence_from(const nlohmann::json& j)
{
    return Recurrence{epoch_of(j.at("anchor")), Minutes{j.at("interval_minutes").get<long>()}};
}

} // namespace

std::string to_string(Algorithm a)
{
    switch (a) {
    case Algorithm::persistence: return "persistence";
    case Algorithm::seasonal_naive: return "seasonal_naive";
    case Algorithm::ridge_autoregressive: return "ridge_autoregressive";
    }
    return "persistence";
}

Algorithm parse_algorithm(const std::string& text)
{
    for (auto a : {Algorithm::persistence, Algorithm::seasonal_naive, Algorithm::ridge_autoregressive})
        if (to_string(a) == text) return a;
    throw Error(ErrorCode::invalid_config, "unknown forecasting algorithm", {text});
}

std::vector<Instant> Recurrence::occurrences(Instant after, Instant upto) const
{
    std::vector<Instant> out;
    const auto step = std::chrono::duration_cast<std::chrono::seconds>(interval).count();
    if (step <= 0 || upto <= after) return out;
    const auto offset = (after - anchor).count();
    auto k = offset / step;
    if (offset % step != 0 && offset < 0) --k; // floor
    ++k;
    for (auto t = anchor + std::chrono::seconds{k * step}; t <= upto; t += std::chrono::seconds{step}) out.push_back(t);
    return out;
}

void ModelConfig::validate() const
{
    if (id.empty() || target.empty()) throw Error(ErrorCode::invalid_config, "model config needs id and target", {id});
    if (resolution.count() <= 0 || horizon <= 0 ||
        resolution * static_cast<long>(horizon) != std::chrono::minutes{24 * 60})
        throw Error(ErrorCode::invalid_config, "horizon x resolution must span 24 h", {id});
    if (train_schedule.interval.count() <= 0 || score_schedule.interval.count() <= 0)
        throw Error(ErrorCode::invalid_config, "schedule interval must be positive", {id});
}

void to_json(nlohmann::json& j, const ModelConfig& c)
{
    j = nlohmann::json{{"id", c.id},
                       {"target", c.target},
                       {"algorithm", to_string(c.algorithm)},
                       {"hyperparameters", c.hyperparameters},
                       {"feature_series", c.feature_series},
                       {"train", recurrence_json(c.train_schedule)},
                       {"score", recurrence_json(c.score_schedule)},
                       {"horizon", c.horizon},
                       {"resolution_minutes", c.resolution.count()}};
}

void from_json(const nlohmann::json& j, ModelConfig& c)
{
    c.id = j.at("id").get<std::string>();
    c.target = j.at("target").get<std::string>();
    c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    c.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
    c.feature_series = j.value("feature_series", std::vector<std::string>{});
    if (j.contains("train")) c.train_schedule = recurrence_from(j.at("train"));
    if (j.contains("score")) c.score_schedule = recurrence_from(j.at("score"));
    c.horizon = j.value("horizon", kHorizonSteps);
    c.resolution = Minutes{j.value("resolution_minutes", 15L)};
}

void to_json(nlohmann::json& j, const ModelVersion& v)
{
    j = nlohmann::json{{"id", v.id},
                       {"config_id", v.config_id},
                       {"algorithm", to_string(v.algorithm)},
                       {"trained_at", format_instant(v.trained_at)},
                       {"parameters", v.parameters},
                       {"residual_variance_per_step", v.residual_variance_per_step},
                       {"training_window", {{"from", format_instant(v.window_from)}, {"to", format_instant(v.window_to)}}}};
}

void from_json(const nlohmann::json& j, ModelVersion& v)
{
    v.id = j.value("id", std::string());
    v.config_id = j.at("config_id").get<std::string>();
    v.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    v.trained_at = epoch_of(j.at("trained_at"));
    v.parameters = j.at("parameters");
    v.residual_variance_per_step = j.at("residual_variance_per_step").get<std::vector<double>>();
    v.window_from = epoch_of(j.at("training_window").at("from"));
    v.window_to = epoch_of(j.at("training_window").at("to"));
}

RidgeSettings RidgeSettings::from(const ModelConfig& config)
{
    RidgeSettings s;
    const auto& h = config.hyperparameters;
    if (h.contains("lags")) s.lags = h.at("lags").get<std::vector<int>>();
    s.ridge = h.value("ridge", s.ridge);
    s.calendar = h.value("calendar", s.calendar);
    s.feature_lag = h.value("feature_lag", static_cast<int>(steps_per_day(config.resolution)));
    for (int lag : s.lags)
        if (lag < 1) throw Error(ErrorCode::invalid_config, "lags must be positive", {config.id});
    if (s.feature_lag < config.horizon)
        throw Error(ErrorCode::invalid_config, "feature lag must cover the horizon", {config.id});
    if (s.ridge < 0.0) throw Error(ErrorCode::invalid_config, "ridge must be non-negative", {config.id});
    if (s.calendar && s.ridge == 0.0)
        throw Error(ErrorCode::invalid_config, "calendar one-hot features need a positive ridge", {config.id});
    return s;
}

std::size_t RidgeSettings::parameter_count(std::size_t feature_count) const
{
    return lags.size() + feature_count + (calendar ? 31 : 1);
}

std::unique_ptr<ForecastAlgorithm> make_algorithm(Algorithm a)
{
    switch (a) {
    case Algorithm::persistence: return std::make_unique<Persistence>();
    case Algorithm::seasonal_naive: return std::make_unique<SeasonalNaive>();
    case Algorithm::ridge_autoregressive: return std::make_unique<RidgeAutoregressive>();
    }
    return std::make_unique<Persistence>();
}

void fill_gaps(std::vector<double>& values, std::size_t from_index, std::size_t max_gap, const std::string& series)
{
    std::size_t run = 0;
    bool seen = false;
    double last = kMissing;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isnan(values[i])) {
            seen = true;
            last = values[i];
            run = 0;
            continue;
        }
        ++run;
        if (i < from_index) continue;
        if (!seen || run > max_gap)
            throw Error(ErrorCode::gap_too_large, "history gap longer than " + std::to_string(max_gap) + " steps",
                        {series});
        values[i] = last;
    }
}

// ---------------------------------------------------------------------------

ForecastingEngine::ForecastingEngine(TimeseriesStore& store, std::vector<ModelConfig> configs)
    : store_(store), configs_(std::move(configs))
{
    for (std::size_t i = 0; i < configs_.size(); ++i) {
        configs_[i].validate();
        if (!store_.registry().series(configs_[i].target))
            throw Error(ErrorCode::unknown_series, "model target is not a declared series",
                        {configs_[i].id, configs_[i].target});
        if (!by_id_.emplace(configs_[i].id, i).second)
            throw Error(ErrorCode::invalid_config, "duplicate model config id", {configs_[i].id});
    }
}

const ModelConfig& ForecastingEngine::config(const std::string& id) const
{
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw Error(ErrorCode::not_found, "unknown model config", {id});
    return configs_[it->second];
}

FeatureFrame ForecastingEngine::load_frame(const ModelConfig& config, Instant from, Instant to) const
{
    FeatureFrame frame;
    frame.start = from;
    frame.resolution = config.resolution;
    const auto n = to > from ? static_cast<std::size_t>((to - from) / config.resolution) : 0;

    auto load = [&](const std::string& series) {
        std::vector<double> values(n, kMissing);
        for (const auto& p : store_.read_range(series, from, to)) {
            const auto offset = p.timestamp - from;
            if (offset % config.resolution != std::chrono::seconds{0}) continue;
            const auto idx = static_cast<std::size_t>(offset / config.resolution);
            if (idx < n) values[idx] = p.value;
        }
        return values;
    };
    frame.target = load(config.target);
    for (const auto& f : config.feature_series) frame.features.push_back(load(f));
    return frame;
}

ModelVersion ForecastingEngine::train(const ModelConfig& config, Instant as_of) const
{
    const auto alg = make_algorithm(config.algorithm);
    const auto days = config.hyperparameters.value("training_days", 28);
    const auto from = floor_to(as_of - std::chrono::hours{24} * days, config.resolution);
    // [from, as_of): nothing at or after as_of is read
    const auto history = load_frame(config, from, as_of);

    ModelVersion version;
    version.config_id = config.id;
    version.algorithm = config.algorithm;
    version.trained_at = as_of;
    version.window_from = from;
    version.window_to = as_of;
    const auto horizon = static_cast<std::size_t>(config.horizon);
    const auto period = steps_per_day(config.resolution);

    if (config.algorithm == Algorithm::persistence) {
        version.parameters = alg->fit(config, history);
        double sum = 0.0, sum_sq = 0.0;
        std::size_t n = 0;
        for (std::size_t t = period; t < history.size(); ++t) {
            const double a = history.target[t], b = history.target[t - period];
            if (std::isnan(a) || std::isnan(b)) continue;
            const double d = a - b;
            sum += d;
            sum_sq += d * d;
            ++n;
        }
        const double var = n > 1 ? std::max(0.0, (sum_sq - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1)) : 0.0;
        version.residual_variance_per_step.assign(horizon, var);
        return version;
    }

    // Span of observed history decides between a holdout and in-sample residuals.
    std::size_t first = history.size(), last = 0;
    for (std::size_t t = 0; t < history.size(); ++t)
        if (!std::isnan(history.target[t])) {
            first = std::min(first, t);
            last = t;
        }
    const auto full_params = alg->fit(config, history);
    const bool long_history = first < history.size() && history.time(last) - history.time(first) >= std::chrono::hours{24 * 14};

    std::size_t eval_from = alg->lookback(config) - 1;
    nlohmann::json eval_params = full_params;
    if (long_history) {
        const auto holdout_start = as_of - std::chrono::hours{24 * 7};
        const auto split = std::min(history.size(),
                                    static_cast<std::size_t>((holdout_start - history.start) / config.resolution));
        FeatureFrame prefix = history;
        prefix.target.resize(split);
        for (auto& f : prefix.features) f.resize(split);
        try {
            eval_params = alg->fit(config, prefix);
            eval_from = std::max(eval_from, split);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::insufficient_history) throw;
        }
    }

    FeatureFrame filled = history;
    auto locf = [](std::vector<double>& v) {
        double last_value = kMissing;
        for (auto& x : v) {
            if (std::isnan(x)) x = last_value;
            else last_value = x;
        }
    };
    locf(filled.target);
    for (auto& f : filled.features) locf(f);

    std::vector<double> sq(horizon, 0.0);
    std::vector<std::size_t> count(horizon, 0);
    const auto hour_steps = static_cast<std::size_t>(std::chrono::hours{1} / config.resolution);
    const auto lookback = alg->lookback(config);
    for (std::size_t k = eval_from; k < history.size(); ++k) {
        if (!is_aligned(history.time(k), Minutes{60}) || hour_steps == 0) continue;
        if (k + 1 < lookback) continue;
        bool ready = true;
        for (std::size_t i = k + 1 - lookback; i <= k && ready; ++i) {
            if (std::isnan(filled.target[i])) ready = false;
            for (const auto& f : filled.features)
                if (std::isnan(f[i])) ready = false;
        }
        if (!ready) continue;
        const auto forecast = alg->predict(config, eval_params, filled, k);
        for (std::size_t h = 1; h <= horizon && k + h < history.size(); ++h) {
            const double actual = history.target[k + h];
            if (std::isnan(actual)) continue;
            const double e = forecast[h - 1] - actual;
            sq[h - 1] += e * e;
            ++count[h - 1];
        }
    }
    double total = 0.0;
    std::size_t total_n = 0;
    for (std::size_t h = 0; h < horizon; ++h) {
        total += sq[h];
        total_n += count[h];
    }
    const double fallback = total_n ? total / static_cast<double>(total_n) : 0.0;
    version.residual_variance_per_step.resize(horizon);
    for (std::size_t h = 0; h < horizon; ++h)
        version.residual_variance_per_step[h] = count[h] ? sq[h] / static_cast<double>(count[h]) : fallback;
    version.parameters = full_params;
    return version;
}

ForecastRecord ForecastingEngine::score(const ModelVersion& version, Instant issue_time) const
{
    const auto& cfg = config(version.config_id);
    if (!is_aligned(issue_time, Minutes{60}))
        throw Error(ErrorCode::invalid_parameter, "issue time must lie on the hourly grid", {format_instant(issue_time)});
    const auto alg = make_algorithm(cfg.algorithm);
    const auto lookback = alg->lookback(cfg);
    const auto margin = kMaxGapSteps;
    const auto from = issue_time - cfg.resolution * static_cast<long>(lookback - 1 + margin);
    auto frame = load_frame(cfg, from, issue_time + cfg.resolution);

    fill_gaps(frame.target, margin, kMaxGapSteps, cfg.target);
    for (std::size_t f = 0; f < frame.features.size(); ++f)
        fill_gaps(frame.features[f], margin, kMaxGapSteps, cfg.feature_series[f]);

    const auto values = alg->predict(cfg, version.parameters, frame, frame.size() - 1);

    ForecastRecord record;
    record.series = cfg.target;
    record.model_version = version.id;
    record.issue_time = issue_time;
    record.points.reserve(values.size());
    for (std::size_t h = 0; h < values.size(); ++h)
        record.points.push_back(DataPoint{issue_time + cfg.resolution * static_cast<long>(h + 1), values[h]});
    return record;
}

ModelVersion& ForecastingEngine::save_version(ModelVersion& version)
{
    version.id.clear();
    const auto n = store_.storage().put_metadata("model-version", version.config_id, nlohmann::json(version).dump(),
                                                 version.trained_at);
    version.id = version.config_id + "@v" + std::to_string(n);
    return version;
}

std::optional<ModelVersion> ForecastingEngine::version(const std::string& version_id) const
{
    const auto at = version_id.rfind("@v");
    if (at == std::string::npos) return std::nullopt;
    int n = 0;
    try {
        n = std::stoi(version_id.substr(at + 2));
    } catch (...) {
        return std::nullopt;
    }
    const auto record = store_.storage().metadata("model-version", version_id.substr(0, at), n);
    if (!record) return std::nullopt;
    auto v = nlohmann::json::parse(record->body).get<ModelVersion>();
    v.id = version_id;
    return v;
}

std::optional<ModelVersion> ForecastingEngine::latest_version(const std::string& config_id,
                                                              std::optional<Instant> trained_by) const
{
    auto record = store_.storage().metadata("model-version", config_id);
    while (record) {
        auto v = nlohmann::json::parse(record->body).get<ModelVersion>();
        v.id = config_id + "@v" + std::to_string(record->version);
        if (!trained_by || v.trained_at <= *trained_by) return v;
        if (record->version <= 1) break;
        record = store_.storage().metadata("model-version", config_id, record->version - 1);
    }
    return std::nullopt;
}

} // namespace gridflex
