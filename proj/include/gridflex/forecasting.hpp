#ifndef GRIDFLEX_FORECASTING_HPP
#define GRIDFLEX_FORECASTING_HPP

#include "gridflex/time.hpp"
#include "gridflex/timeseries_store.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gridflex {

enum class Algorithm { persistence, seasonal_naive, ridge_autoregressive };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& text);

/// Fixed-interval recurrence: anchor + k * interval for every integer k.
struct Recurrence {
    Instant anchor{};
    Minutes interval{60};

    /// Occurrences in the half-open interval (after, upto].
    std::vector<Instant> occurrences(Instant after, Instant upto) const;
};

struct ModelConfig {
    std::string id;
    std::string target;
    Algorithm algorithm = Algorithm::persistence;
    nlohmann::json hyperparameters = nlohmann::json::object();
    std::vector<std::string> feature_series;
    Recurrence train_schedule{Instant{} + std::chrono::hours{2}, Minutes{24 * 60}};
    Recurrence score_schedule{Instant{}, Minutes{60}};
    int horizon = kHorizonSteps;
    Minutes resolution = kDefaultResolution;

    void validate() const;
};

struct ModelVersion {
    std::string id; // "<config>@v<n>", assigned when persisted
    std::string config_id;
    Algorithm algorithm = Algorithm::persistence;
    Instant trained_at{};
    nlohmann::json parameters = nlohmann::json::object();
    std::vector<double> residual_variance_per_step;
    Instant window_from{};
    Instant window_to{};
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const ModelVersion& v);
void from_json(const nlohmann::json& j, ModelVersion& v);

/// Target and feature values on one regular grid; NaN marks a missing value.
struct FeatureFrame {
    Instant start{};
    Minutes resolution = kDefaultResolution;
    std::vector<double> target;
    std::vector<std::vector<double>> features;

    std::size_t size() const { return target.size(); }
    Instant time(std::size_t i) const { return start + resolution * static_cast<long>(i); }
};

/// A forecasting method behind the train/score interface. Implementations
/// read only values at indices <= the issue index passed to predict().
class ForecastAlgorithm {
public:
    virtual ~ForecastAlgorithm() = default;

    /// History steps that must precede (and include) the issue point.
    virtual std::size_t lookback(const ModelConfig& config) const = 0;

    /// Throws insufficient_history when the frame cannot support a fit.
    virtual nlohmann::json fit(const ModelConfig& config, const FeatureFrame& frame) const = 0;

    /// `horizon` values for the steps after `issue_index`. The frame must be
    /// gap-free over the lookback.
    virtual std::vector<double> predict(const ModelConfig& config, const nlohmann::json& parameters,
                                        const FeatureFrame& frame, std::size_t issue_index) const = 0;
};

std::unique_ptr<ForecastAlgorithm> make_algorithm(Algorithm a);

/// Lag set, ridge strength and calendar flag of a ridge autoregressive model.
struct RidgeSettings {
    std::vector<int> lags{1, 2, 96};
    double ridge = 1.0;
    bool calendar = true;
    int feature_lag = 96;

    static RidgeSettings from(const ModelConfig& config);
    std::size_t parameter_count(std::size_t feature_count) const;
};

/// Design row of the ridge model for target index `t`; NaN entries mean the
/// sample is unusable. `value_at(series, index)` supplies lagged values.
template <typename ValueAt>
std::vector<double> ridge_design_row(const RidgeSettings& s, std::size_t feature_count, Instant t,
                                     long t_index, ValueAt&& value_at)
{
    std::vector<double> row;
    row.reserve(s.parameter_count(feature_count));
    for (int lag : s.lags) row.push_back(value_at(-1, t_index - lag));
    for (std::size_t f = 0; f < feature_count; ++f) row.push_back(value_at(static_cast<int>(f), t_index - s.feature_lag));
    if (s.calendar) {
        const int h = hour_of_day(t);
        const int d = day_of_week(t);
        for (int k = 0; k < 24; ++k) row.push_back(k == h ? 1.0 : 0.0);
        for (int k = 0; k < 7; ++k) row.push_back(k == d ? 1.0 : 0.0);
    } else {
        row.push_back(1.0);
    }
    return row;
}

/// Carries observations forward over gaps of at most `max_gap` steps, from
/// `from_index` on. Throws gap_too_large otherwise.
void fill_gaps(std::vector<double>& values, std::size_t from_index, std::size_t max_gap, const std::string& series);

inline constexpr std::size_t kMaxGapSteps = 16; // 4 h at 15 min

/// Trains and scores configured models against a store and keeps versions
/// and job records in the store's metadata area.
class ForecastingEngine {
public:
    ForecastingEngine(TimeseriesStore& store, std::vector<ModelConfig> configs);

    const std::vector<ModelConfig>& configs() const noexcept { return configs_; }
    const ModelConfig& config(const std::string& id) const;

    /// Fits on history strictly before `as_of`.
    ModelVersion train(const ModelConfig& config, Instant as_of) const;

    /// Pure function of the version and stored history up to `issue_time`.
    ForecastRecord score(const ModelVersion& version, Instant issue_time) const;

    /// Persists and assigns the version id.
    ModelVersion& save_version(ModelVersion& version);
    std::optional<ModelVersion> version(const std::string& version_id) const;
    std::optional<ModelVersion> latest_version(const std::string& config_id,
                                               std::optional<Instant> trained_by = std::nullopt) const;

    FeatureFrame load_frame(const ModelConfig& config, Instant from, Instant to) const;

private:
    friend class JobRunner;

    TimeseriesStore& store_;
    std::vector<ModelConfig> configs_;
    std::map<std::string, std::size_t> by_id_;
};

} // namespace gridflex

#endif // GRIDFLEX_FORECASTING_HPP
