#include "gridflex/flexibility.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <tuple>

namespace gridflex {

std::string to_string(Bound b) { return b == Bound::high ? "high" : "low"; }

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double exceedance_high(double mean, double sd, double high)
{
    if (!(sd > 0.0)) return mean > high ? 1.0 : 0.0;
    return normal_upper_tail((high - mean) / sd);
}

double exceedance_low(double mean, double sd, double low)
{
    if (!(sd > 0.0)) return mean < low ? 1.0 : 0.0;
    return normal_upper_tail((mean - low) / sd);
}

std::vector<Violation> detect_violations(const Posterior<double>& posterior, const GridGraph& graph,
                                         std::span<const OperationalRange> ranges, double p_threshold,
                                         Instant timestamp)
{
    if (!(p_threshold > 0.0 && p_threshold < 1.0))
        throw Error(ErrorCode::invalid_parameter, "p_threshold must lie in (0, 1)");

    std::vector<Violation> out;
    for (const auto& r : ranges) {
        const auto v = graph.variable(r.series);
        if (!posterior.position(v))
            throw Error(ErrorCode::unknown_series, "range series has no posterior", {r.series});
        const double mean = posterior.mean_of(v);
        const double sd = posterior.sd_of(v);
        const double p_high = exceedance_high(mean, sd, r.high);
        const double p_low = exceedance_low(mean, sd, r.low);
        const bool high_wins = p_high >= p_low;
        const double p = high_wins ? p_high : p_low;
        if (p < p_threshold) continue;
        out.push_back(Violation{r.series, graph.step, timestamp, high_wins ? Bound::high : Bound::low,
                                high_wins ? r.high : r.low, mean, sd, p});
    }
    return out;
}

std::vector<FlexRequest> estimate_flexibility(const GridGraph& graph, std::span<const Violation> violations,
                                              const ControllableSet& controllables, const FlexOptions& options)
{
    if (violations.empty()) return {};
    if (controllables.empty()) throw Error(ErrorCode::invalid_parameter, "controllable set is empty");

    std::vector<VariableId> controls;
    for (const auto& c : controllables) controls.push_back(graph.variable(c));

    Evidence<double> evidence;
    for (const auto& v : violations) {
        if (controllables.count(v.series))
            throw Error(ErrorCode::invalid_parameter, "violated series is itself controllable", {v.series});
        const double margin = options.target_margin * std::max(1.0, std::abs(v.limit));
        const double target = v.bound == Bound::high ? v.limit - margin : v.limit + margin;
        evidence.assign(graph.variable(v.series), target);
    }

    const auto baseline = infer(graph.graph);
    const auto conditioned = condition(graph.graph, evidence);

    // the strongest violation is reported as the one being covered
    const auto& covering = *std::max_element(violations.begin(), violations.end(), [](const auto& a, const auto& b) {
        return a.exceedance_probability < b.exceedance_probability;
    });

    std::vector<FlexRequest> out;
    for (std::size_t i = 0; i < controls.size(); ++i) {
        const auto v = controls[i];
        const double amount = conditioned.mean_of(v) - baseline.mean_of(v);
        if (!std::isfinite(amount))
            throw Error(ErrorCode::singular_conditioning, "non-finite flexibility amount", {graph.series_of(v)});
        if (std::abs(amount) <= options.dead_band) continue;
        out.push_back(FlexRequest{graph.series_of(v), graph.step, covering.timestamp, amount, covering});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return std::abs(a.amount) > std::abs(b.amount); });
    return out;
}

std::vector<FlexWindow> aggregate_requests(std::vector<FlexRequest> requests)
{
    std::stable_sort(requests.begin(), requests.end(), [](const auto& a, const auto& b) {
        return std::tie(a.series, a.step) < std::tie(b.series, b.step);
    });

    std::vector<FlexWindow> out;
    for (const auto& r : requests) {
        if (!out.empty() && out.back().series == r.series && out.back().end_step + 1 == r.step) {
            auto& w = out.back();
            w.end_step = r.step;
            w.end = r.timestamp;
            w.amounts.push_back(r.amount);
        } else {
            out.push_back(FlexWindow{r.series, r.step, r.step, r.timestamp, r.timestamp, {r.amount}, 0.0});
        }
    }
    for (auto& w : out) {
        double total = 0.0;
        for (double a : w.amounts) total += a;
        w.energy = total * kStepHours;
    }
    return out;
}

void write_violations_csv(std::ostream& out, std::span<const Violation> violations)
{
    out << "series_id,step,timestamp,bound,limit,predicted_mean,predicted_sd,exceedance_probability\n";
    out.precision(10);
    for (const auto& v : violations)
        out << v.series << ',' << v.step << ',' << format_instant(v.timestamp) << ',' << to_string(v.bound) << ','
            << v.limit << ',' << v.predicted_mean << ',' << v.predicted_sd << ',' << v.exceedance_probability << '\n';
}

void write_requests_csv(std::ostream& out, std::span<const FlexRequest> requests)
{
    out << "series_id,step,timestamp,amount,covering_series,covering_bound\n";
    out.precision(10);
    for (const auto& r : requests)
        out << r.series << ',' << r.step << ',' << format_instant(r.timestamp) << ',' << r.amount << ','
            << r.covering.series << ',' << to_string(r.covering.bound) << '\n';
}

} // namespace gridflex
