#ifndef GRIDFLEX_FLEXIBILITY_HPP
#define GRIDFLEX_FLEXIBILITY_HPP

#include "gridflex/grid_model.hpp"
#include "gridflex/time.hpp"

#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace gridflex {

enum class Bound { high, low };

struct Violation {
    std::string series;
    int step = 0;
    Instant timestamp{};
    Bound bound = Bound::high;
    double limit = 0.0;
    double predicted_mean = 0.0;
    double predicted_sd = 0.0;
    double exceedance_probability = 0.0;
};

struct FlexRequest {
    std::string series;
    int step = 0;
    Instant timestamp{};
    double amount = 0.0; // negative reduces consumption
    Violation covering;
};

/// Contiguous run of requested flexibility on one series.
struct FlexWindow {
    std::string series;
    int start_step = 0;
    int end_step = 0; // inclusive
    Instant start{};
    Instant end{}; // timestamp of the last step
    std::vector<double> amounts;
    double energy = 0.0; // sum(amount) * 0.25 h
};

using ControllableSet = std::set<std::string>;

struct FlexOptions {
    double dead_band = 0.1;
    /// The violated variable is pinned this far inside its bound (relative to
    /// max(1, |limit|)), so that the adjusted state is no longer flagged.
    double target_margin = 1e-7;
};

/// Standard normal upper tail 1 - Phi(z).
double normal_upper_tail(double z);

/// Probabilities that N(mean, sd^2) lies above `high` and below `low`.
double exceedance_high(double mean, double sd, double high);
double exceedance_low(double mean, double sd, double low);

std::vector<Violation> detect_violations(const Posterior<double>& posterior, const GridGraph& graph,
                                         std::span<const OperationalRange> ranges, double p_threshold,
                                         Instant timestamp = {});

/// Flexibility required to bring every violated variable back to its bound,
/// from jointly conditioning them. Requests are sorted by |amount| descending.
std::vector<FlexRequest> estimate_flexibility(const GridGraph& graph, std::span<const Violation> violations,
                                              const ControllableSet& controllables, const FlexOptions& options = {});

inline std::vector<FlexRequest> estimate_flexibility(const GridGraph& graph, const Violation& violation,
                                                     const ControllableSet& controllables,
                                                     const FlexOptions& options = {})
{
    return estimate_flexibility(graph, std::span<const Violation>(&violation, 1), controllables, options);
}

/// Merges consecutive steps per series into windows.
std::vector<FlexWindow> aggregate_requests(std::vector<FlexRequest> requests);

void write_violations_csv(std::ostream& out, std::span<const Violation> violations);
void write_requests_csv(std::ostream& out, std::span<const FlexRequest> requests);

std::string to_string(Bound b);

} // namespace gridflex

#endif // GRIDFLEX_FLEXIBILITY_HPP
