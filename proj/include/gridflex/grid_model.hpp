#ifndef GRIDFLEX_GRID_MODEL_HPP
#define GRIDFLEX_GRID_MODEL_HPP

#include "gridflex/factor_graph.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gridflex {

/// One measured grid location and the series holding its quantity
/// (load for substations and feeders, voltage for voltage points).
struct GridNode {
    std::string entity;
    std::string series;
    std::string parent; // substation of a feeder, attachment of a voltage point
};

struct GridTopology {
    std::vector<GridNode> substations;
    std::vector<GridNode> feeders;
    std::vector<GridNode> voltage_points;

    /// Throws invalid_config when a parent or attachment is missing or an id repeats.
    void validate() const;

    /// All grid series, sorted.
    std::vector<std::string> series() const;

    std::size_t size() const { return substations.size() + feeders.size() + voltage_points.size(); }
};

struct OperationalRange {
    std::string series;
    double low = 0.0;
    double high = 0.0;
};

enum class RelationKind { linear, mlp_linearized };

/// child = weights . parents + bias + N(0, residual_variance)
struct RelationalModel {
    std::string child;
    std::vector<std::string> parents;
    RelationKind kind = RelationKind::linear;
    Eigen::VectorXd weights;
    double bias = 0.0;
    double residual_variance = 1.0;
    std::optional<Eigen::VectorXd> operating_point;

    void validate() const;
};

struct GaussianEstimate {
    double mean = 0.0;
    double variance = 0.0; // <= 0 means unknown
};

struct GraphBuildInput {
    GridTopology topology;
    std::vector<OperationalRange> ranges;
    std::vector<RelationalModel> models;
    std::map<std::string, GaussianEstimate> forecasts; // at the step being built
    std::map<std::string, GaussianEstimate> readings;  // value and noise variance
};

struct BuildOptions {
    /// Forecast sd as a fraction of |mean| when the forecast carries no variance.
    double default_relative_sd = 0.1;
    double min_variance = 1e-9;
};

/// A per-step graph together with the series each variable stands for.
struct GridGraph {
    FactorGraph<double> graph;
    int step = 0;
    std::map<std::string, VariableId> series;
    std::size_t relational_factors = 0;

    VariableId variable(const std::string& series_id) const;
    std::string series_of(VariableId v) const;
};

std::string variable_label(const std::string& series, int step);

GridGraph build_graph(const GraphBuildInput& input, int step, const BuildOptions& options = {});

struct FitOptions {
    double ridge = 0.0;
    double residual_floor = 1e-9;
};

/// Closed-form ridge regression on centered data. Rows of `parent_histories`
/// are time-aligned with `child_history`. The bias is not penalized.
RelationalModel fit_linear_model(const Eigen::VectorXd& child_history, const Eigen::MatrixXd& parent_histories,
                                 const FitOptions& options = {});

enum class Activation { identity, tanh, logistic };

/// y = output_weights . act(input_weights x + hidden_bias) + output_bias
struct HiddenLayerNetwork {
    Eigen::MatrixXd input_weights; // hidden x inputs
    Eigen::VectorXd hidden_bias;
    Eigen::VectorXd output_weights;
    double output_bias = 0.0;
    Activation activation = Activation::tanh;

    double operator()(const Eigen::VectorXd& x) const;
    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
};

/// First-order expansion of the network around `operating_point`.
RelationalModel linearize_mlp(const HiddenLayerNetwork& network, const Eigen::VectorXd& operating_point,
                              double residual_variance);

} // namespace gridflex

#endif // GRIDFLEX_GRID_MODEL_HPP
