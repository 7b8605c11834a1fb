#include "gridflex/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace gridflex {

void GridTopology::validate() const
{
    std::set<std::string> entities;
    std::set<std::string> series_ids;
    std::set<std::string> substation_entities;
    auto claim = [&](const GridNode& n) {
        if (n.entity.empty() || n.series.empty())
            throw Error(ErrorCode::invalid_config, "grid node without entity or series");
        if (!entities.insert(n.entity).second)
            throw Error(ErrorCode::invalid_config, "grid entity declared twice", {n.entity});
        if (!series_ids.insert(n.series).second)
            throw Error(ErrorCode::invalid_config, "grid series declared twice", {n.series});
    };
    for (const auto& s : substations) {
        claim(s);
        substation_entities.insert(s.entity);
    }
    for (const auto& f : feeders) {
        claim(f);
        if (!substation_entities.count(f.parent))
            throw Error(ErrorCode::invalid_config, "feeder parent is not a substation", {f.entity, f.parent});
    }
    std::set<std::string> attachable = entities;
    for (const auto& v : voltage_points) {
        claim(v);
        if (!attachable.count(v.parent))
            throw Error(ErrorCode::invalid_config, "voltage point attached to unknown node", {v.entity, v.parent});
    }
}

std::vector<std::string> GridTopology::series() const
{
    std::vector<std::string> out;
    out.reserve(size());
    for (const auto* group : {&substations, &feeders, &voltage_points})
        for (const auto& n : *group) out.push_back(n.series);
    std::sort(out.begin(), out.end());
    return out;
}

void RelationalModel::validate() const
{
    if (static_cast<Eigen::Index>(parents.size()) != weights.size())
        throw Error(ErrorCode::dimension_mismatch, "relational model weights do not match parents", {child});
    if (!(residual_variance > 0.0) || !std::isfinite(residual_variance))
        throw Error(ErrorCode::invalid_parameter, "relational model residual variance must be positive", {child});
    if (!weights.allFinite() || !std::isfinite(bias))
        throw Error(ErrorCode::invalid_parameter, "relational model coefficients must be finite", {child});
}

VariableId GridGraph::variable(const std::string& series_id) const
{
    auto it = series.find(series_id);
    if (it == series.end()) throw Error(ErrorCode::unknown_series, "series not in grid graph", {series_id});
    return it->second;
}

std::string GridGraph::series_of(VariableId v) const
{
    const auto& label = graph.label(v);
    return label.substr(0, label.rfind('@'));
}

std::string variable_label(const std::string& series, int step)
{
    return series + "@" + std::to_string(step);
}

GridGraph build_graph(const GraphBuildInput& input, int step, const BuildOptions& options)
{
    input.topology.validate();

    GridGraph out;
    out.step = step;
    for (const auto& s : input.topology.series())
        out.series.emplace(s, out.graph.add_variable(variable_label(s, step)));

    for (const auto& r : input.ranges) {
        if (!out.series.count(r.series))
            throw Error(ErrorCode::unknown_series, "operational range on a non-grid series", {r.series});
        if (!(r.low < r.high)) throw Error(ErrorCode::invalid_config, "operational range low >= high", {r.series});
    }

    // std::map iteration keeps every factor list sorted by series id
    for (const auto& [series, f] : input.forecasts) {
        const auto v = out.variable(series);
        double variance = f.variance;
        if (!(variance > 0.0) || !std::isfinite(variance)) {
            const double sd = options.default_relative_sd * std::abs(f.mean);
            variance = sd * sd;
        }
        variance = std::max(variance, options.min_variance);
        out.graph.add_factor(prior_factor(v, f.mean, variance));
    }
    for (const auto& [series, r] : input.readings) {
        const auto v = out.variable(series);
        out.graph.add_factor(sensor_factor(v, r.mean, std::max(r.variance, options.min_variance)));
    }

    std::vector<const RelationalModel*> models;
    for (const auto& m : input.models) models.push_back(&m);
    std::stable_sort(models.begin(), models.end(), [](auto* a, auto* b) {
        return a->child != b->child ? a->child < b->child : a->parents < b->parents;
    });
    for (const auto* m : models) {
        m->validate();
        std::vector<VariableId> parents;
        for (const auto& p : m->parents) parents.push_back(out.variable(p));
        out.graph.add_factor(linear_factor(out.variable(m->child), parents, m->weights, m->bias, m->residual_variance));
        ++out.relational_factors;
    }
    return out;
}

RelationalModel fit_linear_model(const Eigen::VectorXd& child_history, const Eigen::MatrixXd& parent_histories,
                                 const FitOptions& options)
{
    const auto n = child_history.size();
    const auto p = parent_histories.cols();
    if (parent_histories.rows() != n)
        throw Error(ErrorCode::dimension_mismatch, "child and parent histories are not aligned");
    if (n < p + 1)
        throw Error(ErrorCode::insufficient_samples,
                    "need at least " + std::to_string(p + 1) + " samples, got " + std::to_string(n));
    if (options.ridge < 0.0) throw Error(ErrorCode::invalid_parameter, "ridge must be non-negative");
    if (!child_history.allFinite() || !parent_histories.allFinite())
        throw Error(ErrorCode::invalid_parameter, "histories contain non-finite values");

    const Eigen::RowVectorXd x_mean = parent_histories.colwise().mean();
    const double y_mean = child_history.mean();
    const Eigen::MatrixXd xc = parent_histories.rowwise() - x_mean;
    const Eigen::VectorXd yc = child_history.array() - y_mean;

    Eigen::MatrixXd gram = xc.transpose() * xc;
    if (options.ridge == 0.0) {
        for (Eigen::Index j = 0; j < p; ++j)
            if (gram(j, j) <= 1e-12 * std::max(1.0, x_mean(j) * x_mean(j)) * static_cast<double>(n))
                throw Error(ErrorCode::degenerate_parent,
                            "parent column " + std::to_string(j) + " is constant and ridge is zero");
    }
    gram.diagonal().array() += options.ridge;

    RelationalModel model;
    model.kind = RelationKind::linear;
    if (p > 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
            throw Error(ErrorCode::degenerate_parent, "parent columns are linearly dependent");
        model.weights = ldlt.solve(xc.transpose() * yc);
        if (!model.weights.allFinite())
            throw Error(ErrorCode::degenerate_parent, "parent columns are linearly dependent");
    } else {
        model.weights = Eigen::VectorXd(0);
    }
    model.bias = y_mean - x_mean.dot(model.weights);

    const Eigen::VectorXd residual = yc - xc * model.weights;
    const auto dof = n - p - 1;
    const double variance = dof > 0 ? residual.squaredNorm() / static_cast<double>(dof) : 0.0;
    model.residual_variance = std::max(variance, options.residual_floor);
    return model;
}

namespace {

double activate(Activation a, double z)
{
    switch (a) {
    case Activation::identity: return z;
    case Activation::tanh: return std::tanh(z);
    case Activation::logistic: return 1.0 / (1.0 + std::exp(-z));
    }
    return z;
}

double activate_derivative(Activation a, double z)
{
    switch (a) {
    case Activation::identity: return 1.0;
    case Activation::tanh: {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    case Activation::logistic: {
        const double s = 1.0 / (1.0 + std::exp(-z));
        return s * (1.0 - s);
    }
    }
    return 1.0;
}

} // namespace

double HiddenLayerNetwork::operator()(const Eigen::VectorXd& x) const
{
    const Eigen::VectorXd z = input_weights * x + hidden_bias;
    const Eigen::VectorXd h = z.unaryExpr([this](double v) { return activate(activation, v); });
    return output_weights.dot(h) + output_bias;
}

Eigen::VectorXd HiddenLayerNetwork::gradient(const Eigen::VectorXd& x) const
{
    const Eigen::VectorXd z = input_weights * x + hidden_bias;
    const Eigen::VectorXd d = z.unaryExpr([this](double v) { return activate_derivative(activation, v); });
    return input_weights.transpose() * output_weights.cwiseProduct(d);
}

RelationalModel linearize_mlp(const HiddenLayerNetwork& network, const Eigen::VectorXd& operating_point,
                              double residual_variance)
{
    if (network.input_weights.cols() != operating_point.size() ||
        network.input_weights.rows() != network.hidden_bias.size() ||
        network.input_weights.rows() != network.output_weights.size())
        throw Error(ErrorCode::dimension_mismatch, "network shapes do not match the operating point");
    if (!operating_point.allFinite())
        throw Error(ErrorCode::invalid_parameter, "operating point must be finite");

    RelationalModel model;
    model.kind = RelationKind::mlp_linearized;
    model.weights = network.gradient(operating_point);
    const double value = network(operating_point);
    if (!model.weights.allFinite() || !std::isfinite(value))
        throw Error(ErrorCode::invalid_parameter, "network Jacobian is not finite at the operating point");
    model.bias = value - model.weights.dot(operating_point);
    model.residual_variance = residual_variance;
    model.operating_point = operating_point;
    return model;
}

} // namespace gridflex
