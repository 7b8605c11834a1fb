#ifndef GRIDFLEX_FACTOR_GRAPH_HPP
#define GRIDFLEX_FACTOR_GRAPH_HPP

// Gaussian factor graphs in canonical (information) form.
//
// Each factor contributes exp(-1/2 x'Jx + eta'x) over its scope. The joint is
// assembled by scattering every (J, eta) into a global precision H and
// information vector, and inference solves H mu = eta exactly with a sparse
// Cholesky factorization. Marginal variances are the diagonal of H^-1, taken
// one column solve at a time.

#include "gridflex/error.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gridflex {

struct VariableId {
    Eigen::Index index = 0;

    friend bool operator==(VariableId, VariableId) = default;
    friend auto operator<=>(VariableId, VariableId) = default;
};

template <typename Scalar = double>
class GaussianFactor {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    GaussianFactor(std::vector<VariableId> scope, Matrix information, Vector information_vector)
        : scope_(std::move(scope)), information_(std::move(information)),
          information_vector_(std::move(information_vector))
    {
        const auto n = static_cast<Eigen::Index>(scope_.size());
        if (n == 0)
            throw Error(ErrorCode::dimension_mismatch, "factor scope is empty");
        if (information_.rows() != n || information_.cols() != n || information_vector_.size() != n)
            throw Error(ErrorCode::dimension_mismatch, "factor dimensions do not match its scope");
        for (std::size_t i = 0; i < scope_.size(); ++i)
            for (std::size_t j = i + 1; j < scope_.size(); ++j)
                if (scope_[i] == scope_[j])
                    throw Error(ErrorCode::invalid_parameter, "factor scope repeats a variable");
        if (!information_.allFinite() || !information_vector_.allFinite())
            throw Error(ErrorCode::invalid_parameter, "factor contains non-finite entries");

        // Exact symmetry: (a + b) / 2 is the same bit pattern from either side.
        Matrix sym = (information_ + information_.transpose()) / Scalar(2);
        information_ = std::move(sym);

        const Scalar scale = information_.cwiseAbs().maxCoeff();
        if (scale > Scalar(0)) {
            Eigen::SelfAdjointEigenSolver<Matrix> eig(information_, Eigen::EigenvaluesOnly);
            if (eig.eigenvalues().minCoeff() < -Scalar(1e-10) * scale)
                throw Error(ErrorCode::invalid_parameter, "factor information matrix is not positive semi-definite");
        }
    }

    const std::vector<VariableId>& scope() const noexcept { return scope_; }
    const Matrix& information() const noexcept { return information_; }
    const Vector& information_vector() const noexcept { return information_vector_; }

private:
    std::vector<VariableId> scope_;
    Matrix information_;
    Vector information_vector_;
};

template <typename Scalar = double>
class FactorGraph {
public:
    using Factor = GaussianFactor<Scalar>;

    VariableId add_variable(std::string label)
    {
        if (by_label_.count(label))
            throw Error(ErrorCode::invalid_parameter, "duplicate variable label", {label});
        const VariableId id{static_cast<Eigen::Index>(labels_.size())};
        by_label_.emplace(label, id);
        labels_.push_back(std::move(label));
        return id;
    }

    void add_factor(Factor factor)
    {
        for (auto v : factor.scope())
            if (v.index < 0 || v.index >= size())
                throw Error(ErrorCode::unknown_variable, "factor refers to an undeclared variable",
                            {std::to_string(v.index)});
        factors_.push_back(std::move(factor));
    }

    Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(labels_.size()); }
    const std::vector<Factor>& factors() const noexcept { return factors_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const std::string& label(VariableId v) const { return labels_.at(static_cast<std::size_t>(v.index)); }

    std::optional<VariableId> find(const std::string& label) const
    {
        auto it = by_label_.find(label);
        if (it == by_label_.end()) return std::nullopt;
        return it->second;
    }

    bool contains(VariableId v) const noexcept { return v.index >= 0 && v.index < size(); }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, VariableId> by_label_;
    std::vector<Factor> factors_;
};

/// Means and marginal variances over an ordered subset of graph variables.
template <typename Scalar = double>
struct Posterior {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    std::vector<VariableId> variables;
    Vector mean;
    Vector marginal_variance;

    std::optional<Eigen::Index> position(VariableId v) const
    {
        // variables are stored in increasing index order
        auto it = std::lower_bound(variables.begin(), variables.end(), v);
        if (it == variables.end() || *it != v) return std::nullopt;
        return static_cast<Eigen::Index>(it - variables.begin());
    }

    Scalar mean_of(VariableId v) const { return mean(require(v)); }
    Scalar variance_of(VariableId v) const { return marginal_variance(require(v)); }
    Scalar sd_of(VariableId v) const { return std::sqrt(variance_of(v)); }

private:
    Eigen::Index require(VariableId v) const
    {
        auto p = position(v);
        if (!p) throw Error(ErrorCode::unknown_variable, "variable not in posterior", {std::to_string(v.index)});
        return *p;
    }
};

/// Hard assignments of variables to values.
template <typename Scalar = double>
class Evidence {
public:
    void assign(VariableId v, Scalar value)
    {
        if (!values_.emplace(v, value).second)
            throw Error(ErrorCode::duplicate_assignment, "variable assigned twice", {std::to_string(v.index)});
    }

    const std::map<VariableId, Scalar>& assignments() const noexcept { return values_; }
    bool contains(VariableId v) const { return values_.count(v) != 0; }
    bool empty() const noexcept { return values_.empty(); }

private:
    std::map<VariableId, Scalar> values_;
};

template <typename Scalar = double>
struct InformationForm {
    Eigen::SparseMatrix<Scalar> precision;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> information;
};

// ---------------------------------------------------------------------------
// Factor constructors

template <typename Scalar = double>
GaussianFactor<Scalar> sensor_factor(VariableId var, Scalar observation, Scalar noise_variance)
{
    if (!(noise_variance > Scalar(0)) || !std::isfinite(noise_variance))
        throw Error(ErrorCode::invalid_parameter, "noise variance must be positive");
    if (!std::isfinite(observation))
        throw Error(ErrorCode::invalid_parameter, "observation must be finite");
    typename GaussianFactor<Scalar>::Matrix j(1, 1);
    typename GaussianFactor<Scalar>::Vector eta(1);
    j(0, 0) = Scalar(1) / noise_variance;
    eta(0) = observation / noise_variance;
    return GaussianFactor<Scalar>({var}, std::move(j), std::move(eta));
}

/// A prior N(mean, variance) is a sensor reading of the variable itself.
template <typename Scalar = double>
GaussianFactor<Scalar> prior_factor(VariableId var, Scalar mean, Scalar variance)
{
    return sensor_factor<Scalar>(var, mean, variance);
}

/// Conditional N(child | w'parents + bias, residual_variance) in canonical form.
/// With a = [1, -w]: J = a a' / r and eta = (bias / r) a.
template <typename Scalar = double>
GaussianFactor<Scalar> linear_factor(VariableId child, const std::vector<VariableId>& parents,
                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& weights, Scalar bias,
                                     Scalar residual_variance)
{
    if (static_cast<Eigen::Index>(parents.size()) != weights.size())
        throw Error(ErrorCode::dimension_mismatch, "weights and parents differ in length");
    if (!(residual_variance > Scalar(0)) || !std::isfinite(residual_variance))
        throw Error(ErrorCode::invalid_parameter, "residual variance must be positive");

    const auto n = weights.size() + 1;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> a(n);
    a(0) = Scalar(1);
    a.tail(weights.size()) = -weights;

    std::vector<VariableId> scope;
    scope.reserve(static_cast<std::size_t>(n));
    scope.push_back(child);
    scope.insert(scope.end(), parents.begin(), parents.end());

    typename GaussianFactor<Scalar>::Matrix j = (a * a.transpose()) / residual_variance;
    typename GaussianFactor<Scalar>::Vector eta = (bias / residual_variance) * a;
    return GaussianFactor<Scalar>(std::move(scope), std::move(j), std::move(eta));
}

// ---------------------------------------------------------------------------
// Assembly and inference

template <typename Scalar>
InformationForm<Scalar> assemble(const FactorGraph<Scalar>& graph)
{
    const auto n = graph.size();
    std::vector<Eigen::Triplet<Scalar>> triplets;
    InformationForm<Scalar> form;
    form.information = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);

    for (const auto& f : graph.factors()) {
        const auto& scope = f.scope();
        const auto& j = f.information();
        for (std::size_t a = 0; a < scope.size(); ++a) {
            const auto ia = static_cast<Eigen::Index>(a);
            form.information(scope[a].index) += f.information_vector()(ia);
            for (std::size_t b = 0; b < scope.size(); ++b) {
                const auto ib = static_cast<Eigen::Index>(b);
                if (j(ia, ib) != Scalar(0))
                    triplets.emplace_back(scope[a].index, scope[b].index, j(ia, ib));
            }
        }
    }
    form.precision.resize(n, n);
    form.precision.setFromTriplets(triplets.begin(), triplets.end());
    return form;
}

namespace detail {

/// Finds the first variable (natural order) whose Cholesky pivot collapses.
template <typename Scalar>
Eigen::Index deficient_pivot(const Eigen::SparseMatrix<Scalar>& h)
{
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Matrix a = Matrix(h);
    const auto n = a.rows();
    const Scalar scale = std::max(Scalar(1), a.diagonal().cwiseAbs().maxCoeff());
    for (Eigen::Index k = 0; k < n; ++k) {
        Scalar d = a(k, k);
        for (Eigen::Index p = 0; p < k; ++p) d -= a(k, p) * a(k, p);
        if (!(d > Scalar(1e-13) * scale)) return k;
        const Scalar l = std::sqrt(d);
        a(k, k) = l;
        for (Eigen::Index i = k + 1; i < n; ++i) {
            Scalar s = a(i, k);
            for (Eigen::Index p = 0; p < k; ++p) s -= a(i, p) * a(k, p);
            a(i, k) = s / l;
        }
    }
    return n > 0 ? n - 1 : 0;
}

template <typename Scalar>
Posterior<Scalar> solve_information(const Eigen::SparseMatrix<Scalar>& h,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& eta,
                                    std::vector<VariableId> variables, const std::vector<std::string>& labels,
                                    ErrorCode failure_code)
{
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const auto n = h.rows();
    if (n == 0) return Posterior<Scalar>{std::move(variables), Vector(0), Vector(0)};

    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(h.coeff(i, i) > Scalar(0)))
            throw Error(failure_code, "variable has no factor support: " + labels[static_cast<std::size_t>(i)],
                        {labels[static_cast<std::size_t>(i)]});
    }

    Eigen::SimplicialLLT<Eigen::SparseMatrix<Scalar>, Eigen::Lower, Eigen::AMDOrdering<int>> llt(h);
    if (llt.info() != Eigen::Success) {
        const auto k = static_cast<std::size_t>(deficient_pivot(h));
        throw Error(failure_code, "precision is not positive definite at " + labels[k], {labels[k]});
    }

    Posterior<Scalar> post;
    post.variables = std::move(variables);
    post.mean = llt.solve(eta);
    post.marginal_variance.resize(n);
    Vector unit = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        unit(i) = Scalar(1);
        const Vector column = llt.solve(unit);
        post.marginal_variance(i) = std::max(Scalar(0), column(i));
        unit(i) = Scalar(0);
    }
    if (!post.mean.allFinite()) {
        const auto k = static_cast<std::size_t>(deficient_pivot(h));
        throw Error(failure_code, "precision is numerically singular at " + labels[k], {labels[k]});
    }
    return post;
}

} // namespace detail

/// Exact posterior of every variable. Throws under_determined_graph naming an
/// unreached variable when the assembled precision is not positive definite.
template <typename Scalar>
Posterior<Scalar> infer(const FactorGraph<Scalar>& graph)
{
    const auto form = assemble(graph);
    std::vector<VariableId> vars(static_cast<std::size_t>(graph.size()));
    for (Eigen::Index i = 0; i < graph.size(); ++i) vars[static_cast<std::size_t>(i)] = VariableId{i};
    return detail::solve_information(form.precision, form.information, std::move(vars), graph.labels(),
                                     ErrorCode::under_determined_graph);
}

/// Posterior of the free variables given hard evidence on the others:
/// precision H_uu and information eta_u - H_ue x_e.
template <typename Scalar>
Posterior<Scalar> condition(const FactorGraph<Scalar>& graph, const Evidence<Scalar>& evidence)
{
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const auto n = graph.size();
    for (const auto& [v, value] : evidence.assignments()) {
        if (!graph.contains(v))
            throw Error(ErrorCode::unknown_variable, "evidence on unknown variable", {std::to_string(v.index)});
        if (!std::isfinite(value))
            throw Error(ErrorCode::invalid_parameter, "evidence value must be finite", {graph.label(v)});
    }

    const auto form = assemble(graph);

    // position of each variable in the free block, -1 for evidence
    std::vector<Eigen::Index> free_pos(static_cast<std::size_t>(n), -1);
    std::vector<VariableId> free_vars;
    std::vector<std::string> free_labels;
    Vector observed = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const VariableId v{i};
        auto it = evidence.assignments().find(v);
        if (it == evidence.assignments().end()) {
            free_pos[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(free_vars.size());
            free_vars.push_back(v);
            free_labels.push_back(graph.label(v));
        } else {
            observed(i) = it->second;
        }
    }

    const auto m = static_cast<Eigen::Index>(free_vars.size());
    Vector eta_u(m);
    for (Eigen::Index k = 0; k < m; ++k) eta_u(k) = form.information(free_vars[static_cast<std::size_t>(k)].index);

    std::vector<Eigen::Triplet<Scalar>> triplets;
    for (Eigen::Index col = 0; col < form.precision.outerSize(); ++col) {
        for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(form.precision, col); it; ++it) {
            const auto pr = free_pos[static_cast<std::size_t>(it.row())];
            const auto pc = free_pos[static_cast<std::size_t>(it.col())];
            if (pr >= 0 && pc >= 0)
                triplets.emplace_back(pr, pc, it.value());
            else if (pr >= 0 && pc < 0)
                eta_u(pr) -= it.value() * observed(it.col());
        }
    }
    Eigen::SparseMatrix<Scalar> h_uu(m, m);
    h_uu.setFromTriplets(triplets.begin(), triplets.end());
    return detail::solve_information(h_uu, eta_u, std::move(free_vars), free_labels,
                                     ErrorCode::singular_conditioning);
}

/// Debug dump of the assembled information form as coordinate triplets.
template <typename Scalar>
void write_information_triplets(std::ostream& out, const FactorGraph<Scalar>& graph)
{
    const auto form = assemble(graph);
    out.precision(17);
    out << "%gridflex information-form " << graph.size() << ' ' << form.precision.nonZeros() << '\n';
    for (Eigen::Index i = 0; i < graph.size(); ++i) out << "var " << i << ' ' << graph.label(VariableId{i}) << '\n';
    for (Eigen::Index col = 0; col < form.precision.outerSize(); ++col)
        for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(form.precision, col); it; ++it)
            out << "H " << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    for (Eigen::Index i = 0; i < graph.size(); ++i)
        if (form.information(i) != Scalar(0)) out << "eta " << i << ' ' << form.information(i) << '\n';
}

} // namespace gridflex

#endif // GRIDFLEX_FACTOR_GRAPH_HPP
