#include <doctest.h>

#include "gridflex/factor_graph.hpp"
#include "oracles.hpp"

#include <sstream>

using namespace gridflex;
using doctest::Approx;

namespace {

// x1 ~ N(0, 1), x2 = 2 x1 + e (r = 0.5)
FactorGraph<double> chain()
{
    FactorGraph<double> g;
    const auto x1 = g.add_variable("x1");
    const auto x2 = g.add_variable("x2");
    g.add_factor(prior_factor(x1, 0.0, 1.0));
    Eigen::VectorXd w(1);
    w << 2.0;
    g.add_factor(linear_factor(x2, {x1}, w, 0.0, 0.5));
    return g;
}

} // namespace

TEST_CASE("sensor factor canonical form")
{
    const VariableId x{0};
    auto f = sensor_factor(x, 5.0, 0.25);
    CHECK(f.information()(0, 0) == 4.0);
    CHECK(f.information_vector()(0) == 20.0);

    f = sensor_factor(x, 0.0, 1.0);
    CHECK(f.information()(0, 0) == 1.0);
    CHECK(f.information_vector()(0) == 0.0);

    f = sensor_factor(x, 110.0, 25.0);
    CHECK(f.information()(0, 0) == Approx(0.04).epsilon(1e-15));
    CHECK(f.information_vector()(0) == Approx(4.4).epsilon(1e-15));

    CHECK_THROWS_AS(sensor_factor(x, 1.0, 0.0), Error);
    CHECK_THROWS_AS(sensor_factor(x, 1.0, -2.0), Error);
}

TEST_CASE("linear factor canonical form")
{
    const VariableId c{0}, p1{1}, p2{2};
    Eigen::VectorXd w(1);
    w << 2.0;
    auto f = linear_factor(c, {p1}, w, 0.0, 0.5);
    Eigen::Matrix2d expected;
    expected << 2, -4, -4, 8;
    CHECK(f.information().isApprox(expected, 1e-15));
    CHECK(f.information_vector().isZero());

    w << 1.0;
    f = linear_factor(c, {p1}, w, 0.0, 1.0);
    expected << 1, -1, -1, 1;
    CHECK(f.information().isApprox(expected, 1e-15));

    Eigen::VectorXd w2(2);
    w2 << 1.0, 1.0;
    f = linear_factor(c, {p1, p2}, w2, 0.0, 0.1);
    Eigen::Vector3d a(1, -1, -1);
    CHECK(f.information().isApprox(a * a.transpose() * 10.0, 1e-12));

    f = linear_factor(c, {p1}, w, 3.0, 2.0);
    CHECK(f.information_vector()(0) == Approx(1.5));
    CHECK(f.information_vector()(1) == Approx(-1.5));

    CHECK_THROWS_AS(linear_factor(c, {p1, p2}, w, 0.0, 1.0), Error);
    CHECK_THROWS_AS(linear_factor(c, {p1}, w, 0.0, 0.0), Error);
}

TEST_CASE("factor validation")
{
    Eigen::MatrixXd j(2, 2);
    j << 1, 0, 0, -1;
    CHECK_THROWS_AS(GaussianFactor<double>({VariableId{0}, VariableId{1}}, j, Eigen::VectorXd::Zero(2)), Error);
    j << 1, 0, 0, 1;
    CHECK_THROWS_AS(GaussianFactor<double>({VariableId{0}}, j, Eigen::VectorXd::Zero(2)), Error);
    CHECK_THROWS_AS(GaussianFactor<double>({VariableId{0}, VariableId{0}}, j, Eigen::VectorXd::Zero(2)), Error);

    FactorGraph<double> g;
    g.add_variable("a");
    CHECK_THROWS_AS(g.add_factor(prior_factor(VariableId{3}, 0.0, 1.0)), Error);
    CHECK_THROWS_AS(g.add_variable("a"), Error);
}

TEST_CASE("infer examples")
{
    FactorGraph<double> g;
    const auto x = g.add_variable("x");
    g.add_factor(prior_factor(x, 2.0, 4.0));
    auto post = infer(g);
    CHECK(post.mean_of(x) == Approx(2.0));
    CHECK(post.variance_of(x) == Approx(4.0));

    FactorGraph<double> s;
    const auto y = s.add_variable("y");
    s.add_factor(sensor_factor(y, 5.0, 0.25));
    post = infer(s);
    CHECK(post.mean_of(y) == Approx(5.0));
    CHECK(post.variance_of(y) == Approx(0.25));
}

TEST_CASE("chain with sensor matches moment-form oracle")
{
    auto g = chain();
    g.add_factor(sensor_factor(VariableId{1}, 4.0, 0.1));
    const auto post = infer(g);
    // frozen from conditioning the joint of (x1, x2, y) on y = 4: 40/23 and 90/23
    CHECK(post.mean(0) == Approx(1.7391304347826086).epsilon(1e-12));
    CHECK(post.mean(1) == Approx(3.9130434782608696).epsilon(1e-12));
    CHECK(post.marginal_variance(0) == Approx(3.0 / 23.0).epsilon(1e-12));
    CHECK(post.marginal_variance(1) == Approx(9.0 / 92.0).epsilon(1e-12));

    const auto dense = oracle::joint(g);
    CHECK(std::abs(dense.mean(0) - post.mean(0)) < 1e-12);
}

TEST_CASE("conditioning the chain")
{
    const auto g = chain();
    Evidence<double> e;
    e.assign(VariableId{1}, 4.0);
    const auto post = condition(g, e);
    REQUIRE(post.variables.size() == 1);
    CHECK(post.mean_of(VariableId{0}) == Approx(2.0 / 4.5 * 4.0).epsilon(1e-12));
    CHECK(post.variance_of(VariableId{0}) == Approx(1.0 - 4.0 / 4.5).epsilon(1e-12));

    const auto joint = oracle::joint(g);
    Eigen::VectorXd v(1);
    v << 4.0;
    const auto ref = oracle::condition(joint, {1}, v);
    CHECK(std::abs(ref.mean(0) - post.mean(0)) < 1e-12);
    CHECK(std::abs(ref.covariance(0, 0) - post.marginal_variance(0)) < 1e-12);

    CHECK_THROWS_AS(e.assign(VariableId{1}, 3.0), Error);
    Evidence<double> bad;
    bad.assign(VariableId{7}, 1.0);
    CHECK_THROWS_AS(condition(g, bad), Error);
}

TEST_CASE("conditioning an independent variable leaves the rest unchanged")
{
    FactorGraph<double> g;
    const auto a = g.add_variable("a");
    const auto b = g.add_variable("b");
    g.add_factor(prior_factor(a, 1.0, 2.0));
    g.add_factor(prior_factor(b, -3.0, 0.5));
    Evidence<double> e;
    e.assign(b, 10.0);
    const auto post = condition(g, e);
    CHECK(post.mean_of(a) == Approx(1.0));
    CHECK(post.variance_of(a) == Approx(2.0));
}

TEST_CASE("unsupported variable is named")
{
    FactorGraph<double> g;
    const auto a = g.add_variable("feeder@3");
    g.add_variable("orphan@3");
    g.add_factor(prior_factor(a, 1.0, 1.0));
    try {
        infer(g);
        FAIL("expected under_determined_graph");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::under_determined_graph);
        REQUIRE(e.subjects().size() == 1);
        CHECK(e.subjects()[0] == "orphan@3");
    }

    // rank-deficient coupling: only the difference of two variables is known
    FactorGraph<double> h;
    const auto x = h.add_variable("x");
    const auto y = h.add_variable("y");
    Eigen::VectorXd w(1);
    w << 1.0;
    h.add_factor(linear_factor(x, {y}, w, 0.0, 1.0));
    CHECK_THROWS_AS(infer(h), Error);
}

TEST_CASE("property: oracle equivalence on random graphs")
{
    std::mt19937_64 rng(20240101);
    std::uniform_int_distribution<int> size(1, 50);
    double worst = 0.0;
    for (int trial = 0; trial < 60; ++trial) {
        const auto g = oracle::random_graph(rng, size(rng));
        const auto post = infer(g);
        const auto ref = oracle::joint(g);
        worst = std::max(worst, (post.mean - ref.mean).cwiseAbs().maxCoeff());
        worst = std::max(worst, (post.marginal_variance - ref.covariance.diagonal()).cwiseAbs().maxCoeff());
        CHECK((post.marginal_variance.array() >= 0.0).all());
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("property: conditioning at the posterior mean keeps free means")
{
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        const auto g = oracle::random_graph(rng, 2 + trial % 20);
        const auto post = infer(g);
        const VariableId v{static_cast<Eigen::Index>(trial % g.size())};
        Evidence<double> e;
        e.assign(v, post.mean_of(v));
        const auto cond = condition(g, e);
        for (auto u : cond.variables) {
            CHECK(std::abs(cond.mean_of(u) - post.mean_of(u)) < 1e-9);
            CHECK(cond.variance_of(u) <= post.variance_of(u) + 1e-12);
        }
    }
}

TEST_CASE("property: assembled precision is bit-symmetric")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = oracle::random_graph(rng, 3 + trial);
        const auto form = assemble(g);
        const Eigen::MatrixXd h = Eigen::MatrixXd(form.precision);
        CHECK((h.array() == h.transpose().array()).all());
    }
}

TEST_CASE("property: merging factors is equivalent to adding them")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        FactorGraph<double> split, merged;
        for (int i = 0; i < 3; ++i) {
            split.add_variable("v" + std::to_string(i));
            merged.add_variable("v" + std::to_string(i));
        }
        Eigen::Matrix2d a;
        a << u(rng), u(rng), u(rng), u(rng);
        const Eigen::Matrix2d j1 = a.transpose() * a + Eigen::Matrix2d::Identity();
        const Eigen::Vector2d e1(u(rng), u(rng));
        Eigen::Matrix2d b;
        b << u(rng), u(rng), u(rng), u(rng);
        const Eigen::Matrix2d j2 = b.transpose() * b + Eigen::Matrix2d::Identity();
        const Eigen::Vector2d e2(u(rng), u(rng));
        // f1 over (v0, v1), f2 over (v1, v2)
        split.add_factor(GaussianFactor<double>({VariableId{0}, VariableId{1}}, j1, e1));
        split.add_factor(GaussianFactor<double>({VariableId{1}, VariableId{2}}, j2, e2));

        Eigen::Matrix3d j = Eigen::Matrix3d::Zero();
        j.block<2, 2>(0, 0) += j1;
        j.block<2, 2>(1, 1) += j2;
        Eigen::Vector3d e = Eigen::Vector3d::Zero();
        e.head<2>() += e1;
        e.tail<2>() += e2;
        merged.add_factor(GaussianFactor<double>({VariableId{0}, VariableId{1}, VariableId{2}}, j, e));

        const auto ps = infer(split);
        const auto pm = infer(merged);
        CHECK((ps.mean - pm.mean).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((ps.marginal_variance - pm.marginal_variance).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("property: factor order does not matter")
{
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = oracle::random_graph(rng, 5 + trial);
        auto factors = g.factors();
        std::shuffle(factors.begin(), factors.end(), rng);
        FactorGraph<double> p;
        for (const auto& l : g.labels()) p.add_variable(l);
        for (auto& f : factors) p.add_factor(f);
        const auto a = infer(g);
        const auto b = infer(p);
        CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.marginal_variance - b.marginal_variance).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("triplet dump")
{
    auto g = chain();
    std::ostringstream out;
    write_information_triplets(out, g);
    const auto text = out.str();
    CHECK(text.rfind("%gridflex information-form 2 4\n", 0) == 0);
    CHECK(text.find("var 1 x2") != std::string::npos);
    CHECK(text.find("H 1 0 -4") != std::string::npos);
}
