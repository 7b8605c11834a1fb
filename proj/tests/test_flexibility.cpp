#include <doctest.h>

#include "gridflex/flexibility.hpp"
#include "oracles.hpp"

#include <sstream>

using namespace gridflex;
using doctest::Approx;

namespace {

// substation = f1 + f2 at the residual floor, substation unmetered
GridGraph two_feeder_graph(double var1, double var2, double m1 = 55.0, double m2 = 55.0)
{
    GraphBuildInput in;
    in.topology.substations = {{"S", "s", ""}};
    in.topology.feeders = {{"F1", "f1", "S"}, {"F2", "f2", "S"}};
    in.forecasts["f1"] = {m1, var1};
    in.forecasts["f2"] = {m2, var2};
    RelationalModel sum;
    sum.child = "s";
    sum.parents = {"f1", "f2"};
    sum.weights = Eigen::VectorXd::Ones(2);
    sum.residual_variance = 1e-9;
    in.models = {sum};
    return build_graph(in, 10);
}

} // namespace

TEST_CASE("exceedance probabilities")
{
    CHECK(exceedance_high(100.0, 3.0, 100.0) == Approx(0.5));
    CHECK(exceedance_low(100.0, 3.0, 100.0) == Approx(0.5));
    // frozen from the standard normal survival function at -2
    CHECK(exceedance_high(110.0, 5.0, 100.0) == Approx(0.9772498680518208).epsilon(1e-12));
    CHECK(exceedance_low(90.0, 5.0, 100.0) == Approx(0.9772498680518208).epsilon(1e-12));
    CHECK(exceedance_high(50.0, 1.0, 100.0) < 1e-20);
    CHECK(exceedance_high(101.0, 0.0, 100.0) == 1.0);
    CHECK(exceedance_high(99.0, 0.0, 100.0) == 0.0);
    CHECK(exceedance_low(99.0, 0.0, 100.0) == 1.0);
}

TEST_CASE("detect violations")
{
    const auto g = two_feeder_graph(25.0, 25.0);
    const auto post = infer(g.graph);
    const std::vector<OperationalRange> ranges{{"s", 0.0, 100.0}};
    auto v = detect_violations(post, g, ranges, 0.5);
    REQUIRE(v.size() == 1);
    CHECK(v[0].series == "s");
    CHECK(v[0].step == 10);
    CHECK(v[0].bound == Bound::high);
    CHECK(v[0].predicted_mean == Approx(110.0));
    CHECK(v[0].predicted_sd == Approx(std::sqrt(50.0)).epsilon(1e-6));
    CHECK(v[0].exceedance_probability == Approx(exceedance_high(110.0, std::sqrt(50.0), 100.0)));

    // far inside the range: nothing at any sane threshold
    const std::vector<OperationalRange> wide{{"s", -1000.0, 1000.0}};
    CHECK(detect_violations(post, g, wide, 1e-6).empty());

    const std::vector<OperationalRange> low{{"s", 120.0, 200.0}};
    v = detect_violations(post, g, low, 0.5);
    REQUIRE(v.size() == 1);
    CHECK(v[0].bound == Bound::low);

    const std::vector<OperationalRange> unknown{{"zz", 0.0, 1.0}};
    CHECK_THROWS_AS(detect_violations(post, g, unknown, 0.5), Error);
    CHECK_THROWS_AS(detect_violations(post, g, ranges, 1.0), Error);
}

TEST_CASE("equal feeder priors split the shift evenly")
{
    const auto g = two_feeder_graph(25.0, 25.0);
    const auto post = infer(g.graph);
    const std::vector<OperationalRange> ranges{{"s", 0.0, 100.0}};
    const auto v = detect_violations(post, g, ranges, 0.5);
    const auto req = estimate_flexibility(g, v.front(), {"f1", "f2"});
    REQUIRE(req.size() == 2);
    // a 1e-9 residual against 25 MW^2 priors puts the information matrix near
    // cond 1e10, so the split is only good to about 1e-5 relative
    CHECK(req[0].amount == Approx(-5.0).epsilon(1e-4));
    CHECK(req[1].amount == Approx(-5.0).epsilon(1e-4));
    CHECK(req[0].covering.series == "s");
}

TEST_CASE("unequal feeder priors split 1:4")
{
    const auto g = two_feeder_graph(25.0, 100.0);
    const auto post = infer(g.graph);
    const std::vector<OperationalRange> ranges{{"s", 0.0, 100.0}};
    const auto v = detect_violations(post, g, ranges, 0.5);
    const auto req = estimate_flexibility(g, v.front(), {"f1", "f2"});
    REQUIRE(req.size() == 2);
    // sorted by |amount|: f2 first
    CHECK(req[0].series == "f2");
    CHECK(req[0].amount == Approx(-8.0).epsilon(1e-4));
    CHECK(req[1].series == "f1");
    CHECK(req[1].amount == Approx(-2.0).epsilon(1e-4));

    // oracle: moment-form conditioning of the joint on s = 100
    const auto joint = oracle::joint(g.graph);
    Eigen::VectorXd at(1);
    at << 100.0;
    const auto ref = oracle::condition(joint, {g.variable("s").index}, at);
    CHECK(std::abs((ref.mean(0) - joint.mean(0)) - req[1].amount) < 1e-3);
}

TEST_CASE("flexibility edge cases")
{
    // a controllable without coupling to the violated variable gets nothing
    GraphBuildInput in;
    in.topology.substations = {{"S", "s", ""}, {"T", "t", ""}};
    in.topology.feeders = {{"F1", "f1", "S"}, {"G1", "g1", "T"}};
    in.forecasts = {{"s", {110.0, 4.0}}, {"f1", {50.0, 4.0}}, {"t", {10.0, 1.0}}, {"g1", {10.0, 1.0}}};
    const auto g = build_graph(in, 0);
    const auto post = infer(g.graph);
    const std::vector<OperationalRange> ranges{{"s", 0.0, 100.0}};
    const auto v = detect_violations(post, g, ranges, 0.5);
    REQUIRE(v.size() == 1);
    CHECK(estimate_flexibility(g, v.front(), {"g1"}).empty());

    CHECK_THROWS_AS(estimate_flexibility(g, v.front(), {"s"}), Error);
    CHECK_THROWS_AS(estimate_flexibility(g, v.front(), {}), Error);

    // dead band suppresses small amounts
    const auto coupled = two_feeder_graph(25.0, 1e-3);
    const auto cp = infer(coupled.graph);
    const auto cv = detect_violations(cp, coupled, ranges, 0.5);
    const auto req = estimate_flexibility(coupled, cv.front(), {"f1", "f2"});
    REQUIRE(req.size() == 1);
    CHECK(req[0].series == "f1");
}

TEST_CASE("property: flexibility sufficiency on the fixture")
{
    for (double v2 : {25.0, 100.0, 400.0}) {
        auto g = two_feeder_graph(25.0, v2);
        const auto post = infer(g.graph);
        const std::vector<OperationalRange> ranges{{"s", 0.0, 100.0}};
        const auto v = detect_violations(post, g, ranges, 0.5);
        const auto req = estimate_flexibility(g, v.front(), {"f1", "f2"});
        REQUIRE(req.size() == 2);
        for (const auto& r : req) {
            const auto var = g.variable(r.series);
            g.graph.add_factor(prior_factor(var, post.mean_of(var) + r.amount, 1e-9));
        }
        const auto after = infer(g.graph);
        const auto s = g.variable("s");
        CHECK(std::abs(after.mean_of(s) - 100.0) <= 1e-6 * 100.0);
        CHECK(exceedance_high(after.mean_of(s), after.sd_of(s), 100.0) < 0.5);
        CHECK(detect_violations(after, g, ranges, 0.5).empty());
    }
}

TEST_CASE("aggregate requests into windows")
{
    auto req = [](std::string s, int step, double a) {
        return FlexRequest{std::move(s), step, Instant{} + kDefaultResolution * step, a, {}};
    };
    const auto w = aggregate_requests({req("b", 5, -1.0), req("a", 2, -2.0), req("a", 3, -4.0), req("a", 7, -1.0), req("b", 6, -3.0)});
    REQUIRE(w.size() == 3);
    CHECK(w[0].series == "a");
    CHECK(w[0].start_step == 2);
    CHECK(w[0].end_step == 3);
    CHECK(w[0].energy == Approx(-1.5));
    CHECK(w[1].start_step == 7);
    CHECK(w[2].series == "b");
    CHECK(w[2].amounts == std::vector<double>{-1.0, -3.0});
    CHECK(w[2].end == Instant{} + kDefaultResolution * 6);
    CHECK(aggregate_requests({}).empty());
}

TEST_CASE("csv writers")
{
    Violation v{"s", 3, parse_instant("2024-01-01T01:00:00Z"), Bound::high, 100.0, 110.0, 5.0, 0.977};
    std::ostringstream out;
    write_violations_csv(out, std::span<const Violation>(&v, 1));
    CHECK(out.str() == "series_id,step,timestamp,bound,limit,predicted_mean,predicted_sd,exceedance_probability\n"
                       "s,3,2024-01-01T01:00:00Z,high,100,110,5,0.977\n");
    FlexRequest r{"f1", 3, v.timestamp, -5.0, v};
    std::ostringstream rq;
    write_requests_csv(rq, std::span<const FlexRequest>(&r, 1));
    CHECK(rq.str() == "series_id,step,timestamp,amount,covering_series,covering_bound\n"
                      "f1,3,2024-01-01T01:00:00Z,-5,s,high\n");
}
