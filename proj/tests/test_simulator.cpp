#include "dynsir/contact_process.hpp"
#include "dynsir/simulator.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace dynsir;

namespace {

ModelSpec case6b() { return ModelSpec::single(3, 1, 1, 1, -1, 0, 0); }

void check_trajectory(const Trajectory& t)
{
    REQUIRE_FALSE(t.events.empty());
    CHECK(t.events.front().time == 0.0);
    CHECK(t.events.front().kind == EventKind::Infection);
    CHECK(t.events.front().type == t.initial_type);
    const std::size_t k = t.n_per_type.size();
    std::vector<long> s(t.n_per_type), i(k, 0), r(k, 0);
    long prev_ever = 0;
    for (std::size_t e = 0; e < t.events.size(); ++e) {
        const auto ty = static_cast<std::size_t>(t.events[e].type);
        if (e > 0) CHECK(t.events[e].time >= t.events[e - 1].time);
        if (t.events[e].kind == EventKind::Infection) {
            --s[ty];
            ++i[ty];
        } else {
            --i[ty];
            ++r[ty];
        }
        long ever = 0;
        for (std::size_t v = 0; v < k; ++v) {
            CHECK(s[v] >= 0);
            CHECK(i[v] >= 0);
            CHECK(s[v] + i[v] + r[v] == t.n_per_type[v]);
            ever += i[v] + r[v];
        }
        CHECK(ever >= prev_ever);
        prev_ever = ever;
    }
}

} // namespace

TEST_CASE("a single individual recovers")
{
    for (auto tag : {ModelTag::M1, ModelTag::M2, ModelTag::M3}) {
        const Trajectory t = simulate(tag, case6b(), 1, 5);
        REQUIRE(t.events.size() == 2);
        CHECK(t.events[1].kind == EventKind::Recovery);
        CHECK(t.final_fraction() == 1.0);
    }
}

TEST_CASE("no contacts means no spread")
{
    ModelSpec s = case6b();
    s.beta(0, 0) = 0.0;
    for (auto tag : {ModelTag::M1, ModelTag::M3}) {
        const Trajectory t = simulate(tag, s, 200, 11);
        CHECK(t.ever_infected() == 1);
        CHECK(t.events.size() == 2);
    }
}

TEST_CASE("trajectory invariants")
{
    for (auto tag : {ModelTag::M1, ModelTag::M2, ModelTag::M3}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) check_trajectory(simulate(tag, case6b(), 300, seed));
    }
    ModelSpec two;
    two.k = 2;
    two.p = Vector(2);
    two.p << 0.3, 0.7;
    two.lambda = Matrix::Constant(2, 2, 3.0);
    two.mu = Matrix::Ones(2, 2);
    two.beta = Matrix::Ones(2, 2);
    two.gamma = Vector::Ones(2);
    two.kappa_lambda = Matrix::Constant(2, 2, -1.0);
    two.kappa_mu = Matrix::Zero(2, 2);
    two.kappa_beta = Matrix::Zero(2, 2);
    SimOptions o;
    o.initial_type = 1;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        check_trajectory(simulate_model3(two, 500, seed, o));
        check_trajectory(simulate_model1(two, 500, seed, false, o));
    }
}

TEST_CASE("model 1 refuses large populations")
{
    CHECK_THROWS_AS(simulate_model1(case6b(), 5000, 1, false), InvalidArgument);
}

TEST_CASE("same seed gives the same event log")
{
    for (auto tag : {ModelTag::M1, ModelTag::M3}) {
        std::ostringstream a, b;
        write_events_csv(a, simulate(tag, case6b(), 400, 99), 0);
        write_events_csv(b, simulate(tag, case6b(), 400, 99), 0);
        CHECK(a.str() == b.str());
        CHECK(a.str().size() > 10);
    }
}

TEST_CASE("conditioning")
{
    const Trajectory t = condition_on_outbreak(case6b(), 2000, 17);
    CHECK(t.outbreak);
    REQUIRE(t.crossing_time);
    CHECK(t.ever_infected() >= conditioning_threshold(2000, 17.0 / 24.0));

    const Trajectory plain = simulate_model3(case6b(), 2000, 4);
    CHECK(plain.outbreak == plain.crossing_time.has_value());

    const ModelSpec sub = ModelSpec::single(3, 1, 0.2, 1, -1, 0, 0);
    ConditioningOptions o;
    o.max_restarts = 50;
    try {
        condition_on_outbreak(sub, 10000, 1, o);
        FAIL("expected a conditioning failure");
    } catch (const ConditioningError& e) {
        CHECK(e.discarded_runs == 51);
    }
    CHECK(conditioning_threshold(100000, 17.0 / 24.0) == 3480);
}

TEST_CASE("curves on a grid")
{
    const Trajectory t = condition_on_outbreak(case6b(), 1000, 3);
    const std::vector<double> grid{-1.0, 0.0, 1.0, 5.0, 1e6};
    const TypeCurves c = curves_at(t, grid);
    CHECK(c.s[0][0] == doctest::Approx(1.0 - 1.0 / 1000));
    CHECK(c.i[0][0] == doctest::Approx(1.0 / 1000));
    for (std::size_t g = 0; g < grid.size(); ++g) CHECK(c.s[0][g] + c.i[0][g] + c.r[0][g] == doctest::Approx(1.0));
    CHECK(c.i[0].back() == 0.0);
    CHECK(c.r[0].back() == doctest::Approx(t.final_fraction()));
}

TEST_CASE("mean contacts per infective approach the finite-n R0")
{
    const ModelSpec s = case6b();
    const long n = 100000;
    long infections = 0;
    std::uint64_t contacts = 0;
    for (std::uint64_t seed = 0; seed < 5000 && infections < 100000; ++seed) {
        SimOptions o;
        o.threshold = 500;
        o.stop_at_threshold = true;
        const Trajectory t = simulate_model3(s, n, seed, o);
        // Only fully resolved infectives count: stopping early truncates nothing
        // because contacts are drawn at infection time.
        infections += t.ever_infected();
        contacts += t.contacts;
    }
    const double mean = static_cast<double>(contacts) / static_cast<double>(infections);
    CHECK(std::abs(mean / r0_n(1, 3.0 / n, 1, 1, static_cast<double>(n)) - 1.0) < 0.01);
}
