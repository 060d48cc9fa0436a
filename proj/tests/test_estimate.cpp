#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "meldctl/estimate.hpp"
#include "meldctl/system.hpp"

using namespace meldctl;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<int>(v.size()));
    int i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

Box scenario_box() {
    return {vec({-0.6, -0.2, -0.75, -1.2, -1.2, -1.2}), vec({1.05, 1.35, 1.95, 1.2, 1.2, 1.2})};
}

}  // namespace

TEST_CASE("latin hypercube sampling is stratified and deterministic") {
    Box box{vec({-1.0, 2.0}), vec({1.0, 6.0})};
    auto a = latin_hypercube(box, 100, 42);
    auto b = latin_hypercube(box, 100, 42);
    auto c = latin_hypercube(box, 100, 43);
    REQUIRE(a.size() == 100);
    bool identical = true;
    bool differs = false;
    for (int s = 0; s < 100; ++s) {
        identical = identical && a[static_cast<std::size_t>(s)] == b[static_cast<std::size_t>(s)];
        differs = differs || a[static_cast<std::size_t>(s)] != c[static_cast<std::size_t>(s)];
    }
    CHECK(identical);
    CHECK(differs);

    for (int d = 0; d < 2; ++d) {
        std::set<int> strata;
        for (const auto& x : a) {
            CHECK(x(d) >= box.lo(d));
            CHECK(x(d) <= box.hi(d));
            strata.insert(static_cast<int>((x(d) - box.lo(d)) / (box.hi(d) - box.lo(d)) * 100));
        }
        CHECK(strata.size() == 100);  // one sample per stratum
    }
}

TEST_CASE("dwell formulas reproduce hand-computed values") {
    AssumptionConstants consts;
    consts.N = 0.1;
    consts.L_Theta = 2.0;
    consts.L_Psi = 1.5;
    auto cert = dwell_times(consts, 1.0, 1.0, 3, 0.1, 0.0);
    CHECK(cert.tau_bar == doctest::Approx(std::log(12.0)).epsilon(1e-14));
    CHECK(cert.S == doctest::Approx(5.7).epsilon(1e-14));
    CHECK(cert.tau0 == 0.0);
    CHECK(cert.T == cert.tau0);
}

TEST_CASE("dwell clamps and guards") {
    AssumptionConstants consts;
    consts.L_Theta = 1.0;
    CHECK_THROWS_AS(dwell_times(consts, 1.0, 1.0, 1, 0.0, 1.0), NonpositiveEpsilon);
    CHECK_THROWS_AS(dwell_times(consts, 1.0, 1.0, 1, -0.2, 1.0), NonpositiveEpsilon);
    CHECK_THROWS_AS(dwell_times(consts, 0.0, 1.0, 1, 0.1, 1.0), NotHurwitz);

    // log argument at or below one clamps to zero
    auto c0 = dwell_times(consts, 2.0, 1.0, 1, 0.5, 0.0);
    CHECK(c0.tau0 == 0.0);
    auto c1 = dwell_times(consts, 2.0, 1.0, 1, 0.5, 0.5);
    CHECK(c1.tau0 == 0.0);
    auto c2 = dwell_times(consts, 2.0, 1.0, 1, 0.5, 10.0);
    CHECK(c2.tau0 == doctest::Approx(std::log(20.0) / 2.0));
}

TEST_CASE("recurring dwell is monotone in every argument") {
    AssumptionConstants base;
    base.N = 0.1;
    base.L_Theta = 2.0;
    base.L_Psi = 1.5;
    double t0 = dwell_times(base, 1.0, 2.0, 3, 0.1, 1.0).tau_bar;

    AssumptionConstants up = base;
    up.N = 0.2;
    CHECK(dwell_times(up, 1.0, 2.0, 3, 0.1, 1.0).tau_bar >= t0);
    up = base;
    up.L_Theta = 3.0;
    CHECK(dwell_times(up, 1.0, 2.0, 3, 0.1, 1.0).tau_bar >= t0);
    CHECK(dwell_times(base, 1.0, 3.0, 3, 0.1, 1.0).tau_bar >= t0);
    CHECK(dwell_times(base, 1.0, 2.0, 4, 0.1, 1.0).tau_bar >= t0);
    CHECK(dwell_times(base, 1.0, 2.0, 3, 0.2, 1.0).tau_bar <= t0);
    CHECK(dwell_times(base, 2.0, 2.0, 3, 0.1, 1.0).tau_bar <= t0);
}

TEST_CASE("shared outputs intersect the active selections") {
    SwitchSchedule sched;
    sched.t_start = 0.0;
    sched.t_end = 3.0;
    sched.switches = {1.0, 2.0};
    sched.melds = {Choice::from_indices({1, 2, 3}, 7), Choice::from_indices({2, 3, 4}, 7),
                   Choice::from_indices({3, 4, 5}, 7)};
    sched.validate();

    CHECK(shared_outputs(sched, 0, 1) == std::vector<int>{2, 3});
    CHECK(shared_outputs(sched, 0, 0) == std::vector<int>{1, 2, 3});
    CHECK(shared_outputs(sched, 0, 2) == std::vector<int>{3});
    CHECK(shared_outputs(sched, 1, 1) == std::vector<int>{3, 4});
    CHECK_THROWS_AS(shared_outputs(sched, 1, 2), IndexOutOfRange);
    CHECK_THROWS_AS(shared_outputs(sched, -1, 0), IndexOutOfRange);
}

TEST_CASE("scenario schedule keeps the first joint through the last switch") {
    SwitchSchedule sched;
    sched.t_start = 0.0;
    sched.t_end = 22.0;
    sched.switches = {4.0, 7.0, 9.0, 13.0, 18.0};
    sched.melds = {Choice::from_indices({0, 1, 2}, 7), Choice::from_indices({2, 3, 4}, 7),
                   Choice::from_indices({1, 5, 6}, 7), Choice::from_indices({2, 5, 6}, 7),
                   Choice::from_indices({0, 5, 6}, 7), Choice::from_indices({0, 1, 2}, 7)};
    sched.validate();

    auto block45 = shared_outputs(sched, 4, 1);
    CHECK(std::find(block45.begin(), block45.end(), 0) != block45.end());
    CHECK(shared_outputs(sched, 1, 1).empty());
    CHECK(shared_outputs(sched, 0, 1) == std::vector<int>{2});
    CHECK(shared_outputs(sched, 2, 1) == std::vector<int>{5, 6});

    CHECK(sched.active_index(0.0) == 0);
    CHECK(sched.active_index(4.0) == 1);
    CHECK(sched.active_index(8.99) == 2);
    CHECK(sched.active_index(21.999) == 5);
    CHECK(sched.interval_start(3) == 9.0);
    CHECK(sched.interval_end(3) == 13.0);
}

TEST_CASE("double integrator constants are exact") {
    DoubleIntegratorModel di;
    StateVec<DoubleIntegratorModel> x0{0.0, 0.0};
    auto cert = certify_meld(di, Choice::from_indices({0}, 2), x0);

    JointTrajectory traj;
    traj.knots = {0.0, 2.0, 5.0};
    traj.waypoints = {Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 1.0),
                      Eigen::VectorXd::Constant(1, -0.5)};
    auto refs = build_reference(di, traj, {2, 1});

    Box box{vec({-2.0, -2.0}), vec({2.0, 2.0})};
    EstimateOptions opt;
    opt.n_samples = 500;
    auto consts = estimate_assumption_constants(di, {cert}, refs, box, opt);

    // All flat maps are the identity in these coordinates.
    CHECK(consts.L_Psi == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(consts.L_Theta == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(consts.N <= 1e-8);
}

TEST_CASE("manipulator constants are finite and the consistent bundle has tiny N") {
    ThreeRModel arm;
    StateVec<ThreeRModel> x0{0.0, M_PI / 4, 0.0, 0.0, 0.0, 0.0};
    std::vector<MeldCertificate> melds = {
        certify_meld(arm, Choice::from_indices({0, 1, 2}, 7), x0),
        certify_meld(arm, Choice::from_indices({2, 3, 4}, 7), x0),
    };

    std::vector<ScenarioItem> items = {
        {Choice::from_indices({0, 1, 2}, 7), vec({0.4, 0.9, -0.5})},
        {Choice::from_indices({2, 3, 4}, 7), vec({-0.3, 0.55, 0.50})},
    };
    auto traj = plan_trajectory(arm, vec({0.0, M_PI / 4, 0.0}), items, {0.0, 4.0, 7.0});
    auto refs = build_reference(arm, traj, std::vector<int>(7, 2));

    EstimateOptions opt;
    opt.n_samples = 400;
    opt.time_samples = 71;
    auto consts = estimate_assumption_constants(arm, melds, refs, scenario_box(), opt);
    CHECK(consts.L_Psi >= 1.0);
    CHECK(consts.L_Theta >= 1.0);
    CHECK(std::isfinite(consts.L_Psi));
    CHECK(std::isfinite(consts.L_Theta));
    CHECK(consts.N <= 1e-8);

    // a constant offset on one output must surface in N
    auto biased = refs;
    biased.bias = Eigen::VectorXd::Zero(7);
    biased.bias(3) = 0.05;
    auto bc = estimate_assumption_constants(arm, melds, refs, scenario_box(), opt);
    auto bb = estimate_assumption_constants(arm, melds, biased, scenario_box(), opt);
    CHECK(bb.N >= 0.049);
    CHECK(bc.N <= 1e-8);
}

TEST_CASE("growing the box cannot shrink the sampled constants") {
    ThreeRModel arm;
    StateVec<ThreeRModel> x0{0.0, M_PI / 4, 0.0, 0.0, 0.0, 0.0};
    std::vector<MeldCertificate> melds = {certify_meld(arm, Choice::from_indices({1, 5, 6}, 7), x0)};

    JointTrajectory traj;
    traj.knots = {0.0, 1.0};
    traj.waypoints = {vec({0.0, M_PI / 4, 0.0}), vec({0.2, 0.9, 0.3})};
    auto refs = build_reference(arm, traj, std::vector<int>(7, 2));

    EstimateOptions opt;
    opt.n_samples = 400;
    opt.time_samples = 11;
    Box tight{vec({0.1, 0.6, 0.4, -0.2, -0.2, -0.2}), vec({0.5, 1.0, 0.8, 0.2, 0.2, 0.2})};
    Box wide{vec({-0.2, 0.2, 0.1, -0.8, -0.8, -0.8}), vec({0.9, 1.3, 1.6, 0.8, 0.8, 0.8})};
    auto a = estimate_assumption_constants(arm, melds, refs, tight, opt);
    auto b = estimate_assumption_constants(arm, melds, refs, wide, opt);
    CHECK(b.L_Psi >= a.L_Psi);
    CHECK(b.L_Theta >= a.L_Theta);
}

TEST_CASE("a box saturated by a singular choice fails estimation") {
    ThreeRModel arm;
    StateVec<ThreeRModel> bent{0.3, 0.7, 0.9, 0.0, 0.0, 0.0};
    // certified away from the elbow singularity, then sampled on top of it
    auto cert = certify_meld(arm, Choice::from_indices({0, 5, 6}, 7), bent);
    REQUIRE(cert.is_meld);

    JointTrajectory traj;
    traj.knots = {0.0, 1.0};
    traj.waypoints = {vec({0.3, 0.7, 0.9}), vec({0.3, 0.7, 0.9})};
    auto refs = build_reference(arm, traj, std::vector<int>(7, 2));

    EstimateOptions opt;
    opt.n_samples = 300;
    Box singular{vec({-0.5, -0.5, -1e-7, -0.5, -0.5, -0.5}), vec({0.5, 0.5, 1e-7, 0.5, 0.5, 0.5})};
    CHECK_THROWS_AS(estimate_assumption_constants(arm, {cert}, refs, singular, opt),
                    InversionFailure);
}

TEST_CASE("estimation rejects an empty meld set and a bad box") {
    ThreeRModel arm;
    JointTrajectory traj;
    traj.knots = {0.0, 1.0};
    traj.waypoints = {vec({0.0, 0.5, 0.0}), vec({0.0, 0.5, 0.0})};
    auto refs = build_reference(arm, traj, std::vector<int>(7, 2));
    CHECK_THROWS_AS(estimate_assumption_constants(arm, {}, refs, scenario_box(), {}),
                    EmptyMeldSet);

    StateVec<ThreeRModel> x0{0.0, M_PI / 4, 0.0, 0.0, 0.0, 0.0};
    auto cert = certify_meld(arm, Choice::from_indices({0, 1, 2}, 7), x0);
    Box bad{vec({0.0, 0.0, 0.0}), vec({1.0, 1.0, 1.0})};
    CHECK_THROWS_AS(estimate_assumption_constants(arm, {cert}, refs, bad, {}), DimensionMismatch);
}
