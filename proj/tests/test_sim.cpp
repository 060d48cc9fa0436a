#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "meldctl/gains.hpp"
#include "meldctl/meld.hpp"
#include "meldctl/reference.hpp"
#include "meldctl/sim.hpp"
#include "meldctl/system.hpp"

using namespace meldctl;

namespace {

struct DecayModel {
    static constexpr int kN = 1;
    static constexpr int kM = 1;
    static constexpr int kQ = 1;
    template <class S>
    void f(const std::array<S, 1>& x, std::array<S, 1>& out) const { out[0] = -x[0]; }
    template <class S>
    void g(int, const std::array<S, 1>&, std::array<S, 1>& out) const { out[0] = S(0.0); }
    template <class S>
    S h(int, const std::array<S, 1>& x) const { return x[0]; }
};

struct BlowupModel {
    static constexpr int kN = 1;
    static constexpr int kM = 1;
    static constexpr int kQ = 1;
    template <class S>
    void f(const std::array<S, 1>& x, std::array<S, 1>& out) const { out[0] = x[0] * x[0]; }
    template <class S>
    void g(int, const std::array<S, 1>&, std::array<S, 1>& out) const { out[0] = S(0.0); }
    template <class S>
    S h(int, const std::array<S, 1>& x) const { return x[0]; }
};

ThreeRModel arm() { return ThreeRModel{}; }

StateVec<ThreeRModel> scenario_x0() {
    return {0.0, M_PI / 4.0, 0.0, 0.1, 0.1, 0.1};
}

std::vector<ScenarioItem> two_leg_items() {
    std::vector<ScenarioItem> items;
    {
        ScenarioItem it;
        it.sigma = Choice::from_indices({0, 1, 2}, ThreeRModel::kQ);
        it.target = Eigen::Vector3d(0.4, 0.9, -0.5);
        items.push_back(it);
    }
    {
        ScenarioItem it;
        it.sigma = Choice::from_indices({2, 3, 4}, ThreeRModel::kQ);
        it.target = Eigen::Vector3d(-0.3, 0.55, 0.50);
        items.push_back(it);
    }
    return items;
}

ReferenceBundle<ThreeRModel> two_leg_refs(const ThreeRModel& sys) {
    auto x0 = scenario_x0();
    Eigen::Vector3d q0(x0[0], x0[1], x0[2]);
    auto traj = plan_trajectory(sys, q0, two_leg_items(), {0.0, 4.0, 7.0});
    return build_reference(sys, traj, std::vector<int>(ThreeRModel::kQ, 2));
}

ReferenceBundle<ThreeRModel> one_leg_refs(const ThreeRModel& sys, double t_end) {
    auto x0 = scenario_x0();
    Eigen::Vector3d q0(x0[0], x0[1], x0[2]);
    std::vector<ScenarioItem> items(1, two_leg_items()[0]);
    auto traj = plan_trajectory(sys, q0, items, {0.0, t_end});
    return build_reference(sys, traj, std::vector<int>(ThreeRModel::kQ, 2));
}

SwitchSchedule one_meld_schedule(double t_end) {
    SwitchSchedule s;
    s.t_start = 0.0;
    s.t_end = t_end;
    s.melds.push_back(Choice::from_indices({0, 1, 2}, ThreeRModel::kQ));
    return s;
}

double arm_energy(const ThreeRModel& sys, const StateVec<ThreeRModel>& x) {
    std::array<double, 3> q{x[0], x[1], x[2]};
    double M[3][3];
    sys.mass_matrix(q, M);
    double e = 0.0;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) e += 0.5 * x[3 + a] * M[a][b] * x[3 + b];
    return e;
}

std::uint64_t splitmix(std::uint64_t& s) {
    s += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double unif(std::uint64_t& s, double lo, double hi) {
    return lo + (hi - lo) * (splitmix(s) >> 11) * 0x1.0p-53;
}

}  // namespace

TEST_CASE("rk4 matches the hand-computed decay step") {
    DecayModel sys;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
    StateVec<DecayModel> x{1.0};
    auto next = rk4_step(sys, x, u, 0.1);
    CHECK(next[0] == doctest::Approx(0.9048375).epsilon(1e-14));

    // fourth-order convergence toward e^{-1}
    auto endpoint = [&](double dt) {
        StateVec<DecayModel> y{1.0};
        int steps = static_cast<int>(std::llround(1.0 / dt));
        for (int k = 0; k < steps; ++k) y = rk4_step(sys, y, u, dt);
        return y[0];
    };
    double e1 = std::abs(endpoint(0.02) - std::exp(-1.0));
    double e2 = std::abs(endpoint(0.01) - std::exp(-1.0));
    CHECK(e1 / e2 > 13.0);
    CHECK(e1 / e2 < 19.0);
}

TEST_CASE("rk4 rejects bad inputs and nonfinite states") {
    DecayModel sys;
    StateVec<DecayModel> x{1.0};
    CHECK_THROWS_AS(rk4_step(sys, x, Eigen::VectorXd::Zero(2), 0.1), DimensionMismatch);
    CHECK_THROWS_AS(rk4_step(sys, x, Eigen::VectorXd::Zero(1), 0.0), DimensionMismatch);
    CHECK_THROWS_AS(rk4_step(sys, x, Eigen::VectorXd::Zero(1), -0.1), DimensionMismatch);

    BlowupModel bad;
    StateVec<BlowupModel> y{10.0};
    Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
    CHECK_THROWS_AS(
        [&] {
            for (int k = 0; k < 200; ++k) y = rk4_step(bad, y, u, 0.5);
        }(),
        NonFiniteState);
}

TEST_CASE("free swing conserves energy") {
    ThreeRModel sys = arm();
    StateVec<ThreeRModel> x{0.4, 0.9, -0.5, 0.3, -0.2, 0.1};
    const double e0 = arm_energy(sys, x);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(3);
    for (int k = 0; k < 1000; ++k) x = rk4_step(sys, x, u, 1e-3);
    CHECK(std::abs(arm_energy(sys, x) - e0) < 1e-9);
}

TEST_CASE("mass matrix rate minus twice coriolis is skew") {
    ThreeRModel sys = arm();
    std::uint64_t seed = 2026;
    for (int trial = 0; trial < 50; ++trial) {
        std::array<double, 3> q{}, qd{};
        for (int j = 0; j < 3; ++j) {
            q[j] = unif(seed, -2.0, 2.0);
            qd[j] = unif(seed, -1.5, 1.5);
        }
        std::array<Dual<double>, 3> qdual;
        for (int j = 0; j < 3; ++j) qdual[j] = Dual<double>(q[j], qd[j]);
        Dual<double> Md[3][3];
        sys.mass_matrix(qdual, Md);
        double C[3][3];
        sys.coriolis(q, qd, C);
        double s = 0.0;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) s += qd[a] * (Md[a][b].d - 2.0 * C[a][b]) * qd[b];
        CHECK(std::abs(s) < 1e-10);
    }
}

TEST_CASE("decay fit recovers a pure exponential") {
    std::vector<double> t;
    Eigen::VectorXd err(201);
    for (int k = 0; k <= 200; ++k) {
        t.push_back(0.01 * k);
        err(k) = 3.0 * std::exp(-1.2 * 0.01 * k);
    }
    CHECK(fit_decay_rate(t, err, 0, 201) == doctest::Approx(1.2).epsilon(1e-9));
    CHECK(std::isnan(fit_decay_rate(t, err, 0, 3)));
    err(150) = 0.0;
    CHECK(std::isnan(fit_decay_rate(t, err, 0, 201)));
}

TEST_CASE("schedule construction guards") {
    SwitchSchedule s = one_meld_schedule(0.0);
    CHECK_THROWS_AS(s.validate(), DimensionMismatch);
    s.t_end = 4.0;
    s.switches = {2.0, 1.0};
    CHECK_THROWS_AS(s.validate(), DimensionMismatch);
    s.switches = {2.0};
    CHECK_THROWS_AS(s.validate(), DimensionMismatch);  // melds vs switches count

    ThreeRModel sys = arm();
    auto x0 = scenario_x0();
    CHECK_THROWS_AS(
        schedule_certificate(sys, Choice::from_indices({0, 1}, ThreeRModel::kQ),
                             std::vector<int>(ThreeRModel::kQ, 2), x0),
        DimensionMismatch);
    auto blocked = schedule_certificate(sys, Choice::from_indices({0, 3, 4}, ThreeRModel::kQ),
                                        std::vector<int>(ThreeRModel::kQ, 2), x0);
    CHECK_FALSE(blocked.is_meld);
    CHECK(blocked.reject_reason == "singular-interaction");
}

TEST_CASE("single-meld run tracks the reference") {
    ThreeRModel sys = arm();
    auto refs = one_leg_refs(sys, 4.0);
    auto schedule = one_meld_schedule(4.0);
    auto gains = GainProfile::uniform(ThreeRModel::kQ, Eigen::Vector2d(15.0, 15.0));

    // start on the reference so transients carry no initial offset
    auto x0 = refs.state(0.0);
    auto trace = run_scenario(sys, gains, refs, schedule, x0, 1e-3);

    REQUIRE(trace.rows() == 4001);
    CHECK(trace.chi_failures == 0);
    CHECK(trace.warnings.empty());

    for (int i = 0; i < 3; ++i) CHECK(trace.Err(trace.rows() - 1, i) < 1e-2);

    // joint accelerations follow the held virtual input
    double fd_gap = 0.0;
    for (int r = 1; r + 1 < trace.rows(); ++r) {
        for (int i = 0; i < 3; ++i) {
            double fd = (trace.Y(r + 1, i) - 2.0 * trace.Y(r, i) + trace.Y(r - 1, i)) / 1e-6;
            fd_gap = std::max(fd_gap, std::abs(fd - trace.W(r, i)));
        }
    }
    CHECK(fd_gap < 1e-3);
}

TEST_CASE("off-reference start decays at the design rate") {
    ThreeRModel sys = arm();
    auto refs = one_leg_refs(sys, 4.0);
    auto schedule = one_meld_schedule(4.0);
    auto gains = GainProfile::uniform(ThreeRModel::kQ, Eigen::Vector2d(15.0, 15.0));
    auto trace = run_scenario(sys, gains, refs, schedule, scenario_x0(), 1e-3);

    auto cert = schedule_certificate(sys, schedule.melds[0], refs.degrees, scenario_x0());
    auto mc = meld_constants(cert, gains);
    for (int i = 0; i < 3; ++i) {
        double rate = fit_decay_rate(trace.t, trace.Err.col(i), 0, trace.rows());
        CHECK(rate > 0.95 * mc.alpha_sigma);
        CHECK(rate < 1.6 * mc.alpha_sigma);
    }
    double chi_max = 0.0;
    for (int r = 0; r < trace.rows(); ++r)
        if (std::isfinite(trace.chi_err(r))) chi_max = std::max(chi_max, trace.chi_err(r));
    CHECK(chi_max < 1.0);
    CHECK(chi_max > 0.0);
}

TEST_CASE("trace survives the serializer round trip") {
    ThreeRModel sys = arm();
    auto refs = one_leg_refs(sys, 4.0);
    auto schedule = one_meld_schedule(0.5);
    auto gains = GainProfile::uniform(ThreeRModel::kQ, Eigen::Vector2d(15.0, 15.0));
    auto trace = run_scenario(sys, gains, refs, schedule, scenario_x0(), 1e-3);

    std::ostringstream first, second;
    write_trace_csv(first, trace);
    write_trace_csv(second, trace);
    CHECK(first.str() == second.str());

    std::istringstream head_in(first.str());
    std::string head;
    std::getline(head_in, head);
    CHECK(head ==
          "t,x1,x2,x3,x4,x5,x6,u1,u2,u3,meld_id,"
          "y1,yd1,err1,y2,yd2,err2,y3,yd3,err3,y4,yd4,err4,"
          "y5,yd5,err5,y6,yd6,err6,y7,yd7,err7,chi_err,bound_S");

    std::istringstream in(first.str());
    auto back = read_trace_csv(in);
    REQUIRE(back.rows() == trace.rows());
    for (int r = 0; r < trace.rows(); ++r) {
        CHECK(back.t[static_cast<std::size_t>(r)] == trace.t[static_cast<std::size_t>(r)]);
        CHECK(back.meld_id[static_cast<std::size_t>(r)] ==
              trace.meld_id[static_cast<std::size_t>(r)]);
        for (int c = 0; c < 6; ++c) CHECK(back.X(r, c) == trace.X(r, c));
        for (int j = 0; j < 3; ++j) CHECK(back.U(r, j) == trace.U(r, j));
        for (int i = 0; i < 7; ++i) {
            CHECK(back.Y(r, i) == trace.Y(r, i));
            CHECK(back.Yd(r, i) == trace.Yd(r, i));
            CHECK(back.Err(r, i) == trace.Err(r, i));
        }
        CHECK(back.chi_err(r) == trace.chi_err(r));
        CHECK((std::isnan(back.bound_S(r)) && std::isnan(trace.bound_S(r))));
    }
}

TEST_CASE("two-leg run switches cleanly") {
    ThreeRModel sys = arm();
    auto refs = two_leg_refs(sys);
    SwitchSchedule schedule;
    schedule.t_start = 0.0;
    schedule.t_end = 7.0;
    schedule.switches = {4.0};
    schedule.melds.push_back(Choice::from_indices({0, 1, 2}, ThreeRModel::kQ));
    schedule.melds.push_back(Choice::from_indices({2, 3, 4}, ThreeRModel::kQ));
    auto gains = GainProfile::uniform(ThreeRModel::kQ, Eigen::Vector2d(15.0, 15.0));
    auto trace = run_scenario(sys, gains, refs, schedule, scenario_x0(), 1e-3);

    REQUIRE(trace.rows() == 7001);
    CHECK(trace.warnings.empty());
    CHECK(trace.meld_id[3999] == 7u);
    CHECK(trace.meld_id[4000] == 28u);

    // the state trace is one unbroken integration
    const int sw = 4000;
    StateVec<ThreeRModel> prev{};
    for (int c = 0; c < 6; ++c) prev[static_cast<std::size_t>(c)] = trace.X(sw - 1, c);
    Eigen::VectorXd u_prev = trace.U.row(sw - 1).transpose();
    auto stepped = rk4_step(sys, prev, u_prev, 1e-3);
    for (int c = 0; c < 6; ++c) CHECK(trace.X(sw, c) == stepped[static_cast<std::size_t>(c)]);

    // the shared output rides through the switch on its own companion flow
    const Eigen::Vector2d krow(15.0, 15.0);
    Eigen::MatrixXd E = expm(companion(krow) * 1e-3);
    auto jet_err = [&](int row) {
        StateVec<ThreeRModel> xs{};
        for (int c = 0; c < 6; ++c) xs[static_cast<std::size_t>(c)] = trace.X(row, c);
        Eigen::VectorXd ref =
            refs.jets(sys, 2, trace.t[static_cast<std::size_t>(row)], 1);
        Eigen::VectorXd jet = output_jet(sys, 2, xs, 1);
        return Eigen::Vector2d(ref - jet);
    };
    Eigen::Vector2d xi_hat = jet_err(sw);
    double dev = 0.0;
    for (int row = sw; row < trace.rows(); ++row) {
        Eigen::Vector2d xi = jet_err(row);
        dev = std::max(dev, (xi - xi_hat).lpNorm<Eigen::Infinity>());
        xi_hat = E * xi_hat;
    }
    CHECK(dev < 1e-5);
}

TEST_CASE("halving the step barely moves the endpoint") {
    ThreeRModel sys = arm();
    auto refs = one_leg_refs(sys, 2.0);
    auto schedule = one_meld_schedule(2.0);
    auto gains = GainProfile::uniform(ThreeRModel::kQ, Eigen::Vector2d(15.0, 15.0));
    auto coarse = run_scenario(sys, gains, refs, schedule, scenario_x0(), 1e-3);
    auto fine = run_scenario(sys, gains, refs, schedule, scenario_x0(), 5e-4);
    double gap = (coarse.X.row(coarse.rows() - 1) - fine.X.row(fine.rows() - 1)).norm();
    CHECK(gap < 1e-6);
}

TEST_CASE("run summary reports fits and extremes") {
    ThreeRModel sys = arm();
    auto refs = one_leg_refs(sys, 4.0);
    auto schedule = one_meld_schedule(4.0);
    auto gains = GainProfile::uniform(ThreeRModel::kQ, Eigen::Vector2d(15.0, 15.0));
    auto trace = run_scenario(sys, gains, refs, schedule, scenario_x0(), 1e-3);
    std::ostringstream os;
    write_run_summary(os, trace, schedule);
    auto text = os.str();
    CHECK(text.find("interval 0 meld 7") != std::string::npos);
    CHECK(text.find("fitted_rate") != std::string::npos);
    CHECK(text.find("chi_failures 0") != std::string::npos);
    CHECK(text.find("warnings none") != std::string::npos);
}
