#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "meldctl/errors.hpp"
#include "meldctl/maps.hpp"
#include "meldctl/meld.hpp"

namespace meldctl {

namespace detail {

// 6u^5 - 15u^4 + 10u^3 and its first derivative; zero velocity and
// acceleration at both ends.
template <class S>
S smoothstep5(S u) {
    return u * u * u * (u * (u * 6.0 - 15.0) + 10.0);
}

template <class S>
S smoothstep5_d(S u) {
    S um = u - 1.0;
    return u * u * um * um * 30.0;
}

template <int K>
NestedDualT<K> seed_time(double t) {
    if constexpr (K == 0) {
        return t;
    } else {
        NestedDualT<K> out;
        out.v = seed_time<K - 1>(t);
        out.d = NestedDualT<K - 1>(1.0);
        return out;
    }
}

template <int K>
double jet_component(const NestedDualT<K>& jet, int k) {
    if constexpr (K == 0) {
        (void)k;
        return jet;
    } else {
        if (k == 0) return value_of(jet);
        return jet_component<K - 1>(jet.d, k - 1);
    }
}

}  // namespace detail

// Piecewise rest-to-rest quintic plan for the position coordinates.
// Velocity and acceleration vanish at every knot, so joins are C^2.
struct JointTrajectory {
    std::vector<double> knots;
    std::vector<Eigen::VectorXd> waypoints;

    int positions() const { return waypoints.empty() ? 0 : static_cast<int>(waypoints[0].size()); }
    double duration() const { return knots.empty() ? 0.0 : knots.back(); }

    int segment_of(double t) const {
        if (knots.size() < 2) throw DimensionMismatch("trajectory needs two knots");
        auto it = std::upper_bound(knots.begin(), knots.end() - 1, t);
        int seg = static_cast<int>(it - knots.begin()) - 1;
        return std::clamp(seg, 0, static_cast<int>(knots.size()) - 2);
    }

    // Position and velocity of coordinate j at generic time scalar t; the
    // segment is chosen from the time's value part.
    template <class S>
    void eval(int j, S t, S& pos, S& vel) const {
        double tv = value_of(t);
        if (tv <= knots.front()) {
            pos = S(waypoints.front()(j));
            vel = S(0.0);
            return;
        }
        if (tv >= knots.back()) {
            pos = S(waypoints.back()(j));
            vel = S(0.0);
            return;
        }
        int seg = segment_of(tv);
        double t0 = knots[static_cast<std::size_t>(seg)];
        double t1 = knots[static_cast<std::size_t>(seg) + 1];
        double w0 = waypoints[static_cast<std::size_t>(seg)](j);
        double w1 = waypoints[static_cast<std::size_t>(seg) + 1](j);
        S u = (t - t0) * (1.0 / (t1 - t0));
        pos = w0 + (w1 - w0) * detail::smoothstep5(u);
        vel = (w1 - w0) * detail::smoothstep5_d(u) * (1.0 / (t1 - t0));
    }

    // Both one-sided limits at every interior knot; the plan is C^2 by
    // construction, so the gap is exactly zero.
    double max_knot_gap() const {
        double gap = 0.0;
        for (std::size_t k = 1; k + 1 < knots.size(); ++k) {
            for (int j = 0; j < positions(); ++j) {
                // left limit: end of segment k-1 at u = 1 has zero velocity
                double pl = waypoints[k](j);
                double vl = 0.0;
                double pr, vr;
                eval(j, knots[k], pr, vr);
                gap = std::max({gap, std::fabs(pl - pr), std::fabs(vl - vr)});
            }
        }
        return gap;
    }
};

// Full reference bundle: jets of every deck output along the planned state
// trajectory, with an optional constant bias that makes the per-output
// references mutually inconsistent on purpose.
template <class Model>
struct ReferenceBundle {
    JointTrajectory traj;
    std::vector<int> degrees;
    Eigen::VectorXd bias = Eigen::VectorXd();

    double duration() const { return traj.duration(); }

    StateVec<Model> state(double t) const {
        constexpr int P = Model::kN / 2;
        StateVec<Model> x{};
        for (int j = 0; j < P; ++j) {
            double p, v;
            traj.eval(j, t, p, v);
            x[j] = p;
            x[P + j] = v;
        }
        return x;
    }

    template <int K>
    Eigen::VectorXd jets_fixed(const Model& sys, int i, double t) const {
        constexpr int P = Model::kN / 2;
        using S = NestedDualT<K>;
        S ts = detail::seed_time<K>(t);
        std::array<S, Model::kN> x{};
        for (int j = 0; j < P; ++j) {
            S p, v;
            traj.eval(j, ts, p, v);
            x[j] = p;
            x[P + j] = v;
        }
        S y = sys.template h<S>(i, x);
        Eigen::VectorXd jet(K + 1);
        for (int k = 0; k <= K; ++k) jet(k) = detail::jet_component<K>(y, k);
        if (bias.size() == Model::kQ) jet(0) += bias(i);
        return jet;
    }

    // Jet (y, ..., y^(upto)) of deck output i at time t.
    Eigen::VectorXd jets(const Model& sys, int i, double t, int upto) const {
        switch (upto) {
            case 0: return jets_fixed<0>(sys, i, t);
            case 1: return jets_fixed<1>(sys, i, t);
            case 2: return jets_fixed<2>(sys, i, t);
            case 3: return jets_fixed<3>(sys, i, t);
            case 4: return jets_fixed<4>(sys, i, t);
            default: throw OrderOverflow("jet order " + std::to_string(upto));
        }
    }

    // Flat coordinates of a meld: orders 0..r_i-1 stacked over its outputs.
    Eigen::VectorXd flat(const Model& sys, const MeldCertificate& cert, double t) const {
        Eigen::VectorXd out(cert.degree_sum);
        int at = 0;
        for (std::size_t k = 0; k < cert.sigma.indices.size(); ++k) {
            const int i = cert.sigma.indices[k];
            const int r = cert.r_sigma[k];
            Eigen::VectorXd jet = jets(sys, i, t, r - 1);
            for (int d = 0; d < r; ++d) out(at++) = jet(d);
        }
        return out;
    }

    // r_i-th derivatives across the deck, the feedforward terms.
    Eigen::VectorXd top_derivatives(const Model& sys, double t) const {
        Eigen::VectorXd out(Model::kQ);
        for (int i = 0; i < Model::kQ; ++i) {
            const int r = degrees[static_cast<std::size_t>(i)];
            out(i) = jets(sys, i, t, r)(r);
        }
        return out;
    }
};

inline constexpr double kIkTol = 1e-12;
inline constexpr int kIkMaxIter = 50;

// Newton solve of the position-level output equations h_idx(q) = target.
template <class Model>
Eigen::VectorXd solve_output_targets(const Model& sys, const std::vector<int>& indices,
                                     const Eigen::VectorXd& target,
                                     const Eigen::VectorXd& q_guess) {
    constexpr int P = Model::kN / 2;
    if (static_cast<int>(indices.size()) != P || target.size() != P || q_guess.size() != P)
        throw DimensionMismatch("waypoint solve needs " + std::to_string(P) + " targets");
    Eigen::VectorXd q = q_guess;
    int bumps = 0;
    for (int it = 0; it < kIkMaxIter; ++it) {
        std::array<Dual<double>, Model::kN> x{};
        for (int j = 0; j < P; ++j) x[j] = Dual<double>(q(j), 0.0);
        Eigen::VectorXd res(P);
        Eigen::MatrixXd J(P, P);
        for (int c = 0; c < P; ++c) {
            x[c].d = 1.0;
            for (int k = 0; k < P; ++k) {
                auto y = sys.template h<Dual<double>>(indices[static_cast<std::size_t>(k)], x);
                if (c == 0) res(k) = y.v - target(k);
                J(k, c) = y.d;
            }
            x[c].d = 0.0;
        }
        if (res.norm() <= kIkTol) return q;
        if (!(detail::cond2(J) < kCondMax)) {
            // A thin rank-loss surface through the iterate blocks the step;
            // a fixed nudge restarts Newton beside it. Structural rank loss
            // survives every nudge and falls through to the failure below.
            if (bumps < 3) {
                ++bumps;
                for (int c = 0; c < P; ++c) q(c) += 0.1;
                continue;
            }
            throw InversionFailure("waypoint Jacobian condition " +
                                   std::to_string(detail::cond2(J)));
        }
        Eigen::VectorXd step = J.partialPivLu().solve(-res);
        double lambda = 1.0;
        Eigen::VectorXd q_try;
        while (true) {
            q_try = q + lambda * step;
            std::array<Dual<double>, Model::kN> xt{};
            for (int j = 0; j < P; ++j) xt[j] = Dual<double>(q_try(j), 0.0);
            Eigen::VectorXd rt(P);
            for (int k = 0; k < P; ++k)
                rt(k) = sys.template h<Dual<double>>(indices[static_cast<std::size_t>(k)], xt).v -
                        target(k);
            if (rt.norm() <= (1.0 - 0.5 * lambda) * res.norm() || lambda < 1e-4) break;
            lambda *= 0.5;
        }
        q = q_try;
    }
    // Converged iterates return above; reaching here means stagnation.
    std::array<Dual<double>, Model::kN> x{};
    for (int j = 0; j < P; ++j) x[j] = Dual<double>(q(j), 0.0);
    Eigen::VectorXd res(P);
    for (int k = 0; k < P; ++k)
        res(k) = sys.template h<Dual<double>>(indices[static_cast<std::size_t>(k)], x).v - target(k);
    if (res.norm() <= kIkTol) return q;
    throw InversionFailure("waypoint solve stalled at residual " + std::to_string(res.norm()));
}

// One pickup item: the meld that tracks it and the position targets of that
// meld's outputs at the end of its interval.
struct ScenarioItem {
    Choice sigma;
    Eigen::VectorXd target;
};

// Chains waypoint solves into one C^2 joint-space plan.  times has one
// entry more than items: start instant plus each item's end instant.
template <class Model>
JointTrajectory plan_trajectory(const Model& sys, const Eigen::VectorXd& q0,
                                const std::vector<ScenarioItem>& items,
                                const std::vector<double>& times) {
    if (times.size() != items.size() + 1)
        throw DimensionMismatch("need one time per item plus the start");
    for (std::size_t k = 1; k < times.size(); ++k)
        if (!(times[k] > times[k - 1])) throw DimensionMismatch("times must increase");
    JointTrajectory traj;
    traj.knots = times;
    traj.waypoints.push_back(q0);
    for (const auto& item : items) {
        const auto& prev = traj.waypoints.back();
        traj.waypoints.push_back(solve_output_targets(sys, item.sigma.indices, item.target, prev));
    }
    return traj;
}

template <class Model>
ReferenceBundle<Model> build_reference(const Model& sys, const JointTrajectory& traj,
                                       const std::vector<int>& degrees) {
    if (static_cast<int>(degrees.size()) != Model::kQ)
        throw DimensionMismatch("need one degree per deck output");
    ReferenceBundle<Model> bundle;
    bundle.traj = traj;
    bundle.degrees = degrees;
    (void)sys;
    return bundle;
}

}  // namespace meldctl
