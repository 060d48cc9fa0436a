#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "meldctl/errors.hpp"
#include "meldctl/gains.hpp"
#include "meldctl/maps.hpp"
#include "meldctl/reference.hpp"
#include "meldctl/schedule.hpp"

namespace meldctl {

template <class Model>
void state_derivative(const Model& sys, const StateVec<Model>& x, const Eigen::VectorXd& u,
                      StateVec<Model>& dx) {
    sys.template f<double>(x, dx);
    StateVec<Model> gc{};
    for (int j = 0; j < Model::kM; ++j) {
        sys.template g<double>(j, x, gc);
        for (int c = 0; c < Model::kN; ++c) dx[c] += gc[c] * u(j);
    }
}

// Classical RK4 with the input held constant across the step.
template <class Model>
StateVec<Model> rk4_step(const Model& sys, const StateVec<Model>& x, const Eigen::VectorXd& u,
                         double dt) {
    if (!(dt > 0.0)) throw DimensionMismatch("step size must be positive");
    if (u.size() != Model::kM) throw DimensionMismatch("input length " + std::to_string(u.size()));
    StateVec<Model> k1, k2, k3, k4, tmp;
    state_derivative(sys, x, u, k1);
    for (int c = 0; c < Model::kN; ++c) tmp[c] = x[c] + 0.5 * dt * k1[c];
    state_derivative(sys, tmp, u, k2);
    for (int c = 0; c < Model::kN; ++c) tmp[c] = x[c] + 0.5 * dt * k2[c];
    state_derivative(sys, tmp, u, k3);
    for (int c = 0; c < Model::kN; ++c) tmp[c] = x[c] + dt * k3[c];
    state_derivative(sys, tmp, u, k4);
    StateVec<Model> out;
    for (int c = 0; c < Model::kN; ++c) {
        out[c] = x[c] + dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        if (!std::isfinite(out[c])) throw NonFiniteState("state component " + std::to_string(c));
    }
    return out;
}

struct SimTrace {
    std::vector<double> t;
    Eigen::MatrixXd X;
    Eigen::MatrixXd U;
    std::vector<std::uint32_t> meld_id;
    Eigen::MatrixXd Y;
    Eigen::MatrixXd Yd;
    Eigen::MatrixXd Err;
    Eigen::VectorXd chi_err;
    Eigen::VectorXd bound_S;
    // virtual input held from each row; diagnostic only, not serialized
    Eigen::MatrixXd W;
    std::vector<std::string> warnings;
    int chi_failures = 0;
    std::vector<double> interval_starts;

    int rows() const { return static_cast<int>(t.size()); }
};

void write_trace_csv(std::ostream& os, const SimTrace& trace);
SimTrace read_trace_csv(std::istream& is);

// Least-squares slope of log(err) over the final part of [row_a, row_b).
// Returns a positive decay rate for shrinking errors; NaN when the window
// is too short or the error hits zero.
double fit_decay_rate(const std::vector<double>& t, const Eigen::VectorXd& err, int row_a,
                      int row_b, double tail_fraction = 0.6);

namespace detail {

inline std::string strip_tag(const char* what, const char* name) {
    std::string s(what);
    std::string tag = std::string(name) + ": ";
    return s.rfind(tag, 0) == 0 ? s.substr(tag.size()) : s;
}

// Virtual input and torque evaluated at the step midpoint: the state is
// predicted half a step ahead with the uncentered input, then every term
// of the law is re-evaluated there.  The returned input is still held
// constant over the step; centering removes the O(dt) sampling bias.
template <class Model>
void midpoint_control(const Model& sys, const MeldCertificate& cert, const GainProfile& gains,
                      const ReferenceBundle<Model>& refs, double t, const StateVec<Model>& x,
                      double dt, Eigen::VectorXd& u_out, Eigen::VectorXd& w_out) {
    const double t_mid = t + 0.5 * dt;

    auto selected_w = [&](double tw, const StateVec<Model>& xs) {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(Model::kQ);
        for (std::size_t k = 0; k < cert.sigma.indices.size(); ++k) {
            const int i = cert.sigma.indices[k];
            const int r = cert.r_sigma[k];
            Eigen::VectorXd ref = refs.jets(sys, i, tw, r);
            Eigen::VectorXd jet = output_jet(sys, i, xs, r - 1);
            double wi = ref(r);
            const auto& row = gains.rows[static_cast<std::size_t>(i)];
            for (int d = 0; d < r; ++d) wi += row(d) * (ref(d) - jet(d));
            w(i) = wi;
        }
        return w;
    };

    Eigen::VectorXd w0 = selected_w(t, x);
    Eigen::VectorXd u0 = control_law(sys, cert, x, w0);

    StateVec<Model> dx;
    state_derivative(sys, x, u0, dx);
    StateVec<Model> x_mid;
    for (int c = 0; c < Model::kN; ++c) x_mid[c] = x[c] + 0.5 * dt * dx[c];

    w_out = selected_w(t_mid, x_mid);
    u_out = control_law(sys, cert, x_mid, w_out);
}

}  // namespace detail

// Working certificate for a scheduled meld: degrees come from the deck,
// the interaction data is evaluated at the given state.
template <class Model>
MeldCertificate schedule_certificate(const Model& sys, const Choice& sigma,
                                     const std::vector<int>& degrees,
                                     const StateVec<Model>& x) {
    MeldCertificate cert;
    cert.sigma = sigma;
    cert.x0 = Eigen::Map<const Eigen::VectorXd>(x.data(), Model::kN);
    for (int i : sigma.indices) {
        cert.r_sigma.push_back(degrees[static_cast<std::size_t>(i)]);
        cert.degree_sum += degrees[static_cast<std::size_t>(i)];
    }
    if (cert.degree_sum != Model::kN)
        throw DimensionMismatch("scheduled choice " + std::to_string(sigma.bits) +
                                " has degree sum " + std::to_string(cert.degree_sum));
    Eigen::MatrixXd A = interaction_matrix_deg(sys, cert.sigma.indices, cert.r_sigma, x);
    cert.det_A = A.determinant();
    cert.cond_A = detail::cond2(A);
    cert.is_meld = cert.cond_A < kCondMax;
    if (!cert.is_meld) cert.reject_reason = "singular-interaction";
    return cert;
}

template <class Model>
SimTrace run_scenario(const Model& sys, const GainProfile& gains,
                      const ReferenceBundle<Model>& refs, const SwitchSchedule& schedule,
                      const StateVec<Model>& x0, double dt) {
    schedule.validate();
    if (!(dt > 0.0)) throw DimensionMismatch("step size must be positive");
    for (double c : x0)
        if (!std::isfinite(c)) throw NonFiniteState("initial state");

    // switching instants snapped onto the step grid (floor)
    std::vector<double> snapped;
    snapped.reserve(schedule.switches.size());
    for (double s : schedule.switches) {
        double snap = schedule.t_start + std::floor((s - schedule.t_start) / dt) * dt;
        if (!snapped.empty() && !(snap > snapped.back()))
            throw DimensionMismatch("switch instants collapse on the step grid");
        snapped.push_back(snap);
    }

    const int steps = static_cast<int>(std::llround((schedule.t_end - schedule.t_start) / dt));
    const int rows = steps + 1;

    SimTrace trace;
    trace.t.resize(static_cast<std::size_t>(rows));
    trace.X.resize(rows, Model::kN);
    trace.U.resize(rows, Model::kM);
    trace.meld_id.resize(static_cast<std::size_t>(rows));
    trace.Y.resize(rows, Model::kQ);
    trace.Yd.resize(rows, Model::kQ);
    trace.Err.resize(rows, Model::kQ);
    trace.W.resize(rows, Model::kQ);
    trace.chi_err.resize(rows);
    trace.bound_S.resize(rows);
    trace.interval_starts.push_back(schedule.t_start);
    for (double s : snapped) trace.interval_starts.push_back(s);

    const double bound_S =
        schedule.certified ? schedule.dwell.S : std::numeric_limits<double>::quiet_NaN();

    std::vector<MeldCertificate> certs(schedule.melds.size());
    int active = -1;
    StateVec<Model> x = x0;
    StateVec<Model> chi_guess{};
    bool chi_warm = false;

    for (int row = 0; row < rows; ++row) {
        const double t = schedule.t_start + row * dt;
        int interval = 0;
        while (interval + 1 < schedule.intervals() &&
               t >= snapped[static_cast<std::size_t>(interval)] - 0.5 * dt)
            ++interval;

        if (interval != active) {
            const auto& sigma = schedule.melds[static_cast<std::size_t>(interval)];
            certs[static_cast<std::size_t>(interval)] =
                schedule_certificate(sys, sigma, refs.degrees, x);
            if (active >= 0) {
                const auto& prev = certs[static_cast<std::size_t>(active)];
                const auto& next = certs[static_cast<std::size_t>(interval)];
                if (!compatible_at(sys, prev, next, x))
                    trace.warnings.push_back("switch at t=" + std::to_string(t) +
                                             " between incompatible melds " +
                                             std::to_string(prev.sigma.bits) + " and " +
                                             std::to_string(next.sigma.bits));
            }
            active = interval;
            chi_warm = false;
        }
        const auto& cert = certs[static_cast<std::size_t>(active)];

        trace.t[static_cast<std::size_t>(row)] = t;
        for (int c = 0; c < Model::kN; ++c) trace.X(row, c) = x[c];
        trace.meld_id[static_cast<std::size_t>(row)] = cert.sigma.bits;
        trace.bound_S(row) = bound_S;

        for (int i = 0; i < Model::kQ; ++i) {
            const int r = refs.degrees[static_cast<std::size_t>(i)];
            Eigen::VectorXd ref = refs.jets(sys, i, t, r - 1);
            Eigen::VectorXd jet = output_jet(sys, i, x, r - 1);
            trace.Y(row, i) = jet(0);
            trace.Yd(row, i) = ref(0);
            trace.Err(row, i) = (ref - jet).norm();
        }

        // reference-state diagnostic, never part of the control path
        try {
            if (!chi_warm) {
                chi_guess = refs.state(t);
                chi_warm = true;
            }
            Eigen::VectorXd target = refs.flat(sys, cert, t);
            chi_guess = psi_map(sys, cert, target, chi_guess);
            double acc = 0.0;
            for (int c = 0; c < Model::kN; ++c) {
                double d = chi_guess[static_cast<std::size_t>(c)] - x[c];
                acc += d * d;
            }
            trace.chi_err(row) = std::sqrt(acc);
        } catch (const Error&) {
            trace.chi_err(row) = std::numeric_limits<double>::quiet_NaN();
            ++trace.chi_failures;
            chi_warm = false;
        }

        Eigen::VectorXd u, w;
        try {
            detail::midpoint_control(sys, cert, gains, refs, t, x, dt, u, w);
        } catch (const SingularInteraction& e) {
            throw SingularInteraction(detail::strip_tag(e.what(), "SingularInteraction") +
                                      " at t=" + std::to_string(t));
        }
        for (int j = 0; j < Model::kM; ++j) trace.U(row, j) = u(j);
        for (int i = 0; i < Model::kQ; ++i) trace.W(row, i) = w(i);

        if (row < steps) {
            try {
                x = rk4_step(sys, x, u, dt);
            } catch (const NonFiniteState& e) {
                throw NonFiniteState(detail::strip_tag(e.what(), "NonFiniteState") +
                                     " at t=" + std::to_string(t));
            }
        }
    }
    return trace;
}

// Summary of a finished run: per interval, the active meld, fitted decay
// rates of its outputs over the interval tail, and worst errors.
void write_run_summary(std::ostream& os, const SimTrace& trace, const SwitchSchedule& schedule);

}  // namespace meldctl
