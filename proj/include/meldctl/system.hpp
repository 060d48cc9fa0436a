#pragma once

#include <array>
#include <cstddef>

#include "errors.hpp"
#include "dual.hpp"

namespace meldctl {

/* A control-affine system is any type providing:
 *   static constexpr int kN (state dim), kM (input dim), kQ (deck size);
 *   template <S> f(x, out)        drift field
 *   template <S> g(j, x, out)     input field j
 *   template <S> h(i, x) -> S     deck output i
 * evaluable over double and over nested Dual scalars. The Lie engine and all
 * higher layers are generic over this shape. */

struct ManipulatorParams {
    std::array<double, 3> length;   // m
    std::array<double, 3> mass;     // kg
    std::array<double, 3> inertia;  // kg*m^2, rotational about the link center

    void validate() const {
        for (int i = 0; i < 3; ++i) {
            if (!(length[i] > 0.0) || !(mass[i] > 0.0) || !(inertia[i] > 0.0))
                throw DimensionMismatch("manipulator parameters must be positive");
        }
    }

    /* Fixture arm: tip point masses, slender-rod rotational inertia. */
    static ManipulatorParams reference_arm() {
        ManipulatorParams p;
        p.length = {0.5, 0.4, 0.3};
        p.mass = {4.0, 3.0, 2.0};
        for (int i = 0; i < 3; ++i)
            p.inertia[i] = p.mass[i] * p.length[i] * p.length[i] / 12.0;
        return p;
    }
};

/* Solve A z = b for a symmetric positive definite 3x3 A, generic scalar.
 * No pivoting: PD leading minors are nonzero by assumption. */
template <class S>
void solve3_spd(const S A[3][3], const S b[3], S z[3]) {
    S a[3][4];
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) a[r][c] = A[r][c];
        a[r][3] = b[r];
    }
    for (int k = 0; k < 3; ++k) {
        for (int r = k + 1; r < 3; ++r) {
            S fct = a[r][k] / a[k][k];
            for (int c = k; c < 4; ++c) a[r][c] = a[r][c] - fct * a[k][c];
        }
    }
    for (int r = 2; r >= 0; --r) {
        S s = a[r][3];
        for (int c = r + 1; c < 3; ++c) s = s - a[r][c] * z[c];
        z[r] = s / a[r][r];
    }
}

/* Planar 3R arm, horizontal plane (no gravity): M(q) qdd + C(q,qd) qd = tau.
 * Deck: q1, q2, q3, xB1, yB1, xB2, yB2 with B1 at the tip of link 2 and B2 at
 * the tip of link 3. */
struct ThreeRModel {
    static constexpr int kN = 6;
    static constexpr int kM = 3;
    static constexpr int kQ = 7;

    ManipulatorParams prm = ManipulatorParams::reference_arm();

    template <class S>
    void mass_matrix(const std::array<S, 3>& q, S M[3][3]) const {
        using std::cos;
        using std::sin;
        S th[3], dx[3], dy[3];
        th[0] = q[0];
        th[1] = q[0] + q[1];
        th[2] = q[0] + q[1] + q[2];
        for (int j = 0; j < 3; ++j) {
            dx[j] = -prm.length[j] * sin(th[j]);
            dy[j] = prm.length[j] * cos(th[j]);
        }
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) M[r][c] = S(0.0);
        S jx[3], jy[3];
        for (int i = 0; i < 3; ++i) {
            /* tip-i translational Jacobian columns 0..i */
            for (int k = 0; k <= i; ++k) { jx[k] = S(0.0); jy[k] = S(0.0); }
            for (int j = 0; j <= i; ++j)
                for (int k = 0; k <= j; ++k) { jx[k] += dx[j]; jy[k] += dy[j]; }
            for (int r = 0; r <= i; ++r)
                for (int c = 0; c <= i; ++c) {
                    M[r][c] += prm.mass[i] * (jx[r] * jx[c] + jy[r] * jy[c]);
                    M[r][c] += prm.inertia[i];  // Jw row is ones(0..i)
                }
        }
    }

    /* C from Christoffel symbols of M; dM/dq via dual sweeps, which makes
     * Mdot - 2C skew-symmetric to machine precision. */
    template <class S>
    void coriolis(const std::array<S, 3>& q, const std::array<S, 3>& qd, S C[3][3]) const {
        S dM[3][3][3];  // dM[c][r][k] = d M[r][k] / d q_c
        for (int c = 0; c < 3; ++c) {
            std::array<Dual<S>, 3> ql;
            for (int r = 0; r < 3; ++r)
                ql[r] = Dual<S>(q[r], S(r == c ? 1.0 : 0.0));
            Dual<S> Ml[3][3];
            mass_matrix(ql, Ml);
            for (int r = 0; r < 3; ++r)
                for (int k = 0; k < 3; ++k) dM[c][r][k] = Ml[r][k].d;
        }
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < 3; ++j) {
                S s(0.0);
                for (int i = 0; i < 3; ++i)
                    s += 0.5 * (dM[i][k][j] + dM[j][k][i] - dM[k][i][j]) * qd[i];
                C[k][j] = s;
            }
    }

    template <class S>
    void f(const std::array<S, kN>& x, std::array<S, kN>& out) const {
        std::array<S, 3> q{x[0], x[1], x[2]}, qd{x[3], x[4], x[5]};
        S M[3][3], C[3][3], rhs[3], qdd[3];
        mass_matrix(q, M);
        coriolis(q, qd, C);
        for (int r = 0; r < 3; ++r) {
            S s(0.0);
            for (int c = 0; c < 3; ++c) s += C[r][c] * qd[c];
            rhs[r] = -s;
        }
        solve3_spd(M, rhs, qdd);
        for (int r = 0; r < 3; ++r) { out[r] = qd[r]; out[3 + r] = qdd[r]; }
    }

    template <class S>
    void g(int j, const std::array<S, kN>& x, std::array<S, kN>& out) const {
        std::array<S, 3> q{x[0], x[1], x[2]};
        S M[3][3], e[3], col[3];
        mass_matrix(q, M);
        for (int r = 0; r < 3; ++r) e[r] = S(r == j ? 1.0 : 0.0);
        solve3_spd(M, e, col);
        for (int r = 0; r < 3; ++r) { out[r] = S(0.0); out[3 + r] = col[r]; }
    }

    template <class S>
    S h(int i, const std::array<S, kN>& x) const {
        using std::cos;
        using std::sin;
        if (i < 3) return x[static_cast<std::size_t>(i)];
        S th1 = x[0], th2 = x[0] + x[1], th3 = x[0] + x[1] + x[2];
        S px = prm.length[0] * cos(th1) + prm.length[1] * cos(th2);
        S py = prm.length[0] * sin(th1) + prm.length[1] * sin(th2);
        if (i == 3) return px;
        if (i == 4) return py;
        px += prm.length[2] * cos(th3);
        py += prm.length[2] * sin(th3);
        if (i == 5) return px;
        if (i == 6) return py;
        throw IndexOutOfRange("deck output index " + std::to_string(i));
    }
};

/* Double integrator: xdot1 = x2, xdot2 = u. Deck {x1, x2}; only {x1} melds. */
struct DoubleIntegratorModel {
    static constexpr int kN = 2;
    static constexpr int kM = 1;
    static constexpr int kQ = 2;

    template <class S>
    void f(const std::array<S, kN>& x, std::array<S, kN>& out) const {
        out[0] = x[1];
        out[1] = S(0.0);
    }
    template <class S>
    void g(int, const std::array<S, kN>&, std::array<S, kN>& out) const {
        out[0] = S(0.0);
        out[1] = S(1.0);
    }
    template <class S>
    S h(int i, const std::array<S, kN>& x) const {
        if (i == 0 || i == 1) return x[static_cast<std::size_t>(i)];
        throw IndexOutOfRange("deck output index " + std::to_string(i));
    }
};

}  // namespace meldctl
