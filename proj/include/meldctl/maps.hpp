#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "meldctl/errors.hpp"
#include "meldctl/gains.hpp"
#include "meldctl/meld.hpp"

namespace meldctl {

namespace detail {

template <class Model, class S>
S lie_f_any(const Model& sys, int i, int k, const std::array<S, Model::kN>& x) {
    switch (k) {
        case 0: return lie_f_fixed<0, Model, S>(sys, i, x);
        case 1: return lie_f_fixed<1, Model, S>(sys, i, x);
        case 2: return lie_f_fixed<2, Model, S>(sys, i, x);
        case 3: return lie_f_fixed<3, Model, S>(sys, i, x);
        case 4: return lie_f_fixed<4, Model, S>(sys, i, x);
        default: throw OrderOverflow("jet order " + std::to_string(k));
    }
}

}  // namespace detail

// Stacked jets (y_i, ..., y_i^{(r_i-1)}) for the selected outputs; the flat
// coordinates of the meld.
template <class Model>
Eigen::VectorXd phi_map(const Model& sys, const MeldCertificate& cert,
                        const StateVec<Model>& x) {
    Eigen::VectorXd out(cert.degree_sum);
    int at = 0;
    for (std::size_t k = 0; k < cert.sigma.indices.size(); ++k) {
        const int i = cert.sigma.indices[k];
        for (int d = 0; d < cert.r_sigma[k]; ++d) out(at++) = detail::lie_f_any(sys, i, d, x);
    }
    return out;
}

template <class Model>
Eigen::MatrixXd phi_jacobian(const Model& sys, const MeldCertificate& cert,
                             const StateVec<Model>& x) {
    Eigen::MatrixXd J(cert.degree_sum, Model::kN);
    std::array<Dual<double>, Model::kN> xd;
    for (int c = 0; c < Model::kN; ++c) xd[c] = Dual<double>(x[c], 0.0);
    for (int c = 0; c < Model::kN; ++c) {
        xd[c].d = 1.0;
        int at = 0;
        for (std::size_t k = 0; k < cert.sigma.indices.size(); ++k) {
            const int i = cert.sigma.indices[k];
            for (int d = 0; d < cert.r_sigma[k]; ++d)
                J(at++, c) = detail::lie_f_any(sys, i, d, xd).d;
        }
        xd[c].d = 0.0;
    }
    return J;
}

// Jets of every deck output stacked in index order, plus the AD Jacobian.
// Row offset of output i is offsets[i]; its block spans degrees[i] rows.
struct DeckJets {
    Eigen::VectorXd value;
    Eigen::MatrixXd jacobian;
    std::vector<int> offsets;
};

template <class Model>
DeckJets deck_jets(const Model& sys, const std::vector<int>& degrees,
                   const StateVec<Model>& x, bool with_jacobian) {
    if (static_cast<int>(degrees.size()) != Model::kQ)
        throw DimensionMismatch("need one degree per deck output");
    int rows = 0;
    DeckJets out;
    out.offsets.resize(degrees.size());
    for (std::size_t i = 0; i < degrees.size(); ++i) {
        out.offsets[i] = rows;
        rows += degrees[i];
    }
    out.value.resize(rows);
    int at = 0;
    for (int i = 0; i < Model::kQ; ++i)
        for (int d = 0; d < degrees[static_cast<std::size_t>(i)]; ++d)
            out.value(at++) = detail::lie_f_any(sys, i, d, x);
    if (!with_jacobian) return out;

    out.jacobian.resize(rows, Model::kN);
    std::array<Dual<double>, Model::kN> xd;
    for (int c = 0; c < Model::kN; ++c) xd[c] = Dual<double>(x[c], 0.0);
    for (int c = 0; c < Model::kN; ++c) {
        xd[c].d = 1.0;
        at = 0;
        for (int i = 0; i < Model::kQ; ++i)
            for (int d = 0; d < degrees[static_cast<std::size_t>(i)]; ++d)
                out.jacobian(at++, c) = detail::lie_f_any(sys, i, d, xd).d;
        xd[c].d = 0.0;
    }
    return out;
}

inline constexpr double kPsiTol = 1e-10;
inline constexpr int kPsiMaxIter = 50;

// Damped Newton inverse of phi_map around x_guess.
template <class Model>
StateVec<Model> psi_map(const Model& sys, const MeldCertificate& cert,
                        const Eigen::VectorXd& target, const StateVec<Model>& x_guess,
                        double cond_max = kCondMax) {
    if (target.size() != Model::kN)
        throw DimensionMismatch("target length " + std::to_string(target.size()));
    StateVec<Model> x = x_guess;
    Eigen::VectorXd res = phi_map(sys, cert, x) - target;
    for (int it = 0; it < kPsiMaxIter; ++it) {
        if (res.norm() <= kPsiTol) return x;
        Eigen::MatrixXd J = phi_jacobian(sys, cert, x);
        if (!(detail::cond2(J) < cond_max))
            throw InversionFailure("flat-map Jacobian condition " +
                                   std::to_string(detail::cond2(J)));
        Eigen::VectorXd step = J.partialPivLu().solve(-res);
        double lambda = 1.0;
        StateVec<Model> x_try = x;
        Eigen::VectorXd res_try;
        while (true) {
            for (int c = 0; c < Model::kN; ++c) x_try[c] = x[c] + lambda * step(c);
            res_try = phi_map(sys, cert, x_try) - target;
            if (res_try.norm() <= (1.0 - 0.5 * lambda) * res.norm() || lambda < 1e-4) break;
            lambda *= 0.5;
        }
        x = x_try;
        res = res_try;
    }
    if (res.norm() <= kPsiTol) return x;
    throw InversionFailure("no convergence after " + std::to_string(kPsiMaxIter) +
                           " iterations, residual " + std::to_string(res.norm()));
}

// Jet of output i read off the state reconstructed from another meld's
// flat coordinates.  i need not be selected by the meld.
template <class Model>
Eigen::VectorXd theta_map(const Model& sys, int i, int r_i, const MeldCertificate& cert,
                          const Eigen::VectorXd& ybar_sigma, const StateVec<Model>& x_guess,
                          double cond_max = kCondMax) {
    StateVec<Model> x = psi_map(sys, cert, ybar_sigma, x_guess, cond_max);
    Eigen::VectorXd jet(r_i);
    for (int d = 0; d < r_i; ++d) jet(d) = detail::lie_f_any(sys, i, d, x);
    return jet;
}

}  // namespace meldctl
