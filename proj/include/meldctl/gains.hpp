#pragma once

#include <Eigen/Dense>
#include <vector>

#include "meldctl/errors.hpp"
#include "meldctl/meld.hpp"

namespace meldctl {

// One gain row per deck output: rows[i] = [k0 ... k^{r_i-1}].
struct GainProfile {
    std::vector<Eigen::VectorXd> rows;

    static GainProfile uniform(int q, const Eigen::VectorXd& row);
};

struct MeldConstants {
    double C_sigma = 1.0;
    double alpha_sigma = 0.0;
};

// Companion matrix of lambda^r + k_{r-1} lambda^{r-1} + ... + k_0.
Eigen::MatrixXd companion(const Eigen::VectorXd& k_row);

bool is_hurwitz(const Eigen::VectorXd& k_row);

Eigen::MatrixXd expm(const Eigen::MatrixXd& A);

// xi_i = ref jet minus measured jet, both truncated to the error order.
std::vector<Eigen::VectorXd> error_state(const std::vector<Eigen::VectorXd>& ref_jets,
                                         const std::vector<Eigen::VectorXd>& jets);

// w_i = ydr(i) + k_i . xi_i, where ydr stacks the r_i-th reference
// derivatives across the deck.
Eigen::VectorXd virtual_input(const Eigen::VectorXd& ydr,
                              const std::vector<Eigen::VectorXd>& xi, const GainProfile& gains);

MeldConstants meld_constants(const MeldCertificate& cert, const GainProfile& gains);

// Elementwise (min alpha, max C) over the meld set.
MeldConstants global_constants(const std::vector<MeldConstants>& all);

template <class Model>
Eigen::VectorXd control_law(const Model& sys, const MeldCertificate& cert,
                            const StateVec<Model>& x, const Eigen::VectorXd& w,
                            double cond_max = kCondMax) {
    if (w.size() != Model::kQ)
        throw DimensionMismatch("virtual input length " + std::to_string(w.size()));
    Eigen::MatrixXd A = interaction_matrix_deg(sys, cert.sigma.indices, cert.r_sigma, x);
    if (!(detail::cond2(A) < cond_max))
        throw SingularInteraction("cond " + std::to_string(detail::cond2(A)));
    Eigen::VectorXd b = drift_vector_deg(sys, cert.sigma.indices, cert.r_sigma, x);
    const int p = cert.sigma.size();
    Eigen::VectorXd rhs(p);
    for (int k = 0; k < p; ++k) rhs(k) = w(cert.sigma.indices[k]) - b(k);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    Eigen::VectorXd u = lu.solve(rhs);
    u += lu.solve(rhs - A * u);  // refinement step keeps the residual near roundoff
    return u;
}

}  // namespace meldctl
