#include "meldctl/gains.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>

namespace meldctl {

namespace {

constexpr double kAlphaMargin = 0.01;
constexpr double kDefectiveGap = 1e-6;
constexpr int kEnvelopeGrid = 2000;

}  // namespace

GainProfile GainProfile::uniform(int q, const Eigen::VectorXd& row) {
    GainProfile g;
    g.rows.assign(static_cast<std::size_t>(q), row);
    return g;
}

Eigen::MatrixXd companion(const Eigen::VectorXd& k_row) {
    const int r = static_cast<int>(k_row.size());
    if (r < 1) throw DimensionMismatch("empty gain row");
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(r, r);
    for (int i = 0; i + 1 < r; ++i) A(i, i + 1) = 1.0;
    for (int j = 0; j < r; ++j) A(r - 1, j) = -k_row(j);
    return A;
}

bool is_hurwitz(const Eigen::VectorXd& k_row) {
    Eigen::MatrixXd A = companion(k_row);
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    for (int i = 0; i < A.rows(); ++i)
        if (es.eigenvalues()(i).real() >= 0.0) return false;
    return true;
}

Eigen::MatrixXd expm(const Eigen::MatrixXd& A) { return A.exp(); }

std::vector<Eigen::VectorXd> error_state(const std::vector<Eigen::VectorXd>& ref_jets,
                                         const std::vector<Eigen::VectorXd>& jets) {
    if (ref_jets.size() != jets.size())
        throw DimensionMismatch("jet count " + std::to_string(jets.size()));
    std::vector<Eigen::VectorXd> xi(ref_jets.size());
    for (std::size_t i = 0; i < ref_jets.size(); ++i) {
        if (ref_jets[i].size() != jets[i].size())
            throw DimensionMismatch("jet length for output " + std::to_string(i));
        xi[i] = ref_jets[i] - jets[i];
    }
    return xi;
}

Eigen::VectorXd virtual_input(const Eigen::VectorXd& ydr,
                              const std::vector<Eigen::VectorXd>& xi, const GainProfile& gains) {
    const int q = static_cast<int>(ydr.size());
    if (static_cast<int>(xi.size()) != q || static_cast<int>(gains.rows.size()) != q)
        throw DimensionMismatch("deck size mismatch in virtual input");
    Eigen::VectorXd w(q);
    for (int i = 0; i < q; ++i) {
        const auto& k = gains.rows[static_cast<std::size_t>(i)];
        if (k.size() != xi[static_cast<std::size_t>(i)].size())
            throw DimensionMismatch("gain row length for output " + std::to_string(i));
        w(i) = ydr(i) + k.dot(xi[static_cast<std::size_t>(i)]);
    }
    return w;
}

MeldConstants meld_constants(const MeldCertificate& cert, const GainProfile& gains) {
    const auto& idx = cert.sigma.indices;
    std::vector<Eigen::MatrixXd> blocks;
    blocks.reserve(idx.size());
    double min_abscissa = std::numeric_limits<double>::infinity();
    std::vector<bool> defective;
    std::vector<Eigen::MatrixXcd> eigvecs;

    for (std::size_t k = 0; k < idx.size(); ++k) {
        const int i = idx[k];
        if (i < 0 || i >= static_cast<int>(gains.rows.size()))
            throw DimensionMismatch("no gain row for output " + std::to_string(i));
        const auto& row = gains.rows[static_cast<std::size_t>(i)];
        if (row.size() != cert.r_sigma[k])
            throw DimensionMismatch("gain row length for output " + std::to_string(i));
        if (!is_hurwitz(row)) throw NotHurwitz("gain row for output " + std::to_string(i));

        Eigen::MatrixXd A = companion(row);
        Eigen::EigenSolver<Eigen::MatrixXd> es(A, true);
        double absc = es.eigenvalues().real().maxCoeff();
        min_abscissa = std::min(min_abscissa, -absc);

        bool def = false;
        const auto& lam = es.eigenvalues();
        for (int a = 0; a < lam.size(); ++a)
            for (int b = a + 1; b < lam.size(); ++b)
                if (std::abs(lam(a) - lam(b)) < kDefectiveGap) def = true;
        defective.push_back(def);
        eigvecs.push_back(es.eigenvectors());
        blocks.push_back(std::move(A));
    }

    MeldConstants mc;
    mc.alpha_sigma = (1.0 - kAlphaMargin) * min_abscissa;

    double C = 1.0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        if (!defective[k]) {
            Eigen::JacobiSVD<Eigen::MatrixXcd> svd(eigvecs[k]);
            const auto& s = svd.singularValues();
            C = std::max(C, s(0) / s(s.size() - 1));
        } else {
            // Near-defective block: bound the envelope directly.
            const double horizon = 20.0 / mc.alpha_sigma;
            for (int g = 0; g <= kEnvelopeGrid; ++g) {
                double t = horizon * g / kEnvelopeGrid;
                double nrm = expm(blocks[k] * t).operatorNorm();
                C = std::max(C, nrm * std::exp(mc.alpha_sigma * t));
            }
        }
    }
    mc.C_sigma = C;
    return mc;
}

MeldConstants global_constants(const std::vector<MeldConstants>& all) {
    if (all.empty()) throw EmptyMeldSet("no melds for global constants");
    MeldConstants out = all.front();
    for (const auto& mc : all) {
        out.alpha_sigma = std::min(out.alpha_sigma, mc.alpha_sigma);
        out.C_sigma = std::max(out.C_sigma, mc.C_sigma);
    }
    return out;
}

}  // namespace meldctl
