#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "meldctl/errors.hpp"
#include "meldctl/lie.hpp"

namespace meldctl {

inline constexpr double kCondMax = 1e12;
inline constexpr std::size_t kMaxEnumeration = 1000000;
inline constexpr int kMaxDeck = 31;

// Square output choice over a deck of q outputs.  bits uses one bit per
// output, LSB = output 0; indices lists the same set in increasing order.
struct Choice {
    std::uint32_t bits = 0;
    std::vector<int> indices;

    static Choice from_indices(const std::vector<int>& idx, int q);
    static Choice from_bits(std::uint32_t bits, int q);

    int size() const { return static_cast<int>(indices.size()); }
    bool contains(int i) const { return (bits >> i) & 1u; }
};

// All C(q,p) choices with exactly p selected outputs, lexicographic by
// index set.
std::vector<Choice> square_choices(int q, int p);

// Row-selection operator: p canonical basis rows of R^q.
struct SelectionMatrix {
    int q = 0;
    std::vector<int> rows;

    Eigen::MatrixXd dense() const;
    Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
    Eigen::MatrixXd apply(const Eigen::MatrixXd& m) const;
};

SelectionMatrix selection_matrix(const Choice& sigma, int q);

struct MeldCertificate {
    Choice sigma;
    Eigen::VectorXd x0;
    std::vector<int> r_sigma;
    int degree_sum = 0;
    double det_A = 0.0;
    double cond_A = std::numeric_limits<double>::infinity();
    bool is_meld = false;
    std::string reject_reason;
};

// CSV columns: sigma_bits, degree_sum, det_A, cond_A, is_meld, reject_reason
void write_choice_csv(std::ostream& os, const std::vector<MeldCertificate>& certs);

namespace detail {

inline double cond2(const Eigen::MatrixXd& A) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    const auto& s = svd.singularValues();
    double lo = s(s.size() - 1);
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / lo;
}

// Degree lookup shared across one enumeration pass.  Undefined degrees
// surface only for choices that actually select the offending output.
template <class Model>
class DegreeCache {
  public:
    DegreeCache(const Model& sys, const StateVec<Model>& x) : sys_(sys), x_(x) {}

    int degree(int i) {
        auto it = cache_.find(i);
        if (it != cache_.end()) {
            if (it->second < 0) throw UndefinedRelativeDegree("output " + std::to_string(i));
            return it->second;
        }
        auto rep = relative_degree(sys_, i, x_, kMaxLieOrder);
        cache_[i] = rep.defined ? rep.r : -1;
        if (!rep.defined) throw UndefinedRelativeDegree("output " + std::to_string(i));
        return rep.r;
    }

  private:
    const Model& sys_;
    StateVec<Model> x_;
    std::map<int, int> cache_;
};

template <class Model>
MeldCertificate certify_with_cache(const Model& sys, const Choice& sigma,
                                   const StateVec<Model>& x0, double cond_max,
                                   DegreeCache<Model>& degrees) {
    if (sigma.size() != Model::kM)
        throw DimensionMismatch("choice selects " + std::to_string(sigma.size()) +
                                " outputs, input count is " + std::to_string(Model::kM));
    MeldCertificate cert;
    cert.sigma = sigma;
    cert.x0 = Eigen::Map<const Eigen::VectorXd>(x0.data(), Model::kN);
    cert.r_sigma.reserve(sigma.indices.size());
    for (int i : sigma.indices) cert.r_sigma.push_back(degrees.degree(i));
    cert.degree_sum = 0;
    for (int r : cert.r_sigma) cert.degree_sum += r;

    Eigen::MatrixXd A = interaction_matrix_deg(sys, sigma.indices, cert.r_sigma, x0);
    cert.det_A = A.determinant();
    cert.cond_A = cond2(A);

    if (cert.degree_sum != Model::kN) {
        cert.reject_reason = "degree-sum-mismatch";
    } else if (!(cert.cond_A < cond_max)) {
        cert.reject_reason = "singular-interaction";
    } else {
        cert.is_meld = true;
    }
    return cert;
}

}  // namespace detail

template <class Model>
MeldCertificate certify_meld(const Model& sys, const Choice& sigma,
                             const StateVec<Model>& x0, double cond_max = kCondMax) {
    detail::DegreeCache<Model> degrees(sys, x0);
    return detail::certify_with_cache(sys, sigma, x0, cond_max, degrees);
}

// Certifies every square choice at x0.  Melds and rejected choices share
// the list; is_meld and reject_reason tell them apart.
template <class Model>
std::vector<MeldCertificate> enumerate_melds(const Model& sys, const StateVec<Model>& x0,
                                             double cond_max = kCondMax) {
    auto choices = square_choices(Model::kQ, Model::kM);
    detail::DegreeCache<Model> degrees(sys, x0);
    std::vector<MeldCertificate> out;
    out.reserve(choices.size());
    for (const auto& sigma : choices)
        out.push_back(detail::certify_with_cache(sys, sigma, x0, cond_max, degrees));
    return out;
}

// Pointwise validity test: selected degrees at x match the certificate and
// the interaction matrix stays invertible.  The certificate region is a
// point sample, not the maximal connected set.
template <class Model>
bool validity_membership(const Model& sys, const MeldCertificate& cert,
                         const StateVec<Model>& x, double cond_max = kCondMax) {
    std::vector<int> r_here;
    r_here.reserve(cert.sigma.indices.size());
    for (int i : cert.sigma.indices) {
        auto rep = relative_degree(sys, i, x, kMaxLieOrder);
        if (!rep.defined) return false;
        r_here.push_back(rep.r);
    }
    if (r_here != cert.r_sigma) return false;
    Eigen::MatrixXd A = interaction_matrix_deg(sys, cert.sigma.indices, r_here, x);
    return detail::cond2(A) < cond_max;
}

template <class Model>
bool validity_membership(const Model& sys, const Choice& sigma, const StateVec<Model>& x,
                         const StateVec<Model>& x0, double cond_max = kCondMax) {
    auto cert = certify_meld(sys, sigma, x0, cond_max);
    if (!cert.is_meld) return false;
    return validity_membership(sys, cert, x, cond_max);
}

template <class Model>
bool compatible_at(const Model& sys, const MeldCertificate& a, const MeldCertificate& b,
                   const StateVec<Model>& x, double cond_max = kCondMax) {
    return validity_membership(sys, a, x, cond_max) && validity_membership(sys, b, x, cond_max);
}

}  // namespace meldctl
