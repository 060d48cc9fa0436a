#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dual.hpp"
#include "errors.hpp"
#include "system.hpp"

namespace meldctl {

inline constexpr int kMaxLieOrder = 8;
inline constexpr double kVanishTol = 1e-9;

template <class Model>
using StateVec = std::array<double, Model::kN>;

namespace detail {

/* L_f^K h_i with compile-time order K, generic scalar S. Each level takes the
 * gradient of the lower order by one dual sweep per state coordinate and
 * contracts it with f. */
template <int K, class Model, class S>
S lie_f_fixed(const Model& sys, int i, const std::array<S, Model::kN>& x) {
    if constexpr (K == 0) {
        return sys.template h<S>(i, x);
    } else {
        constexpr int N = Model::kN;
        std::array<S, N> fx;
        sys.template f<S>(x, fx);
        S acc(0.0);
        for (int c = 0; c < N; ++c) {
            std::array<Dual<S>, N> xl;
            for (int r = 0; r < N; ++r)
                xl[r] = Dual<S>(x[r], S(r == c ? 1.0 : 0.0));
            acc += lie_f_fixed<K - 1, Model, Dual<S>>(sys, i, xl).d * fx[c];
        }
        return acc;
    }
}

/* L_{g_j} L_f^K h_i: one dual sweep seeded along the vector g_j(x). */
template <int K, class Model, class S>
S lie_g_lie_f_fixed(const Model& sys, int i, int j, const std::array<S, Model::kN>& x) {
    constexpr int N = Model::kN;
    std::array<S, N> gx;
    sys.template g<S>(j, x, gx);
    std::array<Dual<S>, N> xl;
    for (int r = 0; r < N; ++r) xl[r] = Dual<S>(x[r], gx[r]);
    return lie_f_fixed<K, Model, Dual<S>>(sys, i, xl).d;
}

template <class F>
double dispatch_order(int k, F&& fn) {
    switch (k) {
        case 0: return fn(std::integral_constant<int, 0>{});
        case 1: return fn(std::integral_constant<int, 1>{});
        case 2: return fn(std::integral_constant<int, 2>{});
        case 3: return fn(std::integral_constant<int, 3>{});
        case 4: return fn(std::integral_constant<int, 4>{});
        case 5: return fn(std::integral_constant<int, 5>{});
        case 6: return fn(std::integral_constant<int, 6>{});
        case 7: return fn(std::integral_constant<int, 7>{});
        case 8: return fn(std::integral_constant<int, 8>{});
        default: throw OrderOverflow("order " + std::to_string(k));
    }
}

inline void require_order(int k) {
    if (k < 0 || k > kMaxLieOrder)
        throw OrderOverflow("order " + std::to_string(k) +
                            " outside [0, " + std::to_string(kMaxLieOrder) + "]");
}

template <class Model>
void require_finite_state(const StateVec<Model>& x) {
    for (double c : x)
        if (!std::isfinite(c)) throw NonFiniteEvaluation("state contains NaN/inf");
}

}  // namespace detail

template <class Model>
double lie_f(const Model& sys, int i, int k, const StateVec<Model>& x) {
    detail::require_order(k);
    detail::require_finite_state<Model>(x);
    double r = detail::dispatch_order(k, [&](auto K) {
        return detail::lie_f_fixed<K.value, Model, double>(sys, i, x);
    });
    if (!std::isfinite(r)) throw NonFiniteEvaluation("lie_f");
    return r;
}

template <class Model>
double lie_g_lie_f(const Model& sys, int i, int j, int k, const StateVec<Model>& x) {
    detail::require_order(k);
    detail::require_finite_state<Model>(x);
    double r = detail::dispatch_order(k, [&](auto K) {
        return detail::lie_g_lie_f_fixed<K.value, Model, double>(sys, i, j, x);
    });
    if (!std::isfinite(r)) throw NonFiniteEvaluation("lie_g_lie_f");
    return r;
}

/* Output jet along the drift: (h_i, L_f h_i, ..., L_f^upto h_i). Valid as time
 * derivatives of y_i up to order r_i - 1; the input enters at order r_i. */
template <class Model>
Eigen::VectorXd output_jet(const Model& sys, int i, const StateVec<Model>& x, int upto) {
    Eigen::VectorXd jet(upto + 1);
    for (int k = 0; k <= upto; ++k) jet(k) = lie_f(sys, i, k, x);
    return jet;
}

struct RelativeDegreeReport {
    bool defined = false;
    int r = 0;
    Eigen::RowVectorXd witness_row;    // L_g L_f^{r-1} h_i at x
    std::vector<int> vanished_orders;  // orders with all mixed derivatives <= tol
};

struct RelativeDegreeOptions {
    int neighborhood_samples = 16;  // guards against isolated zeros
    double radius = 1e-3;
    std::uint64_t seed = 0x5eed0001u;
};

namespace detail {

inline double sym_uniform(std::uint64_t& s) {
    /* xorshift64*; avoids distribution-implementation differences */
    s ^= s >> 12;
    s ^= s << 25;
    s ^= s >> 27;
    std::uint64_t r = s * 0x2545F4914F6CDD1Dull;
    return static_cast<double>(r >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

}  // namespace detail

/* Smallest r with some |L_{g_j} L_f^{r-1} h_i(x)| > tol while all lower mixed
 * orders vanish at x and at sampled nearby states. A lower order that vanishes
 * at x but not nearby is an isolated zero: the degree is undefined there. */
template <class Model>
RelativeDegreeReport relative_degree(const Model& sys, int i, const StateVec<Model>& x,
                                     int r_max, double tol = kVanishTol,
                                     const RelativeDegreeOptions& opt = {}) {
    if (r_max < 1) throw IndexOutOfRange("r_max must be >= 1");
    RelativeDegreeReport rep;
    Eigen::RowVectorXd row(Model::kM);
    for (int k = 0; k + 1 <= r_max; ++k) {
        double mx = 0.0;
        for (int j = 0; j < Model::kM; ++j) {
            row(j) = lie_g_lie_f(sys, i, j, k, x);
            mx = std::max(mx, std::fabs(row(j)));
        }
        if (mx > tol) {
            rep.defined = true;
            rep.r = k + 1;
            rep.witness_row = row;
            return rep;
        }
        std::uint64_t s = opt.seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(i + 1)
                          + static_cast<std::uint64_t>(k);
        for (int p = 0; p < opt.neighborhood_samples; ++p) {
            StateVec<Model> xp = x;
            for (int c = 0; c < Model::kN; ++c)
                xp[c] += opt.radius * detail::sym_uniform(s);
            for (int j = 0; j < Model::kM; ++j)
                if (std::fabs(lie_g_lie_f(sys, i, j, k, xp)) > tol)
                    return rep;  // isolated zero at x: undefined
        }
        rep.vanished_orders.push_back(k);
    }
    return rep;
}

/* Gamma_sigma b(x): stacked L_f^{r_i} h_i for the selected outputs. */
template <class Model>
Eigen::VectorXd drift_vector_deg(const Model& sys, const std::vector<int>& indices,
                                 const std::vector<int>& degrees, const StateVec<Model>& x) {
    if (indices.size() != degrees.size())
        throw DimensionMismatch("indices vs degrees");
    Eigen::VectorXd b(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t a = 0; a < indices.size(); ++a)
        b(static_cast<Eigen::Index>(a)) = lie_f(sys, indices[a], degrees[a], x);
    return b;
}

/* A_sigma(x): rows L_{g_j} L_f^{r_i-1} h_i for the selected outputs. */
template <class Model>
Eigen::MatrixXd interaction_matrix_deg(const Model& sys, const std::vector<int>& indices,
                                       const std::vector<int>& degrees, const StateVec<Model>& x) {
    if (indices.size() != degrees.size())
        throw DimensionMismatch("indices vs degrees");
    Eigen::MatrixXd A(static_cast<Eigen::Index>(indices.size()), Model::kM);
    for (std::size_t a = 0; a < indices.size(); ++a)
        for (int j = 0; j < Model::kM; ++j)
            A(static_cast<Eigen::Index>(a), j) = lie_g_lie_f(sys, indices[a], j, degrees[a] - 1, x);
    return A;
}

namespace detail {

template <class Model>
std::vector<int> resolve_degrees(const Model& sys, const std::vector<int>& indices,
                                 const StateVec<Model>& x) {
    std::vector<int> deg;
    deg.reserve(indices.size());
    for (int i : indices) {
        auto rep = relative_degree(sys, i, x, Model::kN);
        if (!rep.defined)
            throw UndefinedRelativeDegree("output " + std::to_string(i + 1));
        deg.push_back(rep.r);
    }
    return deg;
}

}  // namespace detail

template <class Model>
Eigen::VectorXd drift_vector(const Model& sys, const std::vector<int>& indices,
                             const StateVec<Model>& x) {
    return drift_vector_deg(sys, indices, detail::resolve_degrees(sys, indices, x), x);
}

template <class Model>
Eigen::MatrixXd interaction_matrix(const Model& sys, const std::vector<int>& indices,
                                   const StateVec<Model>& x) {
    return interaction_matrix_deg(sys, indices, detail::resolve_degrees(sys, indices, x), x);
}

}  // namespace meldctl
