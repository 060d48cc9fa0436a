#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "meldctl/errors.hpp"
#include "meldctl/maps.hpp"
#include "meldctl/reference.hpp"
#include "meldctl/schedule.hpp"

namespace meldctl {

struct Xorshift {
    std::uint64_t s;

    explicit Xorshift(std::uint64_t seed) : s(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next() {
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        return s * 0x2545f4914f6cdd1dull;
    }

    double unif01() { return (next() >> 11) * 0x1.0p-53; }

    std::uint32_t below(std::uint32_t n) {
        return static_cast<std::uint32_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
    }
};

// Stratified samples over the box: each dimension is split into n strata
// visited in an independent shuffled order.
std::vector<Eigen::VectorXd> latin_hypercube(const Box& box, int n, std::uint64_t seed);

struct EstimateOptions {
    int n_samples = 10000;
    std::uint64_t seed = 42;
    int time_samples = 221;
    // Fraction of box samples allowed to fall outside a meld's validity
    // region before estimation gives up on the box.
    double failure_tolerance = 0.01;
};

// Sampled bounds for the inter-meld consistency constants: N from the
// reference bundle, L_Theta and L_Psi from flat-map Jacobians over the box
// (inverse-map Jacobians come from the inverse function theorem, so no
// Newton solve enters the Lipschitz part).
template <class Model>
AssumptionConstants estimate_assumption_constants(const Model& sys,
                                                  const std::vector<MeldCertificate>& melds,
                                                  const ReferenceBundle<Model>& refs,
                                                  const Box& box,
                                                  const EstimateOptions& opt = {}) {
    if (melds.empty()) throw EmptyMeldSet("no melds to estimate over");
    box.validate(Model::kN);

    AssumptionConstants out;
    out.sampling_box = box;

    auto samples = latin_hypercube(box, opt.n_samples, opt.seed);
    std::vector<int> failures(melds.size(), 0);

    for (const auto& xs : samples) {
        StateVec<Model> x{};
        for (int c = 0; c < Model::kN; ++c) x[c] = xs(c);
        DeckJets jets = deck_jets(sys, refs.degrees, x, true);

        for (std::size_t m = 0; m < melds.size(); ++m) {
            const auto& cert = melds[m];
            Eigen::MatrixXd Js(cert.degree_sum, Model::kN);
            int at = 0;
            for (std::size_t k = 0; k < cert.sigma.indices.size(); ++k) {
                const int i = cert.sigma.indices[k];
                const int off = jets.offsets[static_cast<std::size_t>(i)];
                for (int d = 0; d < cert.r_sigma[k]; ++d)
                    Js.row(at++) = jets.jacobian.row(off + d);
            }
            if (!(detail::cond2(Js) < kCondMax)) {
                ++failures[m];
                continue;
            }
            Eigen::MatrixXd Jinv = Js.partialPivLu().inverse();
            out.L_Psi = std::max(out.L_Psi, Jinv.operatorNorm());
            for (int i = 0; i < Model::kQ; ++i) {
                const int off = jets.offsets[static_cast<std::size_t>(i)];
                const int ri = refs.degrees[static_cast<std::size_t>(i)];
                Eigen::MatrixXd Ti = jets.jacobian.middleRows(off, ri) * Jinv;
                out.L_Theta = std::max(out.L_Theta, Ti.operatorNorm());
            }
        }
    }

    for (std::size_t m = 0; m < melds.size(); ++m)
        if (failures[m] > opt.failure_tolerance * opt.n_samples)
            throw InversionFailure("meld " + std::to_string(melds[m].sigma.bits) + " singular at " +
                                   std::to_string(failures[m]) + " of " +
                                   std::to_string(opt.n_samples) + " box samples");

    // N: worst gap between each output's own reference and the one implied
    // by any meld's reference through the coordinate change. A reference may
    // graze a meld's rank-loss surface at isolated instants; those inversions
    // are skipped under the same failure budget as the box sweep.
    const double t_end = refs.duration();
    for (std::size_t m = 0; m < melds.size(); ++m) {
        const auto& cert = melds[m];
        int chi_failures = 0;
        for (int ts = 0; ts < opt.time_samples; ++ts) {
            const double t = t_end * ts / std::max(1, opt.time_samples - 1);
            // Anchoring every solve at the bundle's base state keeps the
            // inverse on the branch the bundle was built from; a warm start
            // can cross to a mirror branch after grazing a singular surface.
            StateVec<Model> guess = refs.state(t);
            Eigen::VectorXd target = refs.flat(sys, cert, t);
            StateVec<Model> chi;
            try {
                chi = psi_map(sys, cert, target, guess);
            } catch (const InversionFailure&) {
                ++chi_failures;
                continue;
            }
            for (int i = 0; i < Model::kQ; ++i) {
                const int ri = refs.degrees[static_cast<std::size_t>(i)];
                Eigen::VectorXd own = refs.jets(sys, i, t, ri - 1);
                Eigen::VectorXd implied(ri);
                for (int d = 0; d < ri; ++d) implied(d) = detail::lie_f_any(sys, i, d, chi);
                out.N = std::max(out.N, (own - implied).norm());
            }
        }
        if (chi_failures > opt.failure_tolerance * opt.time_samples)
            throw InversionFailure("meld " + std::to_string(cert.sigma.bits) +
                                   " reference inversion failed at " +
                                   std::to_string(chi_failures) + " of " +
                                   std::to_string(opt.time_samples) + " time samples");
    }
    return out;
}

}  // namespace meldctl
