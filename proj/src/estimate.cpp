#include "meldctl/estimate.hpp"

#include <cmath>
#include <sstream>

#include "meldctl/report.hpp"

namespace meldctl {

std::string Box::describe() const {
    std::ostringstream os;
    os << "lo=(";
    for (int i = 0; i < lo.size(); ++i) os << (i ? " " : "") << fmt_g17(lo(i));
    os << ") hi=(";
    for (int i = 0; i < hi.size(); ++i) os << (i ? " " : "") << fmt_g17(hi(i));
    os << ")";
    return os.str();
}

std::vector<Eigen::VectorXd> latin_hypercube(const Box& box, int n, std::uint64_t seed) {
    if (n < 1) throw DimensionMismatch("sample count must be positive");
    const int dim = static_cast<int>(box.lo.size());
    Xorshift rng(seed);

    std::vector<std::vector<std::uint32_t>> perms(static_cast<std::size_t>(dim));
    for (auto& perm : perms) {
        perm.resize(static_cast<std::size_t>(n));
        for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(n); ++i) perm[i] = i;
        for (std::uint32_t i = static_cast<std::uint32_t>(n) - 1; i > 0; --i)
            std::swap(perm[i], perm[rng.below(i + 1)]);
    }

    std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(n), Eigen::VectorXd(dim));
    for (int s = 0; s < n; ++s)
        for (int d = 0; d < dim; ++d) {
            double u = (perms[static_cast<std::size_t>(d)][static_cast<std::size_t>(s)] +
                        rng.unif01()) /
                       n;
            out[static_cast<std::size_t>(s)](d) = box.lo(d) + (box.hi(d) - box.lo(d)) * u;
        }
    return out;
}

DwellCertificate dwell_times(const AssumptionConstants& consts, double alpha, double C, int p,
                             double epsilon, double initial_error) {
    if (!(epsilon > 0.0)) throw NonpositiveEpsilon("epsilon = " + std::to_string(epsilon));
    if (!(alpha > 0.0)) throw NotHurwitz("decay rate must be positive");

    DwellCertificate cert;
    cert.epsilon = epsilon;
    cert.alpha = alpha;
    cert.C = C;
    cert.consts = consts;
    cert.p = p;
    cert.initial_error = initial_error;

    auto clamped_log_over_alpha = [&](double arg) {
        return arg > 1.0 ? std::log(arg) / alpha : 0.0;
    };
    cert.tau0 = clamped_log_over_alpha(consts.L_Theta * C * initial_error / epsilon);
    cert.tau_bar = clamped_log_over_alpha(consts.L_Theta * C * p * (epsilon + consts.N) / epsilon);
    cert.S = p * p * consts.L_Psi * consts.L_Theta * C * (epsilon + consts.N) + p * consts.N;
    cert.T = cert.tau0;
    return cert;
}

void write_dwell_report(std::ostream& os, const DwellCertificate& cert) {
    os << "dwell certificate\n"
       << "  epsilon     " << fmt_g17(cert.epsilon) << "\n"
       << "  alpha       " << fmt_g17(cert.alpha) << "\n"
       << "  C           " << fmt_g17(cert.C) << "\n"
       << "  L_Theta     " << fmt_g17(cert.consts.L_Theta) << "\n"
       << "  L_Psi       " << fmt_g17(cert.consts.L_Psi) << "\n"
       << "  N           " << fmt_g17(cert.consts.N) << "\n"
       << "  p           " << cert.p << "\n"
       << "  init_error  " << fmt_g17(cert.initial_error) << "\n"
       << "  tau0        " << fmt_g17(cert.tau0) << "\n"
       << "  tau_bar     " << fmt_g17(cert.tau_bar) << "\n"
       << "  S           " << fmt_g17(cert.S) << "\n"
       << "  T           " << fmt_g17(cert.T) << "\n"
       << "  box         " << cert.consts.sampling_box.describe() << "\n";
}

void write_dwell_csv(std::ostream& os, const DwellCertificate& cert) {
    os << "epsilon,alpha,C,L_Theta,L_Psi,N,p,tau0,tau_bar,S,T,box\n"
       << fmt_g17(cert.epsilon) << ',' << fmt_g17(cert.alpha) << ',' << fmt_g17(cert.C) << ','
       << fmt_g17(cert.consts.L_Theta) << ',' << fmt_g17(cert.consts.L_Psi) << ','
       << fmt_g17(cert.consts.N) << ',' << cert.p << ',' << fmt_g17(cert.tau0) << ','
       << fmt_g17(cert.tau_bar) << ',' << fmt_g17(cert.S) << ',' << fmt_g17(cert.T) << ','
       << cert.consts.sampling_box.describe() << '\n';
}

std::vector<int> shared_outputs(const SwitchSchedule& schedule, int k, int l) {
    if (k < 0 || l < 0 || k + l >= schedule.intervals())
        throw IndexOutOfRange("block [" + std::to_string(k) + ", " + std::to_string(k + l) + "]");
    std::uint32_t bits = schedule.melds[static_cast<std::size_t>(k)].bits;
    for (int j = k + 1; j <= k + l; ++j) bits &= schedule.melds[static_cast<std::size_t>(j)].bits;
    std::vector<int> out;
    for (int i = 0; i < 32; ++i)
        if ((bits >> i) & 1u) out.push_back(i);
    return out;
}

}  // namespace meldctl
