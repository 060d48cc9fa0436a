#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "meldctl/errors.hpp"
#include "meldctl/meld.hpp"

namespace meldctl {

struct Box {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    void validate(int n) const {
        if (lo.size() != n || hi.size() != n)
            throw DimensionMismatch("box needs " + std::to_string(n) + " bounds");
        for (int i = 0; i < n; ++i)
            if (!(lo(i) < hi(i))) throw DimensionMismatch("empty box in dimension " + std::to_string(i));
    }

    std::string describe() const;
};

struct AssumptionConstants {
    double N = 0.0;
    double L_Theta = 0.0;
    double L_Psi = 0.0;
    Box sampling_box;
};

struct DwellCertificate {
    double epsilon = 0.0;
    double tau0 = 0.0;
    double tau_bar = 0.0;
    double S = 0.0;
    double T = 0.0;
    // inputs echoed for the report
    double alpha = 0.0;
    double C = 1.0;
    AssumptionConstants consts;
    int p = 0;
    double initial_error = 0.0;
};

DwellCertificate dwell_times(const AssumptionConstants& consts, double alpha, double C, int p,
                             double epsilon, double initial_error);

void write_dwell_report(std::ostream& os, const DwellCertificate& cert);
void write_dwell_csv(std::ostream& os, const DwellCertificate& cert);

// Piecewise-constant meld assignment: melds[k] is active on
// [instant k, instant k+1), with instants = t_start, switches..., t_end.
struct SwitchSchedule {
    double t_start = 0.0;
    double t_end = 0.0;
    std::vector<double> switches;
    std::vector<Choice> melds;
    bool certified = false;
    DwellCertificate dwell;

    int intervals() const { return static_cast<int>(melds.size()); }

    void validate() const {
        if (melds.size() != switches.size() + 1)
            throw DimensionMismatch("schedule needs one meld per interval");
        double prev = t_start;
        for (double s : switches) {
            if (!(s > prev)) throw DimensionMismatch("switch instants must increase");
            prev = s;
        }
        if (!(t_end > prev)) throw DimensionMismatch("end time before last switch");
    }

    double interval_start(int k) const {
        require(k);
        return k == 0 ? t_start : switches[static_cast<std::size_t>(k) - 1];
    }

    double interval_end(int k) const {
        require(k);
        return k == intervals() - 1 ? t_end : switches[static_cast<std::size_t>(k)];
    }

    int active_index(double t) const {
        int k = 0;
        while (k + 1 < intervals() && t >= switches[static_cast<std::size_t>(k)]) ++k;
        return k;
    }

  private:
    void require(int k) const {
        if (k < 0 || k >= intervals()) throw IndexOutOfRange("interval " + std::to_string(k));
    }
};

// Outputs selected by every meld active on intervals k..k+l.
std::vector<int> shared_outputs(const SwitchSchedule& schedule, int k, int l);

}  // namespace meldctl
