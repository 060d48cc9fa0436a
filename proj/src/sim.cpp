#include "meldctl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "meldctl/report.hpp"

namespace meldctl {

void write_trace_csv(std::ostream& os, const SimTrace& trace) {
    const int n = static_cast<int>(trace.X.cols());
    const int m = static_cast<int>(trace.U.cols());
    const int q = static_cast<int>(trace.Y.cols());
    os << "t";
    for (int c = 0; c < n; ++c) os << ",x" << c + 1;
    for (int j = 0; j < m; ++j) os << ",u" << j + 1;
    os << ",meld_id";
    for (int i = 0; i < q; ++i) os << ",y" << i + 1 << ",yd" << i + 1 << ",err" << i + 1;
    os << ",chi_err,bound_S\n";
    for (int row = 0; row < trace.rows(); ++row) {
        os << fmt_g17(trace.t[static_cast<std::size_t>(row)]);
        for (int c = 0; c < n; ++c) os << ',' << fmt_g17(trace.X(row, c));
        for (int j = 0; j < m; ++j) os << ',' << fmt_g17(trace.U(row, j));
        os << ',' << trace.meld_id[static_cast<std::size_t>(row)];
        for (int i = 0; i < q; ++i)
            os << ',' << fmt_g17(trace.Y(row, i)) << ',' << fmt_g17(trace.Yd(row, i)) << ','
               << fmt_g17(trace.Err(row, i));
        os << ',' << fmt_g17(trace.chi_err(row)) << ',' << fmt_g17(trace.bound_S(row)) << '\n';
    }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_field(const std::string& s) {
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw DimensionMismatch("trailing text in numeric field '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        throw DimensionMismatch("bad numeric field '" + s + "'");
    } catch (const std::out_of_range&) {
        throw DimensionMismatch("numeric field out of range '" + s + "'");
    }
}

}  // namespace

SimTrace read_trace_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw DimensionMismatch("empty trace file");
    auto header = split_csv(line);

    int n = 0, m = 0, q = 0;
    for (const auto& h : header) {
        if (h.size() > 1 && h[0] == 'x') ++n;
        if (h.size() > 1 && h[0] == 'u') ++m;
        if (h.size() > 1 && h[0] == 'y' && h[1] != 'd') ++q;
    }
    const std::size_t expect = 1 + static_cast<std::size_t>(n) + static_cast<std::size_t>(m) + 1 +
                               3 * static_cast<std::size_t>(q) + 2;
    if (n < 1 || m < 1 || q < 1 || header.size() != expect)
        throw DimensionMismatch("unrecognized trace header");

    std::vector<std::vector<double>> rows;
    std::vector<std::uint32_t> melds;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto fields = split_csv(line);
        if (fields.size() != expect)
            throw DimensionMismatch("trace row with " + std::to_string(fields.size()) + " fields");
        std::vector<double> vals;
        vals.reserve(expect - 1);
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (c == static_cast<std::size_t>(1 + n + m)) {
                melds.push_back(static_cast<std::uint32_t>(std::stoul(fields[c])));
            } else {
                vals.push_back(parse_field(fields[c]));
            }
        }
        rows.push_back(std::move(vals));
    }

    SimTrace trace;
    const int count = static_cast<int>(rows.size());
    trace.t.resize(static_cast<std::size_t>(count));
    trace.X.resize(count, n);
    trace.U.resize(count, m);
    trace.Y.resize(count, q);
    trace.Yd.resize(count, q);
    trace.Err.resize(count, q);
    trace.chi_err.resize(count);
    trace.bound_S.resize(count);
    trace.meld_id = std::move(melds);
    for (int r = 0; r < count; ++r) {
        const auto& v = rows[static_cast<std::size_t>(r)];
        std::size_t c = 0;
        trace.t[static_cast<std::size_t>(r)] = v[c++];
        for (int k = 0; k < n; ++k) trace.X(r, k) = v[c++];
        for (int k = 0; k < m; ++k) trace.U(r, k) = v[c++];
        for (int i = 0; i < q; ++i) {
            trace.Y(r, i) = v[c++];
            trace.Yd(r, i) = v[c++];
            trace.Err(r, i) = v[c++];
        }
        trace.chi_err(r) = v[c++];
        trace.bound_S(r) = v[c++];
    }
    return trace;
}

double fit_decay_rate(const std::vector<double>& t, const Eigen::VectorXd& err, int row_a,
                      int row_b, double tail_fraction) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (row_a < 0 || row_b > err.size() || row_b - row_a < 4) return nan;
    int start = row_a + static_cast<int>(std::floor((1.0 - tail_fraction) * (row_b - row_a)));
    if (row_b - start < 4) start = row_a;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int count = 0;
    for (int r = start; r < row_b; ++r) {
        const double e = err(r);
        if (!(e > 0.0) || !std::isfinite(e)) return nan;
        const double xt = t[static_cast<std::size_t>(r)];
        const double yl = std::log(e);
        sx += xt;
        sy += yl;
        sxx += xt * xt;
        sxy += xt * yl;
        ++count;
    }
    const double denom = count * sxx - sx * sx;
    if (!(std::abs(denom) > 0.0)) return nan;
    const double slope = (count * sxy - sx * sy) / denom;
    return -slope;
}

void write_run_summary(std::ostream& os, const SimTrace& trace, const SwitchSchedule& schedule) {
    const int q = static_cast<int>(trace.Y.cols());
    const int rows = trace.rows();
    os << "intervals " << schedule.intervals() << "\n";
    for (int k = 0; k < schedule.intervals(); ++k) {
        const double a = trace.interval_starts[static_cast<std::size_t>(k)];
        const double b = k + 1 < schedule.intervals()
                             ? trace.interval_starts[static_cast<std::size_t>(k + 1)]
                             : trace.t.back() + 1.0;
        int row_a = rows, row_b = rows;
        for (int r = 0; r < rows; ++r) {
            if (trace.t[static_cast<std::size_t>(r)] >= a - 1e-12 && row_a == rows) row_a = r;
            if (trace.t[static_cast<std::size_t>(r)] >= b - 1e-12 && row_b == rows) {
                row_b = r;
                break;
            }
        }
        const auto& sigma = schedule.melds[static_cast<std::size_t>(k)];
        os << "interval " << k << " meld " << sigma.bits << " t " << fmt_g17(a) << "\n";
        for (int i = 0; i < q; ++i) {
            double max_err = 0.0;
            for (int r = row_a; r < row_b; ++r) max_err = std::max(max_err, trace.Err(r, i));
            const double rate = fit_decay_rate(trace.t, trace.Err.col(i), row_a, row_b);
            const double terminal = row_b > row_a ? trace.Err(row_b - 1, i) : 0.0;
            os << "  output " << i + 1 << (sigma.contains(i) ? " in-meld" : "        ")
               << " max_err " << fmt_g17(max_err) << " terminal_err " << fmt_g17(terminal)
               << " fitted_rate " << fmt_g17(rate) << "\n";
        }
    }
    double chi_max = 0.0;
    for (int r = 0; r < rows; ++r)
        if (std::isfinite(trace.chi_err(r))) chi_max = std::max(chi_max, trace.chi_err(r));
    os << "chi_err_max " << fmt_g17(chi_max) << "\n";
    os << "chi_failures " << trace.chi_failures << "\n";
    if (trace.warnings.empty()) {
        os << "warnings none\n";
    } else {
        for (const auto& wmsg : trace.warnings) os << "warning " << wmsg << "\n";
    }
}

}  // namespace meldctl
