#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "meldctl/config.hpp"
#include "meldctl/estimate.hpp"
#include "meldctl/gains.hpp"
#include "meldctl/maps.hpp"
#include "meldctl/meld.hpp"
#include "meldctl/reference.hpp"
#include "meldctl/report.hpp"
#include "meldctl/schedule.hpp"
#include "meldctl/sim.hpp"
#include "meldctl/system.hpp"

namespace fs = std::filesystem;
using namespace meldctl;

namespace {

constexpr const char* kUsage =
    "usage: meldctl <enumerate|certify|simulate|verify> --config <path> [--out <dir>]\n"
    "               [--seed <u64>] [--epsilon <float>] [--dt <float>]\n"
    "\n"
    "exit codes: 0 ok, 2 config error, 3 evaluation failure, 4 estimation failure,\n"
    "            5 singular interaction or non-finite state, 6 mismatched fixtures\n";

/* exit-code carriers beyond the library taxonomy */
struct EstimationFailed : Error {
    using Error::Error;
};
struct FixtureMismatch : Error {
    using Error::Error;
};

struct CliOptions {
    std::string command;
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<double> epsilon;
    std::optional<double> dt;
};

bool parse_cli(int argc, char** argv, CliOptions& opt, std::string& problem) {
    if (argc < 2) {
        problem = "missing subcommand";
        return false;
    }
    opt.command = argv[1];
    if (opt.command != "enumerate" && opt.command != "certify" && opt.command != "simulate" &&
        opt.command != "verify") {
        problem = "unknown subcommand '" + opt.command + "'";
        return false;
    }
    for (int a = 2; a < argc; ++a) {
        std::string flag = argv[a];
        auto value = [&]() -> const char* {
            if (a + 1 >= argc) return nullptr;
            return argv[++a];
        };
        if (flag == "--config") {
            const char* v = value();
            if (!v) { problem = "--config needs a path"; return false; }
            opt.config_path = v;
        } else if (flag == "--out") {
            const char* v = value();
            if (!v) { problem = "--out needs a directory"; return false; }
            opt.out_dir = v;
        } else if (flag == "--seed") {
            const char* v = value();
            if (!v) { problem = "--seed needs a value"; return false; }
            try {
                std::size_t used = 0;
                opt.seed = std::stoull(v, &used);
                if (used != std::string(v).size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                problem = std::string("bad --seed value '") + v + "'";
                return false;
            }
        } else if (flag == "--epsilon" || flag == "--dt") {
            const char* v = value();
            if (!v) { problem = flag + " needs a value"; return false; }
            try {
                std::size_t used = 0;
                double x = std::stod(v, &used);
                if (used != std::string(v).size()) throw std::invalid_argument(v);
                (flag == "--epsilon" ? opt.epsilon : opt.dt) = x;
            } catch (const std::exception&) {
                problem = "bad " + flag + " value '" + v + "'";
                return false;
            }
        } else {
            problem = "unknown flag '" + flag + "'";
            return false;
        }
    }
    if (opt.config_path.empty()) {
        problem = "--config is required";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------- builders

template <class Model>
StateVec<Model> to_state(const Eigen::VectorXd& v, const char* what) {
    if (v.size() != Model::kN)
        throw ConfigError(std::string(what) + " needs " + std::to_string(Model::kN) +
                          " components, got " + std::to_string(v.size()));
    StateVec<Model> x{};
    for (int c = 0; c < Model::kN; ++c) x[static_cast<std::size_t>(c)] = v(c);
    return x;
}

template <class Model>
std::vector<int> deck_degrees(const Model& sys, const StateVec<Model>& x) {
    std::vector<int> deg;
    for (int i = 0; i < Model::kQ; ++i) {
        auto rep = relative_degree(sys, i, x, Model::kN);
        if (!rep.defined) throw UndefinedRelativeDegree("deck output " + std::to_string(i + 1));
        deg.push_back(rep.r);
    }
    return deg;
}

GainProfile build_gains(const ScenarioConfig& cfg, const std::vector<int>& degrees) {
    GainProfile gp;
    const int q = static_cast<int>(degrees.size());
    gp.rows.resize(static_cast<std::size_t>(q));
    for (int i = 0; i < q; ++i) {
        auto it = cfg.gain_rows.find(i);
        Eigen::VectorXd row = it != cfg.gain_rows.end() ? it->second : cfg.gain_row;
        if (row.size() == 0)
            throw ConfigError("no gain row for output " + std::to_string(i + 1));
        if (row.size() != degrees[static_cast<std::size_t>(i)])
            throw ConfigError("gain row for output " + std::to_string(i + 1) + " has " +
                              std::to_string(row.size()) + " entries, relative degree is " +
                              std::to_string(degrees[static_cast<std::size_t>(i)]));
        gp.rows[static_cast<std::size_t>(i)] = row;
    }
    return gp;
}

std::vector<ScenarioItem> config_items(const ScenarioConfig& cfg, int q) {
    std::vector<ScenarioItem> items;
    for (const auto& it : cfg.items) {
        ScenarioItem out;
        try {
            out.sigma = Choice::from_bits(it.choice_bits, q);
        } catch (const Error& e) {
            throw ConfigError("item choice " + std::to_string(it.choice_bits) + ": " + e.what());
        }
        if (out.sigma.size() != static_cast<int>(it.target.size()))
            throw ConfigError("item target needs " + std::to_string(out.sigma.size()) +
                              " coordinates, got " + std::to_string(it.target.size()));
        out.target = it.target;
        items.push_back(std::move(out));
    }
    return items;
}

// Interval lengths the user asked for, before any certification stretch.
std::vector<double> user_lengths(const ScenarioConfig& cfg) {
    std::vector<double> lengths;
    if (cfg.schedule_mode == "explicit" || cfg.dwell <= 0.0) {
        SwitchSchedule s;
        s.t_start = cfg.t_start;
        s.t_end = cfg.t_end;
        s.switches = cfg.switches;
        s.melds.resize(cfg.items.size());
        s.validate();
        for (int k = 0; k < s.intervals(); ++k)
            lengths.push_back(s.interval_end(k) - s.interval_start(k));
    } else {
        lengths.assign(cfg.items.size(), cfg.dwell);
    }
    return lengths;
}

template <class Model>
struct Setup {
    Model sys;
    std::vector<int> degrees;
    GainProfile gains;
    StateVec<Model> x0{};
    std::vector<ScenarioItem> items;
    SwitchSchedule schedule;
    ReferenceBundle<Model> refs;
};

template <class Model>
SwitchSchedule schedule_from_lengths(const ScenarioConfig& cfg,
                                     const std::vector<ScenarioItem>& items,
                                     const std::vector<double>& lengths) {
    SwitchSchedule s;
    s.t_start = cfg.t_start;
    double t = cfg.t_start;
    for (std::size_t k = 0; k < lengths.size(); ++k) {
        t += lengths[k];
        if (k + 1 < lengths.size()) s.switches.push_back(t);
    }
    s.t_end = t;
    for (const auto& it : items) s.melds.push_back(it.sigma);
    s.validate();
    return s;
}

template <class Model>
ReferenceBundle<Model> plan_refs(const Model& sys, const ScenarioConfig& cfg,
                                 const std::vector<ScenarioItem>& items,
                                 const SwitchSchedule& schedule, const std::vector<int>& degrees) {
    const int joints = Model::kN / 2;
    Eigen::VectorXd q0(joints);
    for (int c = 0; c < joints; ++c) q0(c) = cfg.x0(c);
    std::vector<double> times;
    times.push_back(schedule.t_start);
    for (int k = 0; k < schedule.intervals(); ++k) times.push_back(schedule.interval_end(k));
    auto traj = plan_trajectory(sys, q0, items, times);
    auto refs = build_reference(sys, traj, degrees);
    if (cfg.bias.size()) {
        if (cfg.bias.size() != Model::kQ)
            throw ConfigError("bias needs " + std::to_string(Model::kQ) + " entries");
        refs.bias = cfg.bias;
    }
    return refs;
}

template <class Model>
Setup<Model> prepare(const ScenarioConfig& cfg) {
    Setup<Model> s;
    s.x0 = to_state<Model>(cfg.x0, "x0");
    s.degrees = deck_degrees(s.sys, s.x0);
    s.gains = build_gains(cfg, s.degrees);
    s.items = config_items(cfg, Model::kQ);
    try {
        s.schedule = schedule_from_lengths<Model>(cfg, s.items, user_lengths(cfg));
    } catch (const DimensionMismatch& e) {
        throw ConfigError(e.what());
    }
    s.refs = plan_refs(s.sys, cfg, s.items, s.schedule, s.degrees);
    return s;
}

// ------------------------------------------------------------ certification

template <class Model>
std::vector<MeldCertificate> distinct_certificates(const Setup<Model>& s) {
    std::vector<MeldCertificate> out;
    for (const auto& sigma : s.schedule.melds) {
        bool seen = false;
        for (const auto& c : out) seen = seen || c.sigma.bits == sigma.bits;
        if (seen) continue;
        try {
            out.push_back(schedule_certificate(s.sys, sigma, s.degrees, s.x0));
        } catch (const DimensionMismatch& e) {
            throw ConfigError(e.what());
        }
    }
    return out;
}

template <class Model>
double initial_jet_error(const Setup<Model>& s) {
    double total = 0.0;
    for (int i = 0; i < Model::kQ; ++i) {
        const int r = s.degrees[static_cast<std::size_t>(i)];
        Eigen::VectorXd ref = s.refs.jets(s.sys, i, s.schedule.t_start, r - 1);
        Eigen::VectorXd jet = output_jet(s.sys, i, s.x0, r - 1);
        total += (ref - jet).norm();
    }
    return total;
}

template <class Model>
DwellCertificate certify(const ScenarioConfig& cfg, const Setup<Model>& s) {
    if (!cfg.has_box) throw ConfigError("certification needs [estimation] box_lo and box_hi");
    auto melds = distinct_certificates(s);

    EstimateOptions opt;
    opt.n_samples = cfg.samples;
    opt.seed = cfg.seed;
    opt.time_samples = cfg.time_samples;
    AssumptionConstants consts;
    try {
        consts = estimate_assumption_constants(s.sys, melds, s.refs, cfg.box, opt);
    } catch (const InversionFailure& e) {
        throw EstimationFailed(e.what());
    }

    std::vector<MeldConstants> per_meld;
    for (const auto& cert : melds) per_meld.push_back(meld_constants(cert, s.gains));
    auto mc = global_constants(per_meld);

    return dwell_times(consts, mc.alpha_sigma, mc.C_sigma, Model::kM, cfg.epsilon,
                       initial_jet_error(s));
}

double dwell_for_interval(const DwellCertificate& cert, int k) {
    return k == 0 ? cert.tau0 : cert.tau_bar;
}

template <class Model>
void apply_certified_schedule(const ScenarioConfig& cfg, Setup<Model>& s,
                              const DwellCertificate& cert) {
    auto lengths = user_lengths(cfg);
    for (std::size_t k = 0; k < lengths.size(); ++k)
        lengths[k] = std::max(lengths[k], dwell_for_interval(cert, static_cast<int>(k)));
    s.schedule = schedule_from_lengths<Model>(cfg, s.items, lengths);
    s.schedule.certified = true;
    s.schedule.dwell = cert;
    s.refs = plan_refs(s.sys, cfg, s.items, s.schedule, s.degrees);
}

bool meets_dwell(const SwitchSchedule& schedule, const DwellCertificate& cert) {
    for (int k = 0; k < schedule.intervals(); ++k)
        if (schedule.interval_end(k) - schedule.interval_start(k) <
            dwell_for_interval(cert, k) - 1e-12)
            return false;
    return true;
}

void emit_certificate(std::ostream& os, const DwellCertificate& cert, bool certified) {
    write_dwell_report(os, cert);
    os << "  schedule    " << (certified ? "certified" : "declared") << "\n";
}

struct CertificateFile {
    DwellCertificate cert;
    bool certified = false;
};

CertificateFile parse_certificate(const std::string& text) {
    CertificateFile out;
    std::istringstream in(text);
    std::string line;
    bool saw_header = false;
    auto bad = [](const std::string& why) {
        return FixtureMismatch("certificate file: " + why);
    };
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (!saw_header) {
            if (key != "dwell") throw bad("missing header");
            saw_header = true;
            continue;
        }
        auto num = [&]() {
            double v;
            if (!(ls >> v)) throw bad("bad value for " + key);
            return v;
        };
        if (key == "epsilon") out.cert.epsilon = num();
        else if (key == "alpha") out.cert.alpha = num();
        else if (key == "C") out.cert.C = num();
        else if (key == "L_Theta") out.cert.consts.L_Theta = num();
        else if (key == "L_Psi") out.cert.consts.L_Psi = num();
        else if (key == "N") out.cert.consts.N = num();
        else if (key == "p") out.cert.p = static_cast<int>(num());
        else if (key == "init_error") out.cert.initial_error = num();
        else if (key == "tau0") out.cert.tau0 = num();
        else if (key == "tau_bar") out.cert.tau_bar = num();
        else if (key == "S") out.cert.S = num();
        else if (key == "T") out.cert.T = num();
        else if (key == "box") {
            std::string rest;
            std::getline(ls, rest);
            auto read_group = [&](const std::string& tag) {
                auto at = rest.find(tag + "=(");
                auto end = rest.find(')', at);
                if (at == std::string::npos || end == std::string::npos)
                    throw bad("malformed box");
                std::istringstream gs(rest.substr(at + tag.size() + 2, end - at - tag.size() - 2));
                std::vector<double> vals;
                double v;
                while (gs >> v) vals.push_back(v);
                Eigen::VectorXd vec(static_cast<Eigen::Index>(vals.size()));
                for (std::size_t k = 0; k < vals.size(); ++k)
                    vec(static_cast<Eigen::Index>(k)) = vals[k];
                return vec;
            };
            out.cert.consts.sampling_box.lo = read_group("lo");
            out.cert.consts.sampling_box.hi = read_group("hi");
        } else if (key == "schedule") {
            std::string status;
            ls >> status;
            out.certified = status == "certified";
        } else {
            throw bad("unknown key " + key);
        }
    }
    if (!saw_header) throw bad("empty file");
    return out;
}

// ------------------------------------------------------------------ commands

template <class Model>
int cmd_enumerate(const ScenarioConfig& cfg, const fs::path& out_dir) {
    Model sys;
    auto x0 = to_state<Model>(cfg.x0, "x0");
    auto certs = enumerate_melds(sys, x0);
    if (!cfg.deck.empty()) {
        for (int i : cfg.deck)
            if (i < 0 || i >= Model::kQ)
                throw ConfigError("deck output " + std::to_string(i + 1) + " out of range");
        certs.erase(std::remove_if(certs.begin(), certs.end(),
                                   [&](const MeldCertificate& c) {
                                       for (int i : c.sigma.indices)
                                           if (std::find(cfg.deck.begin(), cfg.deck.end(), i) ==
                                               cfg.deck.end())
                                               return true;
                                       return false;
                                   }),
                    certs.end());
    }
    int melds = 0;
    for (const auto& c : certs) melds += c.is_meld ? 1 : 0;
    atomic_write((out_dir / cfg.out_melds).string(),
                 [&](std::ostream& os) { write_choice_csv(os, certs); });
    std::cout << "choices " << certs.size() << " melds " << melds << " -> "
              << (out_dir / cfg.out_melds).string() << "\n";
    if (melds == 0) throw EmptyMeldSet("no meld at the sweep state");
    return 0;
}

template <class Model>
int cmd_certify(const ScenarioConfig& cfg, const fs::path& out_dir) {
    auto setup = prepare<Model>(cfg);
    auto cert = certify(cfg, setup);
    bool certified;
    if (cfg.schedule_mode == "auto-certified") {
        apply_certified_schedule(cfg, setup, cert);
        certified = true;
    } else {
        certified = meets_dwell(setup.schedule, cert);
    }
    atomic_write((out_dir / cfg.out_certificate).string(),
                 [&](std::ostream& os) { emit_certificate(os, cert, certified); });
    emit_certificate(std::cout, cert, certified);
    if (cfg.schedule_mode == "auto-certified") {
        std::cout << "  instants    ";
        std::cout << fmt_g17(setup.schedule.t_start);
        for (double s : setup.schedule.switches) std::cout << ' ' << fmt_g17(s);
        std::cout << ' ' << fmt_g17(setup.schedule.t_end) << "\n";
    }
    return 0;
}

template <class Model>
int cmd_simulate(const ScenarioConfig& cfg, const fs::path& out_dir) {
    auto setup = prepare<Model>(cfg);
    if (cfg.schedule_mode == "auto-certified") {
        auto cert = certify(cfg, setup);
        apply_certified_schedule(cfg, setup, cert);
        atomic_write((out_dir / cfg.out_certificate).string(),
                     [&](std::ostream& os) { emit_certificate(os, cert, true); });
    }
    auto trace = run_scenario(setup.sys, setup.gains, setup.refs, setup.schedule, setup.x0, cfg.dt);
    atomic_write((out_dir / cfg.out_trace).string(),
                 [&](std::ostream& os) { write_trace_csv(os, trace); });
    atomic_write((out_dir / cfg.out_summary).string(),
                 [&](std::ostream& os) { write_run_summary(os, trace, setup.schedule); });
    std::cout << "rows " << trace.rows() << " chi_failures " << trace.chi_failures << " warnings "
              << trace.warnings.size() << " -> " << (out_dir / cfg.out_trace).string() << "\n";
    return 0;
}

/* Bound verification re-derives every quantity from the t and x columns plus
 * the scenario declaration; y/yd/err columns are only cross-checked. */

struct CheckResult {
    std::string name;
    std::string status;  // PASS | FAIL | NOT-APPLICABLE
    double margin = 0.0;
    std::string note;
};

template <class Model>
int cmd_verify(const ScenarioConfig& cfg, const fs::path& out_dir) {
    auto read_file = [](const fs::path& p) {
        std::ifstream in(p);
        if (!in) throw FixtureMismatch("cannot read " + p.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    auto cert_file = parse_certificate(read_file(out_dir / cfg.out_certificate));
    const DwellCertificate& cert = cert_file.cert;

    SimTrace trace;
    {
        std::istringstream in(read_file(out_dir / cfg.out_trace));
        try {
            trace = read_trace_csv(in);
        } catch (const Error& e) {
            throw FixtureMismatch(e.what());
        }
    }
    if (trace.rows() < 2) throw FixtureMismatch("trace has fewer than two rows");
    if (trace.X.cols() != Model::kN || trace.U.cols() != Model::kM || trace.Y.cols() != Model::kQ)
        throw FixtureMismatch("trace dimensions do not match the scenario model");

    auto setup = prepare<Model>(cfg);
    if (cfg.schedule_mode == "auto-certified") apply_certified_schedule(cfg, setup, cert);

    // fixture identity checks
    if (cert.epsilon != cfg.epsilon)
        throw FixtureMismatch("certificate epsilon differs from scenario epsilon");
    if (cert.p != Model::kM) throw FixtureMismatch("certificate p differs from input count");
    if (cfg.has_box) {
        const Box& cb = cert.consts.sampling_box;
        if (cb.lo.size() != cfg.box.lo.size() || cb.lo != cfg.box.lo || cb.hi != cfg.box.hi)
            throw FixtureMismatch("certificate box differs from scenario box");
    }
    {
        std::vector<MeldConstants> per_meld;
        for (const auto& c : distinct_certificates(setup))
            per_meld.push_back(meld_constants(c, setup.gains));
        auto mc = global_constants(per_meld);
        if (std::abs(mc.alpha_sigma - cert.alpha) > 1e-9 * std::max(1.0, cert.alpha) ||
            std::abs(mc.C_sigma - cert.C) > 1e-9 * std::max(1.0, cert.C))
            throw FixtureMismatch("certificate decay constants differ from scenario gains");
    }
    for (int c = 0; c < Model::kN; ++c)
        if (trace.X(0, c) != cfg.x0(c))
            throw FixtureMismatch("trace initial state differs from scenario x0");

    // interval structure realized in the trace
    std::vector<int> start_rows{0};
    std::vector<std::uint32_t> bits{trace.meld_id[0]};
    for (int r = 1; r < trace.rows(); ++r)
        if (trace.meld_id[static_cast<std::size_t>(r)] != bits.back()) {
            start_rows.push_back(r);
            bits.push_back(trace.meld_id[static_cast<std::size_t>(r)]);
        }
    if (bits.size() > setup.schedule.melds.size())
        throw FixtureMismatch("trace has more melds than the scenario schedule");
    for (std::size_t k = 0; k < bits.size(); ++k)
        if (bits[k] != setup.schedule.melds[k].bits)
            throw FixtureMismatch("trace meld sequence differs from the scenario schedule");

    const int rows = trace.rows();
    const double dt = (trace.t.back() - trace.t.front()) / (rows - 1);
    const bool complete = std::abs(trace.t.back() - setup.schedule.t_end) < 0.5 * dt;
    const int intervals = static_cast<int>(bits.size());
    auto interval_end_row = [&](int k) {
        if (k + 1 < intervals) return start_rows[static_cast<std::size_t>(k) + 1];
        return complete ? rows - 1 : rows;
    };

    // recomputed jets; the err columns must agree or the trace is foreign
    Eigen::MatrixXd err(rows, Model::kQ);
    std::vector<Eigen::MatrixXd> xi(static_cast<std::size_t>(Model::kQ));
    for (auto& m : xi) m.resize(rows, 2);
    double cross_gap = 0.0;
    for (int r = 0; r < rows; ++r) {
        StateVec<Model> x{};
        for (int c = 0; c < Model::kN; ++c) x[static_cast<std::size_t>(c)] = trace.X(r, c);
        for (int i = 0; i < Model::kQ; ++i) {
            const int deg = setup.degrees[static_cast<std::size_t>(i)];
            Eigen::VectorXd ref =
                setup.refs.jets(setup.sys, i, trace.t[static_cast<std::size_t>(r)], deg - 1);
            Eigen::VectorXd jet = output_jet(setup.sys, i, x, deg - 1);
            Eigen::VectorXd diff = ref - jet;
            err(r, i) = diff.norm();
            xi[static_cast<std::size_t>(i)](r, 0) = diff(0);
            xi[static_cast<std::size_t>(i)](r, 1) = deg > 1 ? diff(1) : 0.0;
            cross_gap = std::max(cross_gap, std::abs(err(r, i) - trace.Err(r, i)));
            cross_gap = std::max(cross_gap, std::abs(jet(0) - trace.Y(r, i)));
        }
    }
    if (cross_gap > 1e-9)
        throw FixtureMismatch("trace output columns disagree with recomputation by " +
                              fmt_g17(cross_gap));

    std::vector<CheckResult> checks;

    {  // single-interval envelope bound, all deck outputs
        CheckResult res{"Lemma1", "PASS", std::numeric_limits<double>::infinity(), ""};
        for (int k = 0; k < intervals; ++k) {
            const int a = start_rows[static_cast<std::size_t>(k)];
            const int b = interval_end_row(k);
            double start_norm = 0.0;
            for (int i : setup.schedule.melds[static_cast<std::size_t>(k)].indices) {
                double pos = xi[static_cast<std::size_t>(i)](a, 0);
                double vel = xi[static_cast<std::size_t>(i)](a, 1);
                start_norm += pos * pos + vel * vel;
            }
            start_norm = std::sqrt(start_norm);
            const double t_k = trace.t[static_cast<std::size_t>(a)];
            for (int r = a; r < b; ++r) {
                double envelope = cert.consts.L_Theta * cert.C *
                                      std::exp(-cert.alpha *
                                               (trace.t[static_cast<std::size_t>(r)] - t_k)) *
                                      start_norm +
                                  cert.consts.N + 1e-6;
                for (int i = 0; i < Model::kQ; ++i)
                    res.margin = std::min(res.margin, envelope - err(r, i));
            }
        }
        if (res.margin < 0.0) res.status = "FAIL";
        checks.push_back(res);
    }

    {  // post-dwell tracking bound
        CheckResult res{"Thm1", "PASS", std::numeric_limits<double>::infinity(), ""};
        if (!cert_file.certified) res.note = "uncertified schedule";
        int window_rows = 0;
        for (int k = 0; k < intervals; ++k) {
            const int a = start_rows[static_cast<std::size_t>(k)];
            const int b = interval_end_row(k);
            const double open = trace.t[static_cast<std::size_t>(a)] + dwell_for_interval(cert, k);
            for (int r = a; r < b; ++r) {
                if (trace.t[static_cast<std::size_t>(r)] < open) continue;
                ++window_rows;
                for (int i = 0; i < Model::kQ; ++i)
                    res.margin =
                        std::min(res.margin, cert.epsilon + cert.consts.N + 1e-6 - err(r, i));
            }
        }
        if (window_rows == 0) {
            res.status = "NOT-APPLICABLE";
            res.margin = 0.0;
            res.note += res.note.empty() ? "no post-dwell rows" : "; no post-dwell rows";
        } else if (res.margin < 0.0) {
            res.status = "FAIL";
        }
        checks.push_back(res);
    }

    {  // reference-state boundedness after the initial dwell
        CheckResult res{"Thm2", "PASS", std::numeric_limits<double>::infinity(), ""};
        const double open = trace.t.front() + cert.T;
        if (trace.t.back() < open) {
            res.status = "NOT-APPLICABLE";
            res.margin = 0.0;
            res.note = "trace ends before t0+T";
        } else {
            int checked = 0, failures = 0;
            StateVec<Model> guess{};
            bool warm = false;
            int active = -1;
            MeldCertificate running;
            for (int r = 0; r < rows; ++r) {
                int k = 0;
                while (k + 1 < intervals && r >= start_rows[static_cast<std::size_t>(k) + 1]) ++k;
                if (trace.t[static_cast<std::size_t>(r)] < open) continue;
                StateVec<Model> x{};
                for (int c = 0; c < Model::kN; ++c)
                    x[static_cast<std::size_t>(c)] = trace.X(r, c);
                if (k != active) {
                    const int a = start_rows[static_cast<std::size_t>(k)];
                    StateVec<Model> xa{};
                    for (int c = 0; c < Model::kN; ++c)
                        xa[static_cast<std::size_t>(c)] = trace.X(a, c);
                    running = schedule_certificate(setup.sys,
                                                   setup.schedule.melds[static_cast<std::size_t>(k)],
                                                   setup.degrees, xa);
                    active = k;
                    warm = false;
                }
                ++checked;
                try {
                    if (!warm) {
                        guess = setup.refs.state(trace.t[static_cast<std::size_t>(r)]);
                        warm = true;
                    }
                    Eigen::VectorXd target =
                        setup.refs.flat(setup.sys, running, trace.t[static_cast<std::size_t>(r)]);
                    guess = psi_map(setup.sys, running, target, guess);
                    double acc = 0.0;
                    for (int c = 0; c < Model::kN; ++c) {
                        double d = guess[static_cast<std::size_t>(c)] - x[static_cast<std::size_t>(c)];
                        acc += d * d;
                    }
                    res.margin = std::min(res.margin, cert.S - std::sqrt(acc));
                } catch (const Error&) {
                    ++failures;
                    warm = false;
                }
            }
            res.note = std::to_string(failures) + " of " + std::to_string(checked) +
                       " inversions failed";
            if (checked == 0 || failures * 1000 > checked || res.margin < 0.0)
                res.status = "FAIL";
        }
        checks.push_back(res);
    }

    {  // shared outputs ride the unswitched companion flow across a switch
        CheckResult res{"Prop1", "PASS", std::numeric_limits<double>::infinity(), ""};
        const double tolerance = 1e-5;
        bool any = false;
        for (int k = 0; k + 1 < intervals; ++k) {
            std::uint32_t shared = bits[static_cast<std::size_t>(k)] &
                                   bits[static_cast<std::size_t>(k) + 1];
            if (!shared) continue;
            const int a = start_rows[static_cast<std::size_t>(k)];
            const int b = interval_end_row(k + 1);
            for (int i = 0; i < Model::kQ; ++i) {
                if (!(shared >> i & 1u)) continue;
                if (setup.degrees[static_cast<std::size_t>(i)] != 2) continue;
                any = true;
                Eigen::MatrixXd E =
                    expm(companion(setup.gains.rows[static_cast<std::size_t>(i)]) * dt);
                Eigen::Vector2d hat(xi[static_cast<std::size_t>(i)](a, 0),
                                    xi[static_cast<std::size_t>(i)](a, 1));
                for (int r = a; r < b; ++r) {
                    Eigen::Vector2d real(xi[static_cast<std::size_t>(i)](r, 0),
                                         xi[static_cast<std::size_t>(i)](r, 1));
                    res.margin =
                        std::min(res.margin, tolerance - (real - hat).lpNorm<Eigen::Infinity>());
                    hat = E * hat;
                }
            }
        }
        if (!any) {
            res.status = "NOT-APPLICABLE";
            res.margin = 0.0;
            res.note = "no shared outputs across switches";
        } else if (res.margin < 0.0) {
            res.status = "FAIL";
        }
        checks.push_back(res);
    }

    bool pass = true;
    for (const auto& c : checks) pass = pass && c.status != "FAIL";
    auto emit = [&](std::ostream& os) {
        os << "verification report\n";
        os << "  schedule    " << (cert_file.certified ? "certified" : "uncertified schedule")
           << "\n";
        os << "  constants   alpha=" << fmt_g17(cert.alpha) << " C=" << fmt_g17(cert.C)
           << " L_Theta=" << fmt_g17(cert.consts.L_Theta)
           << " L_Psi=" << fmt_g17(cert.consts.L_Psi) << " N=" << fmt_g17(cert.consts.N)
           << " epsilon=" << fmt_g17(cert.epsilon) << "\n";
        for (const auto& c : checks) {
            os << "  " << c.name << std::string(12 - c.name.size(), ' ') << c.status;
            if (c.status != "NOT-APPLICABLE") os << " worst_margin " << fmt_g17(c.margin);
            if (!c.note.empty()) os << " (" << c.note << ")";
            os << "\n";
        }
        os << "  overall     " << (pass ? "PASS" : "FAIL") << "\n";
    };
    atomic_write((out_dir / cfg.out_report).string(), emit);
    emit(std::cout);
    return 0;
}

template <class Model>
int run_command(const CliOptions& opt, const ScenarioConfig& cfg) {
    fs::path out_dir(opt.out_dir);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + out_dir.string());
    if (opt.command == "enumerate") return cmd_enumerate<Model>(cfg, out_dir);
    if (opt.command == "certify") return cmd_certify<Model>(cfg, out_dir);
    if (opt.command == "simulate") return cmd_simulate<Model>(cfg, out_dir);
    return cmd_verify<Model>(cfg, out_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CliOptions opt;
    std::string problem;
    if (!parse_cli(argc, argv, opt, problem)) {
        std::cerr << "meldctl: " << problem << "\n" << kUsage;
        return 2;
    }

    std::string text;
    {
        std::ifstream in(opt.config_path);
        if (!in) {
            std::cerr << "meldctl: cannot read config " << opt.config_path << "\n";
            return 2;
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }

    try {
        ScenarioConfig cfg = parse_config(text);
        if (opt.seed) cfg.seed = *opt.seed;
        if (opt.epsilon) cfg.epsilon = *opt.epsilon;
        if (opt.dt) cfg.dt = *opt.dt;
        if (!(cfg.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
        if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
        if (cfg.model == "manipulator-3r") return run_command<ThreeRModel>(opt, cfg);
        return run_command<DoubleIntegratorModel>(opt, cfg);
    } catch (const FixtureMismatch& e) {
        std::cerr << "meldctl: " << e.what() << "\n";
        return 6;
    } catch (const ConfigError& e) {
        std::cerr << "meldctl: " << e.what() << "\n";
        return 2;
    } catch (const EstimationFailed& e) {
        std::cerr << "meldctl: " << e.what() << "\n";
        return 4;
    } catch (const SingularInteraction& e) {
        std::cerr << "meldctl: " << e.what() << "\n";
        return 5;
    } catch (const NonFiniteState& e) {
        std::cerr << "meldctl: " << e.what() << "\n";
        return 5;
    } catch (const Error& e) {
        std::cerr << "meldctl: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "meldctl: " << e.what() << "\n";
        return 3;
    }
}
