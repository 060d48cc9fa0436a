#include "meldctl/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "meldctl/report.hpp"

namespace meldctl {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : value) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_double(const std::string& raw, const std::string& key) {
    try {
        std::size_t used = 0;
        double v = std::stod(raw, &used);
        if (used != raw.size()) throw ConfigError(key + ": trailing text in '" + raw + "'");
        return v;
    } catch (const std::invalid_argument&) {
        throw ConfigError(key + ": expected a number, got '" + raw + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError(key + ": number out of range '" + raw + "'");
    }
}

std::uint64_t parse_u64(const std::string& raw, const std::string& key) {
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(raw, &used);
        if (used != raw.size()) throw ConfigError(key + ": trailing text in '" + raw + "'");
        return v;
    } catch (const std::invalid_argument&) {
        throw ConfigError(key + ": expected an unsigned integer, got '" + raw + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError(key + ": integer out of range '" + raw + "'");
    }
}

int parse_int(const std::string& raw, const std::string& key) {
    double v = parse_double(raw, key);
    if (std::floor(v) != v) throw ConfigError(key + ": expected an integer, got '" + raw + "'");
    return static_cast<int>(v);
}

Eigen::VectorXd parse_vector(const std::string& raw, const std::string& key) {
    auto parts = split_list(raw);
    Eigen::VectorXd v(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t k = 0; k < parts.size(); ++k)
        v(static_cast<Eigen::Index>(k)) = parse_double(parts[k], key);
    return v;
}

std::string join(const Eigen::VectorXd& v) {
    std::string out;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (k) out += ", ";
        out += fmt_g17(v(k));
    }
    return out;
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
    ScenarioConfig cfg;
    cfg.gain_row.resize(0);
    cfg.x0.resize(0);
    cfg.bias.resize(0);

    std::map<int, ScenarioConfig::Item> items;
    bool saw_t_end = false;

    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            static const char* known[] = {"model",      "gains",      "items", "schedule",
                                          "simulation", "estimation", "output"};
            if (std::find_if(std::begin(known), std::end(known),
                             [&](const char* s) { return section == s; }) == std::end(known))
                throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" +
                                  section + "]");
            continue;
        }

        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
        const std::string where = "[" + section + "] " + key;

        if (section == "model") {
            if (key == "type") cfg.model = value;
            else if (key == "deck") {
                cfg.deck.clear();
                for (const auto& p : split_list(value))
                    cfg.deck.push_back(parse_int(p, where) - 1);
            } else throw ConfigError(where + ": unknown key");
        } else if (section == "gains") {
            if (key == "row") cfg.gain_row = parse_vector(value, where);
            else if (key.rfind("row", 0) == 0) {
                int idx = parse_int(key.substr(3), where);
                if (idx < 1) throw ConfigError(where + ": output index must be positive");
                cfg.gain_rows[idx - 1] = parse_vector(value, where);
            } else throw ConfigError(where + ": unknown key");
        } else if (section == "items") {
            if (key == "bias") cfg.bias = parse_vector(value, where);
            else if (key.rfind("item", 0) == 0) {
                auto us = key.find('_');
                if (us == std::string::npos) throw ConfigError(where + ": unknown key");
                int idx = parse_int(key.substr(4, us - 4), where);
                std::string field = key.substr(us + 1);
                auto& item = items[idx];
                if (field == "choice")
                    item.choice_bits = static_cast<std::uint32_t>(parse_u64(value, where));
                else if (field == "target") item.target = parse_vector(value, where);
                else throw ConfigError(where + ": unknown item field");
            } else throw ConfigError(where + ": unknown key");
        } else if (section == "schedule") {
            if (key == "mode") cfg.schedule_mode = value;
            else if (key == "t_start") cfg.t_start = parse_double(value, where);
            else if (key == "t_end") { cfg.t_end = parse_double(value, where); saw_t_end = true; }
            else if (key == "switches") {
                cfg.switches.clear();
                for (const auto& p : split_list(value))
                    cfg.switches.push_back(parse_double(p, where));
            } else if (key == "dwell") cfg.dwell = parse_double(value, where);
            else throw ConfigError(where + ": unknown key");
        } else if (section == "simulation") {
            if (key == "x0") cfg.x0 = parse_vector(value, where);
            else if (key == "dt") cfg.dt = parse_double(value, where);
            else throw ConfigError(where + ": unknown key");
        } else if (section == "estimation") {
            if (key == "box_lo") { cfg.box.lo = parse_vector(value, where); cfg.has_box = true; }
            else if (key == "box_hi") { cfg.box.hi = parse_vector(value, where); cfg.has_box = true; }
            else if (key == "samples") cfg.samples = parse_int(value, where);
            else if (key == "time_samples") cfg.time_samples = parse_int(value, where);
            else if (key == "epsilon") cfg.epsilon = parse_double(value, where);
            else if (key == "seed") cfg.seed = parse_u64(value, where);
            else throw ConfigError(where + ": unknown key");
        } else if (section == "output") {
            if (key == "trace") cfg.out_trace = value;
            else if (key == "summary") cfg.out_summary = value;
            else if (key == "certificate") cfg.out_certificate = value;
            else if (key == "melds") cfg.out_melds = value;
            else if (key == "report") cfg.out_report = value;
            else throw ConfigError(where + ": unknown key");
        } else {
            throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
        }
    }

    if (cfg.model != "manipulator-3r" && cfg.model != "double-integrator")
        throw ConfigError("unknown model type '" + cfg.model + "'");
    if (cfg.schedule_mode != "explicit" && cfg.schedule_mode != "auto-certified")
        throw ConfigError("unknown schedule mode '" + cfg.schedule_mode + "'");
    if (items.empty()) throw ConfigError("no items declared");
    int expect = 1;
    for (const auto& [idx, item] : items) {
        if (idx != expect)
            throw ConfigError("item indices must be consecutive from 1, missing item" +
                              std::to_string(expect));
        if (item.target.size() == 0)
            throw ConfigError("item" + std::to_string(idx) + " has no target");
        cfg.items.push_back(item);
        ++expect;
    }
    if (cfg.x0.size() == 0) throw ConfigError("missing [simulation] x0");
    if (cfg.gain_row.size() == 0 && cfg.gain_rows.empty())
        throw ConfigError("missing [gains] row");
    if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
    if (cfg.schedule_mode == "explicit") {
        if (!saw_t_end) throw ConfigError("explicit schedule needs t_end");
        if (cfg.switches.size() + 1 != cfg.items.size())
            throw ConfigError("explicit schedule needs one item per interval: " +
                              std::to_string(cfg.switches.size() + 1) + " intervals vs " +
                              std::to_string(cfg.items.size()) + " items");
    } else {
        if (!(cfg.dwell > 0.0) && cfg.switches.empty())
            throw ConfigError("auto-certified schedule needs dwell or switches");
    }
    if (cfg.has_box && cfg.box.lo.size() != cfg.box.hi.size())
        throw ConfigError("box_lo and box_hi lengths differ");
    if (cfg.samples < 1 || cfg.time_samples < 2)
        throw ConfigError("sample counts out of range");
    return cfg;
}

std::string serialize_config(const ScenarioConfig& cfg) {
    std::ostringstream os;
    os << "[model]\n";
    os << "type = " << cfg.model << "\n";
    if (!cfg.deck.empty()) {
        os << "deck = ";
        for (std::size_t k = 0; k < cfg.deck.size(); ++k)
            os << (k ? ", " : "") << cfg.deck[k] + 1;
        os << "\n";
    }

    os << "\n[gains]\n";
    if (cfg.gain_row.size()) os << "row = " << join(cfg.gain_row) << "\n";
    for (const auto& [idx, row] : cfg.gain_rows)
        os << "row" << idx + 1 << " = " << join(row) << "\n";

    os << "\n[items]\n";
    for (std::size_t k = 0; k < cfg.items.size(); ++k) {
        os << "item" << k + 1 << "_choice = " << cfg.items[k].choice_bits << "\n";
        os << "item" << k + 1 << "_target = " << join(cfg.items[k].target) << "\n";
    }
    if (cfg.bias.size()) os << "bias = " << join(cfg.bias) << "\n";

    os << "\n[schedule]\n";
    os << "mode = " << cfg.schedule_mode << "\n";
    os << "t_start = " << fmt_g17(cfg.t_start) << "\n";
    if (cfg.schedule_mode == "explicit") os << "t_end = " << fmt_g17(cfg.t_end) << "\n";
    if (!cfg.switches.empty()) {
        os << "switches = ";
        for (std::size_t k = 0; k < cfg.switches.size(); ++k)
            os << (k ? ", " : "") << fmt_g17(cfg.switches[k]);
        os << "\n";
    }
    if (cfg.dwell > 0.0) os << "dwell = " << fmt_g17(cfg.dwell) << "\n";

    os << "\n[simulation]\n";
    os << "x0 = " << join(cfg.x0) << "\n";
    os << "dt = " << fmt_g17(cfg.dt) << "\n";

    os << "\n[estimation]\n";
    if (cfg.has_box) {
        os << "box_lo = " << join(cfg.box.lo) << "\n";
        os << "box_hi = " << join(cfg.box.hi) << "\n";
    }
    os << "samples = " << cfg.samples << "\n";
    os << "time_samples = " << cfg.time_samples << "\n";
    os << "epsilon = " << fmt_g17(cfg.epsilon) << "\n";
    os << "seed = " << cfg.seed << "\n";

    os << "\n[output]\n";
    os << "trace = " << cfg.out_trace << "\n";
    os << "summary = " << cfg.out_summary << "\n";
    os << "certificate = " << cfg.out_certificate << "\n";
    os << "melds = " << cfg.out_melds << "\n";
    os << "report = " << cfg.out_report << "\n";
    return os.str();
}

bool semantically_equal(const ScenarioConfig& a, const ScenarioConfig& b) {
    auto veq = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
        return x.size() == y.size() && (x.size() == 0 || x == y);
    };
    if (a.model != b.model || a.deck != b.deck) return false;
    if (!veq(a.gain_row, b.gain_row)) return false;
    if (a.gain_rows.size() != b.gain_rows.size()) return false;
    for (const auto& [idx, row] : a.gain_rows) {
        auto it = b.gain_rows.find(idx);
        if (it == b.gain_rows.end() || !veq(row, it->second)) return false;
    }
    if (a.items.size() != b.items.size()) return false;
    for (std::size_t k = 0; k < a.items.size(); ++k)
        if (a.items[k].choice_bits != b.items[k].choice_bits ||
            !veq(a.items[k].target, b.items[k].target))
            return false;
    if (!veq(a.bias, b.bias)) return false;
    if (a.schedule_mode != b.schedule_mode || a.t_start != b.t_start || a.t_end != b.t_end ||
        a.switches != b.switches || a.dwell != b.dwell)
        return false;
    if (!veq(a.x0, b.x0) || a.dt != b.dt) return false;
    if (a.has_box != b.has_box) return false;
    if (a.has_box && (!veq(a.box.lo, b.box.lo) || !veq(a.box.hi, b.box.hi))) return false;
    if (a.samples != b.samples || a.time_samples != b.time_samples || a.epsilon != b.epsilon ||
        a.seed != b.seed)
        return false;
    return a.out_trace == b.out_trace && a.out_summary == b.out_summary &&
           a.out_certificate == b.out_certificate && a.out_melds == b.out_melds &&
           a.out_report == b.out_report;
}

SwitchSchedule declared_schedule(const ScenarioConfig& cfg, int deck_size) {
    SwitchSchedule s;
    s.t_start = cfg.t_start;
    s.t_end = cfg.t_end;
    s.switches = cfg.switches;
    for (const auto& item : cfg.items)
        s.melds.push_back(Choice::from_bits(item.choice_bits, deck_size));
    if (cfg.schedule_mode == "explicit") s.validate();
    return s;
}

}  // namespace meldctl
