#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "meldctl/errors.hpp"
#include "meldctl/schedule.hpp"

namespace meldctl {

/* Scenario file: plain text, [section] headers, one `key = value` per line,
 * arrays comma-separated, `#` starts a comment.  Unknown sections or keys are
 * rejected so typos fail loudly. */

struct ScenarioConfig {
    struct Item {
        std::uint32_t choice_bits = 0;
        Eigen::VectorXd target;
    };

    std::string model = "manipulator-3r";
    std::vector<int> deck;  // 0-based output indices; empty = full deck

    Eigen::VectorXd gain_row;                    // applied to every output
    std::map<int, Eigen::VectorXd> gain_rows;    // 0-based per-output overrides

    std::vector<Item> items;
    Eigen::VectorXd bias;  // reference offset per output; empty = none

    std::string schedule_mode = "explicit";  // or "auto-certified"
    double t_start = 0.0;
    double t_end = 0.0;
    std::vector<double> switches;  // explicit mode
    double dwell = 0.0;            // auto-certified mode: requested hold per interval

    Eigen::VectorXd x0;
    double dt = 1e-3;

    bool has_box = false;
    Box box;
    int samples = 10000;
    int time_samples = 221;
    double epsilon = 0.01;
    std::uint64_t seed = 42;

    std::string out_trace = "trace.csv";
    std::string out_summary = "summary.txt";
    std::string out_certificate = "certificate.txt";
    std::string out_melds = "melds.csv";
    std::string out_report = "report.txt";
};

ScenarioConfig parse_config(const std::string& text);
std::string serialize_config(const ScenarioConfig& cfg);

bool semantically_equal(const ScenarioConfig& a, const ScenarioConfig& b);

// User-declared schedule: melds from the items, instants from the switch list.
SwitchSchedule declared_schedule(const ScenarioConfig& cfg, int deck_size);

}  // namespace meldctl
