#pragma once

#include "trialsupply/monitor.hpp"
#include "trialsupply/planner.hpp"

#include <json.hpp>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace trialsupply {

using Json = nlohmann::ordered_json;

/// Everything one run needs, as one document.
struct RunSpec {
    SupplyModel model;
    ScenarioDistributions dists;
    PlannerSettings planner;
    MonitorSettings monitor;
    Seed seed = 1;
    std::vector<std::string> defaulted;  // dotted paths of omitted optional fields
    std::vector<ValidationIssue> warnings;

    bool operator==(const RunSpec& o) const;
};

/// Malformed document: bad syntax, unknown or missing fields, wrong shapes.
class FormatError : public std::runtime_error {
  public:
    FormatError(std::string field, const std::string& message, int line = 0);
    const std::string& field() const noexcept { return field_; }
    int line() const noexcept { return line_; }

  private:
    std::string field_;
    int line_;
};

/// Parses and validates. Throws FormatError, or ConfigError when the values
/// violate model invariants.
RunSpec load_runspec(const std::string& text);
RunSpec load_runspec_file(const std::string& path);
RunSpec runspec_from_json(const Json& doc);
Json runspec_to_json(const RunSpec& spec);
/// Pretty-printed, every field explicit.
std::string save_runspec(const RunSpec& spec);

Json decisions_to_json(const DecisionVars& d);
DecisionVars decisions_from_json(const Json& j, const SupplyModel& model);

Json observation_to_json(const WeeklyObservation& obs);
WeeklyObservation observation_from_json(const Json& j);

Json event_to_json(const Event& e);
Event event_from_json(const Json& j);
std::string event_line(const Event& e);  // one JSON object, no trailing newline
std::vector<Event> read_event_log(std::istream& in);
void write_event_log(std::ostream& out, const std::vector<Event>& events);

/// Shortest text that parses back to the same double.
std::string format_number(double v);

/// Long observation table: one `site` row per (week, site) and one `trial`
/// row per week carrying the target and the consumption rates.
void write_observations_csv(std::ostream& out, const std::vector<WeeklyObservation>& obs);
std::vector<WeeklyObservation> read_observations_csv(std::istream& in, int sites, int treatments);
std::vector<WeeklyObservation> observations_from_path(const ScenarioPath& path, int weeks);

/// One row per (week, site, treatment) for weeks 1..last simulated week.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
const std::vector<std::string>& trajectory_columns();

void write_scenarios_csv(std::ostream& out, const PlanningResult& result);
void write_traces_csv(std::ostream& out, const PlanningResult& result);

std::string render_planning_report(const PlanningResult& result);

/// Checkpoint view of a live session: stock after the last observed week,
/// what that week shipped, and the thresholds now in force.
struct CheckpointReport {
    int week = 0;
    int checkpoint = 1;            // 1 before the first optimization week
    Eigen::MatrixXd inventory;     // sites x treatments
    Eigen::MatrixXd resupply;
    Eigen::MatrixXd trigger;
    Eigen::MatrixXd ceiling;
    std::optional<double> predicted_remaining_cost;
};

CheckpointReport checkpoint_report(const MonitorSession& session);
std::string render_checkpoint_report(const CheckpointReport& report);

std::string render_summary_line(const RunSummary& summary);

}  // namespace trialsupply
