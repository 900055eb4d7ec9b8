#pragma once

#include "trialsupply/objective.hpp"
#include "trialsupply/planner.hpp"
#include "trialsupply/pso.hpp"
#include "trialsupply/scenario.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace trialsupply {

struct MonitorSettings {
    int n_sim = 50;            // suffix scenarios per re-optimization
    int evaluation_paths = 20; // suffixes behind the predicted remaining cost
    PsoParams<double> pso = default_monitoring_pso();
    double widen_factor = 2.0;
    bool reestimate = true;    // enrollment mean, at optimization weeks
    double significance = 0.05;
    bool auto_optimize = true; // re-optimize at optimization weeks inside advance()
    /// Suffix positions with an avoidable shortage score +inf during the
    /// search, as at initialization. When false the penalty prices them.
    bool shortage_is_infeasible = true;

    bool operator==(const MonitorSettings& o) const;
};

struct WeeklyObservation {
    int week = 0;
    Eigen::VectorXd enrollment;       // per site
    Eigen::VectorXd dropout;          // per site
    double target = 0.0;
    Eigen::VectorXd consumption_rate; // per treatment

    bool operator==(const WeeklyObservation& o) const;
};

/// Week t of a scenario path as an observation.
WeeklyObservation observation_from_path(const ScenarioPath& path, int t);

struct ShipmentRecord {
    int site = 0;           // 0-based
    Eigen::VectorXd doses;  // per treatment
    int boxes = 0;
    bool reduced = false;   // shrunk to fit site capacity

    bool operator==(const ShipmentRecord& o) const;
};

struct ReestimationRecord {
    double previous_mean = 0.0;
    double new_mean = 0.0;
    double p_value = 1.0;
    bool changed = false;

    bool operator==(const ReestimationRecord&) const = default;
};

struct OptimizationRecord {
    bool applied = false;              // false keeps the previous thresholds
    bool forced = false;               // requested outside the optimization schedule
    Eigen::MatrixXd trigger;           // thresholds in force afterwards
    Eigen::MatrixXd ceiling;
    double predicted_remaining_cost = 0.0;
    double shortage_probability = 0.0;
    CostBreakdown breakdown;
    int scenarios = 0;                 // suffixes that produced thresholds
    int skipped = 0;                   // suffixes with no open enrollment week left
    int failed = 0;                    // suffixes whose swarm could not start
    std::string note;

    bool operator==(const OptimizationRecord& o) const;
};

struct TerminationRecord {
    Eigen::MatrixXd disposed;  // sites x treatments
    bool horizon_reached = false;

    bool operator==(const TerminationRecord& o) const;
};

enum class EventKind { observation, resupply, emergency, reestimation, optimization, termination };

std::string to_string(EventKind k);
std::optional<EventKind> event_kind_from_string(const std::string& s);

using EventPayload =
    std::variant<WeeklyObservation, ShipmentRecord, ReestimationRecord, OptimizationRecord, TerminationRecord>;

struct Event {
    int week = 0;
    EventKind kind = EventKind::observation;
    EventPayload payload;

    bool operator==(const Event& o) const;
};

class MonitorError : public std::runtime_error {
  public:
    enum class Code { out_of_order, terminated, invalid_observation, capacity, replay_mismatch };
    MonitorError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Code code() const noexcept { return code_; }

  private:
    Code code_;
};

/// Live state of a trial under monitoring. `clock` counts completed weeks.
struct MonitorSession {
    SupplyModel model;
    ScenarioDistributions dists;  // enrollment mean may be re-estimated
    MonitorSettings settings;
    Seed seed = 0;
    DecisionVars decisions;       // production fixed, thresholds revised
    int clock = 0;
    ScenarioPath observed;        // weeks 1..clock
    StatusTrack status;
    SupplyState state;
    Trajectory trajectory;
    std::vector<Event> events;
    std::optional<OptimizationRecord> last_optimization;

    bool terminated() const { return state.terminated; }
};

/// Ships the pre-trial stock u(s,i) = ceiling(s,i). Throws MonitorError
/// (capacity) when a site cannot hold it.
MonitorSession start_session(const DecisionVars& decisions, const ScenarioDistributions& dists,
                             const SupplyModel& model, const MonitorSettings& settings, Seed seed);

struct AdvanceResult {
    int week = 0;
    std::vector<ShipmentRecord> shipments;
    bool emergency = false;
    std::vector<ShortageEvent> shortages;
    std::optional<ReestimationRecord> reestimation;
    std::optional<OptimizationRecord> optimization;
    bool terminated = false;
};

/// Ingests week clock+1: dynamics, emergency or regular resupply, then at
/// optimization weeks re-estimation and re-optimization.
AdvanceResult advance(MonitorSession& session, const WeeklyObservation& obs);

/// Per-suffix swarm search and median thresholds, without touching the session.
OptimizationRecord compute_reoptimization(const MonitorSession& session);

/// Computes and applies new thresholds; they govern weeks after the clock.
OptimizationRecord reoptimize(MonitorSession& session, bool forced = false);

/// Applies a recorded optimization; a record that was not applied only logs.
void apply_optimization(MonitorSession& session, const OptimizationRecord& record);

struct WhatIf {
    CostBreakdown mean;
    double cost = 0.0;
    double shortage_probability = 0.0;
    int paths = 0;
};

/// Remaining monitoring cost of candidate thresholds over simulated suffixes.
/// Uses the same suffix batch as the predicted cost of compute_reoptimization.
WhatIf what_if(const MonitorSession& session, const Thresholds& candidate, int n_paths);

/// Rebuilds a session from its event log, starting from a fresh session.
/// Derived events are recomputed and must match the log.
MonitorSession replay(MonitorSession fresh, const std::vector<Event>& log);

/// First week whose stock can differ under thresholds chosen at t_star: the
/// week after the next resupply checkup. Shortages before it are already
/// settled and do not disqualify a candidate.
int first_influenced_week(const TrialConfig& config, int t_star);

Seed monitoring_path_seed(Seed master, int t_star, int k);
Seed monitoring_pso_seed(Seed master, int t_star, int k);
Seed monitoring_evaluation_seed(Seed master, int t_star, int k);

struct RunSummary {
    Eigen::VectorXd produced;   // per treatment
    Eigen::VectorXd consumed;   // per treatment
    double utilization = 0.0;   // consumed / produced, all treatments
    int shutdowns = 0;          // weeks with negative site stock
    CostBreakdown cost;         // realized, including production
    int duration = 0;           // final week
};

RunSummary summarize(const MonitorSession& session);

}  // namespace trialsupply
