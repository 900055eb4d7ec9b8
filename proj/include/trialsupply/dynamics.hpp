#pragma once

#include "trialsupply/consumption.hpp"
#include "trialsupply/core_model.hpp"
#include "trialsupply/scenario.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace trialsupply {

/// Production amounts and floor-ceiling thresholds.
struct DecisionVars {
    Eigen::VectorXd production;  // per treatment
    Eigen::MatrixXd trigger;     // sites x treatments
    Eigen::MatrixXd ceiling;     // sites x treatments

    bool operator==(const DecisionVars& o) const;
};

/// Empty when valid; otherwise the violated rules.
std::vector<std::string> check_decisions(const DecisionVars& decisions, const SupplyModel& model);

/// Decision-independent part of a rollout: patients off treatment, enrollment
/// and supply status. Once enrollment closes it stays closed.
struct StatusTrack {
    Eigen::MatrixXd off_treatment;  // sites x weeks
    StatusSequence enrollment_open; // weeks + 1 entries when the path is shorter than the horizon
    StatusSequence supply_open;
    int weeks = 0;                  // weeks covered by the path
    int end_week = 0;               // last week with supply open; 0 while still unknown

    int delta(int t) const { return t <= 0 ? 1 : enrollment_open[t - 1]; }
    int theta(int t) const { return t <= 0 ? 1 : supply_open[t - 1]; }
    double total_off_treatment(int t) const { return t <= 0 ? 0.0 : off_treatment.col(t - 1).sum(); }
};

/// N(s,t) = N(s,t-1) + delta(t-tau) n(s,t-tau) prod_{m<tau} (1 - alpha(s,t-m)) for t > tau, else 0.
Eigen::VectorXd update_off_treatment(const Eigen::MatrixXd& off_treatment, const StatusSequence& delta,
                                     const ScenarioPath& path, int tau, int t);

struct WeekStatus {
    int enrollment_open = 1;
    int supply_open = 1;
};

/// delta(1) = theta(1) = 1; otherwise delta(t) = [sum_s N(s,t-1) < D(t-1)] and
/// theta(t) = delta(t-tau). Non-positive indices read as open.
WeekStatus update_status(const StatusTrack& prev, const ScenarioPath& path, int tau, int t);

StatusTrack compute_status(const ScenarioPath& path, const TrialConfig& config);

enum class ResupplyMode { regular, emergency };

/// Floor-ceiling rule: regular ships ceiling - y whenever y < trigger;
/// emergency refills every entry to the ceiling.
Eigen::MatrixXd resupply_decision(const Eigen::MatrixXd& inventory, const DecisionVars& decisions,
                                  ResupplyMode mode);

/// ceil(sum_i V u_i / Q_box); 0 when nothing ships.
int quantize_shipment(const Eigen::Ref<const Eigen::VectorXd>& doses, const LogisticsParams& logistics);

struct CapacityViolation {
    int site = 0;  // 0-based
    int week = 0;  // 0 for the pre-trial shipment
    double volume = 0.0;
    double capacity = 0.0;
};

/// Pre-trial check (week 0): V sum_i u(s,i) <= Q_s.
std::optional<CapacityViolation> check_capacity_pretrial(const Eigen::MatrixXd& shipment,
                                                         const LogisticsParams& logistics);

/// Week t check. For t <= L the stock on hand must fit; afterwards previous
/// stock plus the arriving shipment must fit.
std::optional<CapacityViolation> check_capacity(const Eigen::MatrixXd& previous_inventory,
                                                const Eigen::MatrixXd& arriving, const Eigen::MatrixXd& inventory,
                                                const LogisticsParams& logistics, int lead_time, int t);

struct ShortageEvent {
    int site = 0;       // 0-based
    int treatment = 0;  // 0-based
    int week = 0;
    double level = 0.0;

    bool operator==(const ShortageEvent&) const = default;
};

/// Mutable supply chain state between weeks.
struct SupplyState {
    int week = 0;                         // last completed week
    Eigen::VectorXd dc;                   // treatments
    Eigen::MatrixXd site;                 // sites x treatments
    std::vector<Eigen::MatrixXd> transit; // ring buffer of the last L shipments, slot t % L
    bool terminated = false;

    bool operator==(const SupplyState& o) const;
};

/// Everything the week step needs to know about week t.
struct WeekInputs {
    int week = 0;
    int enrollment_open = 1;
    int supply_open = 1;
    Eigen::MatrixXd consumption;      // sites x treatments
    bool resupply_checkup = false;
    bool arrival_after_close = false; // a shipment sent now would arrive after supply closes
    bool final_week = false;          // dispose of site stock after this week
};

struct StepOptions {
    bool allow_shortage = false;
    bool emergency_resupply = true;
    /// Shrink shipments that would overflow a site instead of flagging a violation.
    bool repair_capacity = false;
};

struct WeekReport {
    int week = 0;
    Eigen::MatrixXd shipment;       // sites x treatments, dispatched this week
    Eigen::VectorXi boxes;          // sites
    std::vector<int> emergency_sites;
    std::vector<int> reduced_sites; // shipments shrunk to fit capacity (repair mode)
    std::vector<ShortageEvent> shortages;
    std::optional<CapacityViolation> capacity_violation;
    Eigen::MatrixXd disposed;       // set on the final week
    bool stopped = false;           // shortage or capacity violation ended the rollout
};

/// Dispatches the pre-trial shipment u(s,i) = ceiling(s,i), capped at production.
SupplyState start_supply(const DecisionVars& decisions, const SupplyModel& model, Eigen::MatrixXd& pre_shipment,
                         Eigen::VectorXi& pre_boxes);

/// One week: arrivals, consumption, resupply, DC update, disposal.
WeekReport advance_week(SupplyState& state, const WeekInputs& in, const DecisionVars& decisions,
                        const SupplyModel& model, const StepOptions& options);

/// Builds the week-t inputs from a scenario's status track and consumption field.
WeekInputs week_inputs(const StatusTrack& status, const ConsumptionField& field, const TrialConfig& config, int t);

enum class Verdict { feasible, shortage, capacity };

std::string to_string(Verdict v);

/// Full time-indexed supply chain record. Arrays span the horizon; weeks past
/// end_week stay zero.
struct Trajectory {
    Eigen::VectorXd production;                // per treatment
    Eigen::MatrixXd off_treatment;             // sites x weeks
    StatusSequence enrollment_open;            // weeks
    StatusSequence supply_open;                // weeks
    Eigen::MatrixXd dc_inventory;              // treatments x weeks
    std::vector<Eigen::MatrixXd> site_inventory; // per site: treatments x weeks
    Eigen::MatrixXd pre_shipment;              // sites x treatments
    std::vector<Eigen::MatrixXd> shipments;    // per site: treatments x weeks
    Eigen::VectorXi pre_boxes;                 // sites
    Eigen::MatrixXi boxes;                     // sites x weeks
    ConsumptionField consumption;
    Eigen::MatrixXd disposed;                  // sites x treatments
    int end_week = 0;                          // last week with supply open
    int last_week = 0;                         // last simulated week
    std::vector<ShortageEvent> shortage_events;
    std::vector<int> shortage_weeks;           // weeks with any negative site stock
    Verdict verdict = Verdict::feasible;
    std::optional<ShortageEvent> first_shortage;
    std::optional<CapacityViolation> capacity_violation;

    bool feasible() const { return verdict == Verdict::feasible; }
    int horizon() const { return static_cast<int>(enrollment_open.size()); }
    double site(int s, int i, int t) const { return site_inventory[s](i, t - 1); }
    double shipped(int s, int i, int t) const { return shipments[s](i, t - 1); }
};

Trajectory empty_trajectory(const SupplyModel& model);

/// Writes one week's report and state into the trajectory.
void record_week(Trajectory& traj, const SupplyState& state, const WeekReport& report, const StatusTrack& status,
                 const ConsumptionField& field);

/// Reconstructs the state after week `week` from a recorded trajectory.
SupplyState state_from_trajectory(const Trajectory& traj, const SupplyModel& model, int week);

/// Deterministic replay of the supply chain for one scenario. With `carry_in`
/// the first `from_week` weeks are copied from it and simulation resumes at
/// from_week + 1.
Trajectory rollout(const DecisionVars& decisions, const ScenarioPath& path, const SupplyModel& model, int from_week = 0,
                   const Trajectory* carry_in = nullptr, bool allow_shortage = false);

/// Largest deviation of produced = DC + sites + consumed + in transit + disposed over
/// all simulated weeks.
double mass_balance_error(const Trajectory& traj, int lead_time);

}  // namespace trialsupply
