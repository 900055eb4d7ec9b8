#pragma once

#include "trialsupply/consumption.hpp"
#include "trialsupply/core_model.hpp"
#include "trialsupply/dynamics.hpp"
#include "trialsupply/scenario.hpp"

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>

namespace trialsupply {

/// Reduced search coordinates. Monitoring ignores x_mul.
struct Multipliers {
    double x_mul = 1.0;
    double s_mul = 1.0;
    double S_mul = 2.0;

    bool operator==(const Multipliers&) const = default;
};

struct CostBreakdown {
    double production = 0.0;
    double recruitment = 0.0;
    double shipment = 0.0;
    double holding_dc = 0.0;
    double holding_sites = 0.0;
    double shortage_penalty = 0.0;
    double disposal = 0.0;
    double total = 0.0;

    double component_sum() const {
        return production + recruitment + shipment + holding_dc + holding_sites + shortage_penalty + disposal;
    }
    void finish() { total = component_sum(); }
    CostBreakdown& operator+=(const CostBreakdown& o);
    CostBreakdown& operator/=(double k);
};

/// Outcome of one objective evaluation. `verdict` is not feasible when the
/// rollout hit a shortage (planning) or a capacity violation, or when the
/// multipliers do not expand to valid decisions.
struct Evaluation {
    CostBreakdown cost;
    Verdict verdict = Verdict::feasible;
    bool valid = true;  // false when thresholds are degenerate (trigger >= ceiling)
    int shortage_weeks = 0;
    int last_shortage_week = 0;  // 0 without shortage

    bool admissible() const { return valid && verdict == Verdict::feasible; }
    double value() const { return admissible() ? cost.total : std::numeric_limits<double>::infinity(); }
};

class ExpansionError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

struct Thresholds {
    Eigen::MatrixXd trigger;  // sites x treatments
    Eigen::MatrixXd ceiling;
};

/// x = x_mul * total consumption, s and S = multiplier * average weekly consumption.
/// Throws ExpansionError when some treatment has zero total consumption or
/// NoOpenWeeks when enrollment never opens.
DecisionVars expand_planning(const Multipliers& mul, const ConsumptionField& field, const StatusSequence& delta);

/// Thresholds from the average over weeks after t_star.
Thresholds expand_monitoring(const Multipliers& mul, const ConsumptionField& field, const StatusSequence& delta,
                             int t_star);

/// Everything about one scenario that does not depend on the decisions.
struct ScenarioContext {
    ScenarioPath path;
    StatusTrack status;
    ConsumptionField field;
    Eigen::VectorXd total;  // per treatment

    static ScenarioContext build(ScenarioPath path, const TrialConfig& config);
};

enum class CostMode { planning, monitoring };

struct EvalOptions {
    CostMode mode = CostMode::planning;
    bool allow_shortage = false;
    bool repair_capacity = false;
};

/// Runs weeks state.week+1 .. end of the scenario from `state` and accumulates
/// costs. Planning mode charges production and the pre-trial boxes passed in
/// `pre_boxes`; monitoring mode charges only the simulated weeks, holds only
/// positive stock and penalizes negative stock.
Evaluation simulate_costs(const DecisionVars& decisions, const ScenarioContext& ctx, const SupplyModel& model,
                          SupplyState state, const Eigen::VectorXi* pre_boxes, const EvalOptions& options);

/// Planning cost of full decisions on one scenario, from the pre-trial shipment.
Evaluation evaluate_planning(const DecisionVars& decisions, const ScenarioContext& ctx, const SupplyModel& model,
                             bool allow_shortage = false);

Evaluation eval_f1(const Multipliers& mul, const ScenarioContext& ctx, const SupplyModel& model);
Evaluation eval_f1(const Multipliers& mul, const ScenarioPath& path, const SupplyModel& model);

/// Monitoring cost of the weeks after t_star, continuing from the realized state.
Evaluation eval_f2(const Multipliers& mul, int t_star, const SupplyState& state, const Eigen::VectorXd& production,
                   const ScenarioContext& ctx, const SupplyModel& model);
Evaluation eval_f2(const Multipliers& mul, int t_star, const Trajectory& carry_in, const ScenarioPath& path,
                   const SupplyModel& model);

/// Monitoring cost of explicit thresholds.
Evaluation evaluate_thresholds(const Thresholds& thresholds, const SupplyState& state,
                               const Eigen::VectorXd& production, const ScenarioContext& ctx,
                               const SupplyModel& model);

/// Costs of a recorded trajectory; planning mode includes production and
/// pre-trial boxes, monitoring mode only weeks after `from_week`.
CostBreakdown trajectory_costs(const Trajectory& traj, const SupplyModel& model, CostMode mode, int from_week = 0);

}  // namespace trialsupply
