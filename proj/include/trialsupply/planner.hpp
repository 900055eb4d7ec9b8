#pragma once

#include "trialsupply/objective.hpp"
#include "trialsupply/pso.hpp"
#include "trialsupply/scenario.hpp"

#include <stdexcept>
#include <vector>

namespace trialsupply {

/// Bounds on (x_mul, s_mul, S_mul).
PsoParams<double> default_planning_pso();
/// Bounds on (s_mul, S_mul).
PsoParams<double> default_monitoring_pso();

struct PlannerSettings {
    int n_sim = 100;
    double quantile = 0.99;
    int evaluation_paths = 20;
    PsoParams<double> pso = default_planning_pso();
    double widen_factor = 2.0;  // applied to the upper bounds once after an initialization failure
};

struct ScenarioOutcome {
    Seed seed = 0;  // scenario path seed
    Multipliers multipliers;
    Eigen::VectorXd production;
    Eigen::MatrixXd trigger;
    Eigen::MatrixXd ceiling;
    double cost = 0.0;
    bool widened = false;
    std::vector<double> trace;
};

struct PlanningResult {
    DecisionVars decisions;  // rounded up to whole doses
    double predicted_cost = 0.0;
    CostBreakdown predicted_breakdown;
    double evaluation_shortage_fraction = 0.0;
    std::vector<ScenarioOutcome> per_scenario;
    double quantile_level = 0.99;
};

class PlanningFailure : public std::runtime_error {
  public:
    PlanningFailure(Seed seed, const std::string& why)
        : std::runtime_error("scenario with seed " + std::to_string(seed) + " failed: " + why), seed_(seed) {}
    Seed seed() const noexcept { return seed_; }

  private:
    Seed seed_;
};

/// Order statistic of rank ceil(q * n), 1-based, clamped to [1, n].
double nearest_rank(std::vector<double> values, double q);

/// x: nearest-rank quantile per treatment; trigger and ceiling: lower median
/// per (site, treatment). Not rounded.
DecisionVars aggregate(const std::vector<ScenarioOutcome>& outcomes, double quantile);

/// Runs the planning swarm on one scenario. Retries once with widened bounds
/// when no admissible starting swarm is found.
ScenarioOutcome optimize_scenario(const ScenarioContext& ctx, const SupplyModel& model, const PlannerSettings& settings,
                                  Seed pso_seed);

Seed planning_path_seed(Seed master, int k);
Seed planning_pso_seed(Seed master, int k);
Seed evaluation_path_seed(Seed master, int k);

PlanningResult plan(const ScenarioDistributions& dists, const SupplyModel& model, const PlannerSettings& settings,
                    Seed master);

/// Mean planning cost of fixed decisions over fresh paths. Shortages are
/// tolerated and counted.
struct CostEstimate {
    CostBreakdown mean;
    double shortage_fraction = 0.0;
};
CostEstimate estimate_planning_cost(const DecisionVars& decisions, const ScenarioDistributions& dists,
                                    const SupplyModel& model, int paths, Seed master);

/// Number of planning scenarios that run short when rolled out with the
/// aggregated production and their own optimized thresholds.
int count_production_shortfalls(const PlanningResult& result, const ScenarioDistributions& dists,
                                 const SupplyModel& model);

DecisionVars round_up(const DecisionVars& d);

}  // namespace trialsupply
