#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace trialsupply {

/// Static sets and horizons of a trial. Weeks are 1-based throughout.
struct TrialConfig {
    int treatments = 1;
    int sites = 1;
    int horizon = 1;
    std::vector<int> interim_times;
    std::vector<int> resupply_times;
    std::vector<int> optimization_times;
    int treatment_duration = 1;
    int lead_time = 1;

    bool is_interim(int week) const;
    bool is_resupply(int week) const;
    bool is_optimization(int week) const;

    bool operator==(const TrialConfig&) const = default;
};

struct CostParams {
    Eigen::VectorXd production_cost;    // per treatment, per dose
    Eigen::VectorXd recruitment_cost;   // per site, per open week
    Eigen::VectorXd shipping_cost;      // per site, per box
    double dc_holding_cost = 0.0;       // per dose per week
    Eigen::VectorXd site_holding_cost;  // per site, per dose per week
    Eigen::MatrixXd disposal_cost;      // sites x treatments, per dose
    double shortage_penalty = 0.0;      // per dose short per week

    bool operator==(const CostParams& other) const;
};

struct LogisticsParams {
    double dose_volume = 1.0;
    double box_capacity = 1.0;
    Eigen::VectorXd site_capacity;  // per site, same volume unit as dose_volume

    bool operator==(const LogisticsParams& other) const;
};

/// The three static parameter groups travel together everywhere.
struct SupplyModel {
    TrialConfig trial;
    CostParams costs;
    LogisticsParams logistics;

    int sites() const { return trial.sites; }
    int treatments() const { return trial.treatments; }
    int horizon() const { return trial.horizon; }

    bool operator==(const SupplyModel&) const = default;
};

struct ValidationIssue {
    std::string field;
    std::string value;
    std::string rule;

    std::string to_string() const;
};

struct ValidationReport {
    std::vector<ValidationIssue> errors;
    std::vector<ValidationIssue> warnings;

    bool ok() const { return errors.empty(); }
    std::string summary() const;
};

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(ValidationReport report);
    const ValidationReport& report() const noexcept { return report_; }

  private:
    ValidationReport report_;
};

/// Checks every invariant of the model and collects all violations.
/// Site holding cost not exceeding DC holding cost is reported as a warning.
ValidationReport validate_config(const SupplyModel& model);

/// Returns the model unchanged, or throws ConfigError with the full report.
const SupplyModel& require_valid(const SupplyModel& model);

/// Builds a time set {start, start+every, ...} capped at `last`.
std::vector<int> every_n_weeks(int start, int every, int last);

}  // namespace trialsupply
