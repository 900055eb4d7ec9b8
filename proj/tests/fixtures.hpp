#pragma once

#include "trialsupply/core_model.hpp"
#include "trialsupply/scenario.hpp"

#include <Eigen/Dense>

namespace fixtures {

using namespace trialsupply;

// One site, one treatment, three weeks, hand-checked week by week.
inline SupplyModel golden_model() {
    SupplyModel m;
    m.trial.treatments = 1;
    m.trial.sites = 1;
    m.trial.horizon = 3;
    m.trial.interim_times = {};
    m.trial.resupply_times = {1, 2, 3};
    m.trial.optimization_times = {};
    m.trial.treatment_duration = 1;
    m.trial.lead_time = 1;
    m.costs.production_cost = Eigen::VectorXd::Constant(1, 1.0);
    m.costs.recruitment_cost = Eigen::VectorXd::Constant(1, 10.0);
    m.costs.shipping_cost = Eigen::VectorXd::Constant(1, 5.0);
    m.costs.dc_holding_cost = 0.1;
    m.costs.site_holding_cost = Eigen::VectorXd::Constant(1, 0.2);
    m.costs.disposal_cost = Eigen::MatrixXd::Constant(1, 1, 2.0);
    m.costs.shortage_penalty = 500.0;
    m.logistics.dose_volume = 1.0;
    m.logistics.box_capacity = 10.0;
    m.logistics.site_capacity = Eigen::VectorXd::Constant(1, 1000.0);
    return m;
}

inline ScenarioPath golden_path() {
    ScenarioPath p;
    p.enrollment = Eigen::MatrixXd::Constant(1, 3, 5.0);
    p.dropout = Eigen::MatrixXd::Zero(1, 3);
    p.target = Eigen::VectorXd::Constant(3, 10.0);
    p.consumption_rate = Eigen::MatrixXd::Constant(1, 3, 1.0);
    return p;
}

inline SupplyModel reference_model() {
    SupplyModel m;
    m.trial.treatments = 3;
    m.trial.sites = 5;
    m.trial.horizon = 260;
    m.trial.interim_times = every_n_weeks(4, 4, 260);
    m.trial.resupply_times = m.trial.interim_times;
    m.trial.optimization_times = m.trial.interim_times;
    m.trial.treatment_duration = 2;
    m.trial.lead_time = 1;
    m.costs.production_cost = (Eigen::VectorXd(3) << 0.5, 25.5, 50.5).finished();
    m.costs.recruitment_cost = (Eigen::VectorXd(5) << 2000, 2500, 3000, 3500, 4000).finished();
    m.costs.shipping_cost = (Eigen::VectorXd(5) << 57, 57, 46, 46, 46).finished();
    m.costs.dc_holding_cost = 0.5;
    m.costs.site_holding_cost = Eigen::VectorXd::Constant(5, 0.5);
    m.costs.disposal_cost.resize(5, 3);
    const double w[5] = {25.55, 25.55, 25.55, 31.05, 31.05};
    for (int s = 0; s < 5; ++s) m.costs.disposal_cost.row(s).setConstant(w[s]);
    m.costs.shortage_penalty = 500.0;
    m.logistics.dose_volume = 2.56;
    m.logistics.box_capacity = 64.0;
    m.logistics.site_capacity = Eigen::VectorXd::Constant(5, 3000.0);
    return m;
}

inline ScenarioDistributions reference_distributions() {
    ScenarioDistributions d;
    d.enrollment_mean = 6.0;
    d.dropout_mean = dropout_mean_for(2);
    d.initial_target = 1000.0;
    d.interim_bump_lo = 0.0;
    d.interim_bump_hi = 0.05;
    d.consumption_means = (Eigen::VectorXd(3) << 2.0, 0.9, 1.1).finished();
    d.consumption_total = 4.0;
    return d;
}

}  // namespace fixtures
