#include "trialsupply/objective.hpp"

#include <algorithm>
#include <string>

namespace trialsupply {

CostBreakdown& CostBreakdown::operator+=(const CostBreakdown& o) {
    production += o.production;
    recruitment += o.recruitment;
    shipment += o.shipment;
    holding_dc += o.holding_dc;
    holding_sites += o.holding_sites;
    shortage_penalty += o.shortage_penalty;
    disposal += o.disposal;
    total += o.total;
    return *this;
}

CostBreakdown& CostBreakdown::operator/=(double k) {
    production /= k;
    recruitment /= k;
    shipment /= k;
    holding_dc /= k;
    holding_sites /= k;
    shortage_penalty /= k;
    disposal /= k;
    total /= k;
    return *this;
}

DecisionVars expand_planning(const Multipliers& mul, const ConsumptionField& field, const StatusSequence& delta) {
    const Eigen::VectorXd total = total_by_treatment(field);
    for (Eigen::Index i = 0; i < total.size(); ++i) {
        if (!(total[i] > 0.0))
            throw ExpansionError("treatment " + std::to_string(i + 1) + " has zero total consumption");
    }
    const Eigen::MatrixXd avg = average_by_site_treatment(field, delta, 0);
    return {mul.x_mul * total, mul.s_mul * avg, mul.S_mul * avg};
}

Thresholds expand_monitoring(const Multipliers& mul, const ConsumptionField& field, const StatusSequence& delta,
                             int t_star) {
    const Eigen::MatrixXd avg = average_by_site_treatment(field, delta, t_star);
    return {mul.s_mul * avg, mul.S_mul * avg};
}

ScenarioContext ScenarioContext::build(ScenarioPath path, const TrialConfig& config) {
    ScenarioContext ctx;
    ctx.path = std::move(path);
    ctx.status = compute_status(ctx.path, config);
    ctx.field = estimate_consumption(ctx.path, ctx.status.enrollment_open, config);
    ctx.total = total_by_treatment(ctx.field);
    return ctx;
}

namespace {

bool thresholds_ordered(const Eigen::MatrixXd& trigger, const Eigen::MatrixXd& ceiling) {
    return ((trigger.array() >= 0.0) && (trigger.array() < ceiling.array())).all();
}

}  // namespace

Evaluation simulate_costs(const DecisionVars& decisions, const ScenarioContext& ctx, const SupplyModel& model,
                          SupplyState state, const Eigen::VectorXi* pre_boxes, const EvalOptions& options) {
    const auto& config = model.trial;
    const auto& costs = model.costs;
    const bool monitoring = options.mode == CostMode::monitoring;
    const int S = model.sites();

    Evaluation ev;
    CostBreakdown& c = ev.cost;
    if (!monitoring) {
        c.production = costs.production_cost.dot(decisions.production);
        if (pre_boxes != nullptr) c.shipment += costs.shipping_cost.dot(pre_boxes->cast<double>());
    }

    StepOptions step;
    step.allow_shortage = options.allow_shortage;
    step.repair_capacity = options.repair_capacity;
    const double recruit_per_week = costs.recruitment_cost.sum();
    const int last = ctx.status.end_week > 0 ? ctx.status.end_week : std::min(ctx.status.weeks, config.horizon);

    WeekInputs in;
    for (int t = state.week + 1; t <= last && !state.terminated; ++t) {
        in = week_inputs(ctx.status, ctx.field, config, t);
        const WeekReport report = advance_week(state, in, decisions, model, step);
        if (report.capacity_violation && !options.repair_capacity) {
            ev.verdict = Verdict::capacity;
            break;
        }
        if (!report.shortages.empty()) {
            ++ev.shortage_weeks;
            ev.last_shortage_week = t;
            if (!options.allow_shortage) {
                ev.verdict = Verdict::shortage;
                break;
            }
        }

        const double theta = in.supply_open;
        c.recruitment += recruit_per_week * in.enrollment_open;
        c.shipment += costs.shipping_cost.dot(report.boxes.cast<double>());
        if (monitoring || options.allow_shortage) {
            c.holding_dc += costs.dc_holding_cost * theta * state.dc.cwiseMax(0.0).sum();
            c.holding_sites += theta * costs.site_holding_cost.dot(state.site.cwiseMax(0.0).rowwise().sum());
        } else {
            c.holding_dc += costs.dc_holding_cost * theta * state.dc.sum();
            c.holding_sites += theta * costs.site_holding_cost.dot(state.site.rowwise().sum());
        }
        if (monitoring) c.shortage_penalty += costs.shortage_penalty * (-state.site.cwiseMin(0.0)).sum();
        if (report.disposed.size() > 0) {
            for (int s = 0; s < S; ++s) c.disposal += costs.disposal_cost.row(s).dot(report.disposed.row(s));
        }
    }
    c.finish();
    return ev;
}

Evaluation evaluate_planning(const DecisionVars& decisions, const ScenarioContext& ctx, const SupplyModel& model,
                             bool allow_shortage) {
    Evaluation ev;
    if (!thresholds_ordered(decisions.trigger, decisions.ceiling)) {
        ev.valid = false;
        return ev;
    }
    Eigen::MatrixXd pre_shipment;
    Eigen::VectorXi pre_boxes;
    SupplyState state = start_supply(decisions, model, pre_shipment, pre_boxes);
    if (check_capacity_pretrial(pre_shipment, model.logistics)) {
        ev.verdict = Verdict::capacity;
        return ev;
    }
    EvalOptions options;
    options.mode = CostMode::planning;
    options.allow_shortage = allow_shortage;
    return simulate_costs(decisions, ctx, model, std::move(state), &pre_boxes, options);
}

Evaluation eval_f1(const Multipliers& mul, const ScenarioContext& ctx, const SupplyModel& model) {
    return evaluate_planning(expand_planning(mul, ctx.field, ctx.status.enrollment_open), ctx, model, false);
}

Evaluation eval_f1(const Multipliers& mul, const ScenarioPath& path, const SupplyModel& model) {
    return eval_f1(mul, ScenarioContext::build(path, model.trial), model);
}

Evaluation evaluate_thresholds(const Thresholds& thresholds, const SupplyState& state,
                               const Eigen::VectorXd& production, const ScenarioContext& ctx,
                               const SupplyModel& model) {
    Evaluation ev;
    if (!thresholds_ordered(thresholds.trigger, thresholds.ceiling)) {
        ev.valid = false;
        return ev;
    }
    const DecisionVars decisions{production, thresholds.trigger, thresholds.ceiling};
    EvalOptions options;
    options.mode = CostMode::monitoring;
    options.allow_shortage = true;
    return simulate_costs(decisions, ctx, model, state, nullptr, options);
}

Evaluation eval_f2(const Multipliers& mul, int t_star, const SupplyState& state, const Eigen::VectorXd& production,
                   const ScenarioContext& ctx, const SupplyModel& model) {
    const Thresholds th = expand_monitoring(mul, ctx.field, ctx.status.enrollment_open, t_star);
    return evaluate_thresholds(th, state, production, ctx, model);
}

Evaluation eval_f2(const Multipliers& mul, int t_star, const Trajectory& carry_in, const ScenarioPath& path,
                   const SupplyModel& model) {
    const ScenarioContext ctx = ScenarioContext::build(path, model.trial);
    return eval_f2(mul, t_star, state_from_trajectory(carry_in, model, t_star), carry_in.production, ctx, model);
}

CostBreakdown trajectory_costs(const Trajectory& traj, const SupplyModel& model, CostMode mode, int from_week) {
    const auto& costs = model.costs;
    const bool monitoring = mode == CostMode::monitoring;
    const int S = model.sites();
    CostBreakdown c;
    if (!monitoring) {
        c.production = costs.production_cost.dot(traj.production);
        c.shipment += costs.shipping_cost.dot(traj.pre_boxes.cast<double>());
    }
    const double recruit_per_week = costs.recruitment_cost.sum();
    for (int t = from_week + 1; t <= traj.last_week; ++t) {
        const double theta = traj.supply_open[t - 1];
        c.recruitment += recruit_per_week * traj.enrollment_open[t - 1];
        c.shipment += costs.shipping_cost.dot(traj.boxes.col(t - 1).cast<double>());
        c.holding_dc += costs.dc_holding_cost * theta * traj.dc_inventory.col(t - 1).cwiseMax(0.0).sum();
        for (int s = 0; s < S; ++s) {
            const auto y = traj.site_inventory[s].col(t - 1);
            c.holding_sites += costs.site_holding_cost[s] * theta * y.cwiseMax(0.0).sum();
            if (monitoring) c.shortage_penalty += costs.shortage_penalty * (-y.cwiseMin(0.0)).sum();
        }
    }
    if (traj.end_week > from_week && traj.end_week > 0) {
        for (int s = 0; s < S; ++s) c.disposal += costs.disposal_cost.row(s).dot(traj.disposed.row(s));
    }
    c.finish();
    return c;
}

}  // namespace trialsupply
