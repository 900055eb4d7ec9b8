#include "trialsupply/planner.hpp"

#include <algorithm>
#include <cmath>

namespace trialsupply {

PsoParams<double> default_planning_pso() {
    PsoParams<double> p;
    p.max_iterations = 40;
    p.lower = Eigen::Vector3d(0.0, 0.0, 0.0);
    p.upper = Eigen::Vector3d(3.0, 10.0, 20.0);
    return p;
}

PsoParams<double> default_monitoring_pso() {
    PsoParams<double> p;
    p.max_iterations = 20;
    p.lower = Eigen::Vector2d(0.0, 0.0);
    p.upper = Eigen::Vector2d(10.0, 20.0);
    return p;
}

double nearest_rank(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("nearest_rank of an empty sample");
    const auto n = static_cast<long>(values.size());
    long rank = static_cast<long>(std::ceil(q * static_cast<double>(n) - 1e-12));
    rank = std::clamp(rank, 1L, n);
    std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
    return values[static_cast<std::size_t>(rank - 1)];
}

DecisionVars aggregate(const std::vector<ScenarioOutcome>& outcomes, double quantile) {
    if (outcomes.empty()) throw std::invalid_argument("no scenario results to aggregate");
    const auto& first = outcomes.front();
    const auto I = first.production.size();
    const auto S = first.trigger.rows();
    DecisionVars d{Eigen::VectorXd(I), Eigen::MatrixXd(S, I), Eigen::MatrixXd(S, I)};
    std::vector<double> buf(outcomes.size());
    auto collect = [&](auto get) {
        for (std::size_t k = 0; k < outcomes.size(); ++k) buf[k] = get(outcomes[k]);
        return buf;
    };
    for (Eigen::Index i = 0; i < I; ++i) {
        d.production[i] = nearest_rank(collect([&](const ScenarioOutcome& o) { return o.production[i]; }), quantile);
        for (Eigen::Index s = 0; s < S; ++s) {
            d.trigger(s, i) = nearest_rank(collect([&](const ScenarioOutcome& o) { return o.trigger(s, i); }), 0.5);
            d.ceiling(s, i) = nearest_rank(collect([&](const ScenarioOutcome& o) { return o.ceiling(s, i); }), 0.5);
        }
    }
    return d;
}

DecisionVars round_up(const DecisionVars& d) {
    return {d.production.array().ceil().matrix(), d.trigger.array().ceil().matrix(),
            d.ceiling.array().ceil().matrix()};
}

Seed planning_path_seed(Seed master, int k) { return derive_seed(master, "planning", static_cast<std::uint64_t>(k)); }
Seed planning_pso_seed(Seed master, int k) { return derive_seed(master, "planning-pso", static_cast<std::uint64_t>(k)); }
Seed evaluation_path_seed(Seed master, int k) {
    return derive_seed(master, "evaluation", static_cast<std::uint64_t>(k));
}

ScenarioOutcome optimize_scenario(const ScenarioContext& ctx, const SupplyModel& model, const PlannerSettings& settings,
                                  Seed pso_seed) {
    const PsoObjective<double> objective = [&](const Eigen::VectorXd& v) {
        const Evaluation ev = eval_f1({v[0], v[1], v[2]}, ctx, model);
        return Score<double>{ev.value(), ev.admissible()};
    };
    ScenarioOutcome out;
    PsoResult<double> res;
    try {
        res = optimize(settings.pso, objective, pso_seed);
    } catch (const InitializationFailure&) {
        PsoParams<double> wide = settings.pso;
        wide.upper = wide.lower + settings.widen_factor * (wide.upper - wide.lower);
        res = optimize(wide, objective, pso_seed);
        out.widened = true;
    }
    out.multipliers = {res.best_position[0], res.best_position[1], res.best_position[2]};
    const DecisionVars d = expand_planning(out.multipliers, ctx.field, ctx.status.enrollment_open);
    out.production = d.production;
    out.trigger = d.trigger;
    out.ceiling = d.ceiling;
    out.cost = res.best_value;
    out.trace = std::move(res.trace);
    return out;
}

CostEstimate estimate_planning_cost(const DecisionVars& decisions, const ScenarioDistributions& dists,
                                    const SupplyModel& model, int paths, Seed master) {
    CostEstimate est;
    int short_paths = 0;
    for (int k = 0; k < paths; ++k) {
        const auto ctx = ScenarioContext::build(generate_path(dists, model.trial, evaluation_path_seed(master, k)),
                                                model.trial);
        const Evaluation ev = evaluate_planning(decisions, ctx, model, true);
        est.mean += ev.cost;
        if (ev.shortage_weeks > 0 || ev.verdict != Verdict::feasible) ++short_paths;
    }
    if (paths > 0) {
        est.mean /= paths;
        est.shortage_fraction = static_cast<double>(short_paths) / paths;
    }
    return est;
}

PlanningResult plan(const ScenarioDistributions& dists, const SupplyModel& model, const PlannerSettings& settings,
                    Seed master) {
    if (settings.n_sim < 1) throw std::invalid_argument("n_sim must be >= 1");
    PlanningResult result;
    result.quantile_level = settings.quantile;
    result.per_scenario.reserve(static_cast<std::size_t>(settings.n_sim));
    for (int k = 0; k < settings.n_sim; ++k) {
        const Seed seed = planning_path_seed(master, k);
        const auto ctx = ScenarioContext::build(generate_path(dists, model.trial, seed), model.trial);
        try {
            ScenarioOutcome o = optimize_scenario(ctx, model, settings, planning_pso_seed(master, k));
            o.seed = seed;
            result.per_scenario.push_back(std::move(o));
        } catch (const InitializationFailure& e) {
            throw PlanningFailure(seed, e.what());
        } catch (const std::domain_error& e) {
            throw PlanningFailure(seed, e.what());
        }
    }
    result.decisions = round_up(aggregate(result.per_scenario, settings.quantile));
    const CostEstimate est =
        estimate_planning_cost(result.decisions, dists, model, settings.evaluation_paths, master);
    result.predicted_breakdown = est.mean;
    result.predicted_cost = est.mean.total;
    result.evaluation_shortage_fraction = est.shortage_fraction;
    return result;
}

int count_production_shortfalls(const PlanningResult& result, const ScenarioDistributions& dists,
                                const SupplyModel& model) {
    int shortfalls = 0;
    for (const auto& o : result.per_scenario) {
        const auto path = generate_path(dists, model.trial, o.seed);
        const DecisionVars d{result.decisions.production, o.trigger, o.ceiling};
        if (!rollout(d, path, model).feasible()) ++shortfalls;
    }
    return shortfalls;
}

}  // namespace trialsupply
