#include "trialsupply/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace trialsupply {

namespace {

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

bool same_costs(const CostBreakdown& a, const CostBreakdown& b) {
    return a.production == b.production && a.recruitment == b.recruitment && a.shipment == b.shipment &&
           a.holding_dc == b.holding_dc && a.holding_sites == b.holding_sites &&
           a.shortage_penalty == b.shortage_penalty && a.disposal == b.disposal && a.total == b.total;
}

[[noreturn]] void reject(MonitorError::Code code, const std::string& what) { throw MonitorError(code, what); }

void check_observation(const MonitorSession& session, const WeeklyObservation& obs) {
    const auto& config = session.model.trial;
    if (session.terminated()) reject(MonitorError::Code::terminated, "session has terminated");
    if (obs.week != session.clock + 1) {
        reject(MonitorError::Code::out_of_order, "expected week " + std::to_string(session.clock + 1) + ", got " +
                                                     std::to_string(obs.week));
    }
    std::vector<std::string> problems;
    if (obs.enrollment.size() != config.sites) problems.push_back("enrollment needs one entry per site");
    if (obs.dropout.size() != config.sites) problems.push_back("dropout needs one entry per site");
    if (obs.consumption_rate.size() != config.treatments)
        problems.push_back("consumption_rate needs one entry per treatment");
    if (problems.empty()) {
        for (Eigen::Index s = 0; s < obs.enrollment.size(); ++s) {
            const double n = obs.enrollment[s];
            if (!(n >= 0.0) || n != std::floor(n)) problems.push_back("enrollment must be non-negative integers");
            const double a = obs.dropout[s];
            if (!(a >= 0.0 && a < 1.0)) problems.push_back("dropout must lie in [0, 1)");
        }
        if (!(obs.consumption_rate.array() >= 0.0).all())
            problems.push_back("consumption_rate must be non-negative");
        const double total = session.dists.consumption_total;
        if (std::abs(obs.consumption_rate.sum() - total) > 1e-9 * std::max(1.0, total))
            problems.push_back("consumption_rate must sum to " + std::to_string(total));
        if (session.clock > 0) {
            const int prev = session.clock;
            if (obs.target < session.observed.D(prev)) problems.push_back("target must not decrease");
            if (!config.is_interim(obs.week)) {
                const Eigen::VectorXd before = session.observed.consumption_rate.col(prev - 1);
                if ((obs.consumption_rate - before).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, before.maxCoeff()))
                    problems.push_back("consumption_rate may only change at interim weeks");
            }
        }
        if (!(obs.target >= 0.0)) problems.push_back("target must be non-negative");
    }
    if (!problems.empty()) {
        std::ostringstream msg;
        for (std::size_t k = 0; k < problems.size(); ++k) msg << (k ? "; " : "") << problems[k];
        reject(MonitorError::Code::invalid_observation, msg.str());
    }
}

void append(ScenarioPath& path, const WeeklyObservation& obs) {
    const int t = path.weeks() + 1;
    path.enrollment.conservativeResize(Eigen::NoChange, t);
    path.dropout.conservativeResize(Eigen::NoChange, t);
    path.target.conservativeResize(t);
    path.consumption_rate.conservativeResize(Eigen::NoChange, t);
    path.enrollment.col(t - 1) = obs.enrollment;
    path.dropout.col(t - 1) = obs.dropout;
    path.target[t - 1] = obs.target;
    path.consumption_rate.col(t - 1) = obs.consumption_rate;
}

/// Dynamics and resupply of one observed week; appends the derived events.
AdvanceResult apply_week(MonitorSession& session, const WeeklyObservation& obs) {
    check_observation(session, obs);
    const auto& config = session.model.trial;
    const int t = obs.week;

    append(session.observed, obs);
    session.events.push_back({t, EventKind::observation, obs});
    session.status = compute_status(session.observed, config);
    const ConsumptionField field = estimate_consumption(session.observed, session.status.enrollment_open, config);
    const WeekInputs in = week_inputs(session.status, field, config, t);

    StepOptions options;
    options.allow_shortage = true;
    options.emergency_resupply = true;
    options.repair_capacity = true;
    const WeekReport report = advance_week(session.state, in, session.decisions, session.model, options);
    record_week(session.trajectory, session.state, report, session.status, field);
    session.clock = t;

    AdvanceResult result;
    result.week = t;
    result.shortages = report.shortages;
    for (int s = 0; s < config.sites; ++s) {
        if (report.boxes[s] == 0 && !(report.shipment.row(s).array() > 0.0).any()) continue;
        const bool emergency =
            std::find(report.emergency_sites.begin(), report.emergency_sites.end(), s) != report.emergency_sites.end();
        const bool reduced =
            std::find(report.reduced_sites.begin(), report.reduced_sites.end(), s) != report.reduced_sites.end();
        ShipmentRecord rec{s, report.shipment.row(s).transpose(), report.boxes[s], reduced};
        session.events.push_back({t, emergency ? EventKind::emergency : EventKind::resupply, rec});
        result.shipments.push_back(std::move(rec));
        result.emergency = result.emergency || emergency;
    }
    if (session.state.terminated) {
        TerminationRecord rec{report.disposed, t == config.horizon};
        session.events.push_back({t, EventKind::termination, rec});
        result.terminated = true;
    }
    return result;
}

int open_weeks_observed(const MonitorSession& session) {
    int open = 0;
    for (int t = 1; t <= session.clock; ++t) open += session.status.delta(t);
    return open;
}

ReestimationRecord run_reestimation(MonitorSession& session) {
    const int open = open_weeks_observed(session);
    const Eigen::MatrixXd counts = session.observed.enrollment.leftCols(open);
    ReestimationRecord rec;
    rec.previous_mean = session.dists.enrollment_mean;
    if (counts.size() > 0) {
        rec.p_value = poisson_test_p_value(std::llround(counts.sum()),
                                           session.dists.enrollment_mean * static_cast<double>(counts.size()));
    }
    session.dists = reestimate(session.dists, counts, session.settings.significance);
    rec.new_mean = session.dists.enrollment_mean;
    rec.changed = rec.new_mean != rec.previous_mean;
    session.events.push_back({session.clock, EventKind::reestimation, rec});
    return rec;
}

Eigen::MatrixXd lower_median(const std::vector<Eigen::MatrixXd>& samples) {
    const auto rows = samples.front().rows();
    const auto cols = samples.front().cols();
    Eigen::MatrixXd out(rows, cols);
    std::vector<double> buf(samples.size());
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            for (std::size_t k = 0; k < samples.size(); ++k) buf[k] = samples[k](r, c);
            out(r, c) = nearest_rank(buf, 0.5);
        }
    }
    return out;
}

std::optional<Eigen::Vector2d> search_suffix(const MonitorSession& session, const ScenarioContext& ctx,
                                             const Eigen::MatrixXd& avg, Seed pso_seed) {
    const int settled = first_influenced_week(session.model.trial, session.clock) - 1;
    const PsoObjective<double> objective = [&](const Eigen::VectorXd& v) {
        const Thresholds th{v[0] * avg, v[1] * avg};
        const Evaluation ev =
            evaluate_thresholds(th, session.state, session.decisions.production, ctx, session.model);
        const bool feasible = ev.admissible() && ev.last_shortage_week <= settled;
        if (session.settings.shortage_is_infeasible && !feasible) return Score<double>{};
        return Score<double>{ev.value(), feasible};
    };
    try {
        return optimize(session.settings.pso, objective, pso_seed).best_position;
    } catch (const InitializationFailure&) {
    }
    PsoParams<double> wide = session.settings.pso;
    wide.upper = wide.lower + session.settings.widen_factor * (wide.upper - wide.lower);
    try {
        return optimize(wide, objective, pso_seed).best_position;
    } catch (const InitializationFailure&) {
        return std::nullopt;
    }
}

}  // namespace

int first_influenced_week(const TrialConfig& config, int t_star) {
    for (int t : config.resupply_times)
        if (t > t_star) return t + 1;
    return config.horizon + 1;
}

bool MonitorSettings::operator==(const MonitorSettings& o) const {
    return n_sim == o.n_sim && evaluation_paths == o.evaluation_paths && widen_factor == o.widen_factor &&
           reestimate == o.reestimate && shortage_is_infeasible == o.shortage_is_infeasible &&
           significance == o.significance && auto_optimize == o.auto_optimize &&
           pso.population == o.pso.population && pso.max_iterations == o.pso.max_iterations &&
           pso.inertia == o.pso.inertia && pso.cognitive == o.pso.cognitive && pso.social == o.pso.social &&
           same(pso.lower, o.pso.lower) && same(pso.upper, o.pso.upper) && pso.velocity_clamp == o.pso.velocity_clamp &&
           pso.init_retry_limit == o.pso.init_retry_limit && pso.per_coordinate == o.pso.per_coordinate;
}

bool WeeklyObservation::operator==(const WeeklyObservation& o) const {
    return week == o.week && same(enrollment, o.enrollment) && same(dropout, o.dropout) && target == o.target &&
           same(consumption_rate, o.consumption_rate);
}

bool ShipmentRecord::operator==(const ShipmentRecord& o) const {
    return site == o.site && same(doses, o.doses) && boxes == o.boxes && reduced == o.reduced;
}

bool OptimizationRecord::operator==(const OptimizationRecord& o) const {
    return applied == o.applied && forced == o.forced && same(trigger, o.trigger) && same(ceiling, o.ceiling) &&
           predicted_remaining_cost == o.predicted_remaining_cost &&
           shortage_probability == o.shortage_probability && same_costs(breakdown, o.breakdown) &&
           scenarios == o.scenarios && skipped == o.skipped && failed == o.failed && note == o.note;
}

bool TerminationRecord::operator==(const TerminationRecord& o) const {
    return same(disposed, o.disposed) && horizon_reached == o.horizon_reached;
}

bool Event::operator==(const Event& o) const { return week == o.week && kind == o.kind && payload == o.payload; }

std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::observation: return "observation";
        case EventKind::resupply: return "resupply";
        case EventKind::emergency: return "emergency";
        case EventKind::reestimation: return "reestimation";
        case EventKind::optimization: return "optimization";
        case EventKind::termination: return "termination";
    }
    return "unknown";
}

std::optional<EventKind> event_kind_from_string(const std::string& s) {
    for (EventKind k : {EventKind::observation, EventKind::resupply, EventKind::emergency, EventKind::reestimation,
                        EventKind::optimization, EventKind::termination}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

WeeklyObservation observation_from_path(const ScenarioPath& path, int t) {
    return {t, path.enrollment.col(t - 1), path.dropout.col(t - 1), path.D(t), path.consumption_rate.col(t - 1)};
}

Seed monitoring_path_seed(Seed master, int t_star, int k) {
    return derive_seed(master, "monitoring", static_cast<std::uint64_t>(t_star), static_cast<std::uint64_t>(k));
}
Seed monitoring_pso_seed(Seed master, int t_star, int k) {
    return derive_seed(master, "monitoring-pso", static_cast<std::uint64_t>(t_star), static_cast<std::uint64_t>(k));
}
Seed monitoring_evaluation_seed(Seed master, int t_star, int k) {
    return derive_seed(master, "monitoring-evaluation", static_cast<std::uint64_t>(t_star),
                       static_cast<std::uint64_t>(k));
}

MonitorSession start_session(const DecisionVars& decisions, const ScenarioDistributions& dists,
                             const SupplyModel& model, const MonitorSettings& settings, Seed seed) {
    const int S = model.sites();
    const int I = model.treatments();
    if (decisions.production.size() != I || decisions.trigger.rows() != S || decisions.trigger.cols() != I ||
        decisions.ceiling.rows() != S || decisions.ceiling.cols() != I) {
        throw std::invalid_argument("decision dimensions do not match the trial");
    }
    if (const auto problems = settings.pso.problems(); !problems.empty()) throw std::invalid_argument(problems.front());
    if (settings.pso.dimension() != 2) throw std::invalid_argument("monitoring search needs 2 bounds");

    MonitorSession session;
    session.model = model;
    session.dists = dists;
    session.settings = settings;
    session.seed = seed;
    session.decisions = decisions;
    session.observed = empty_path(model.trial, 0);
    session.status = compute_status(session.observed, model.trial);
    session.trajectory = empty_trajectory(model);
    session.trajectory.production = decisions.production;
    session.state = start_supply(decisions, model, session.trajectory.pre_shipment, session.trajectory.pre_boxes);
    if (const auto v = check_capacity_pretrial(session.trajectory.pre_shipment, model.logistics)) {
        std::ostringstream msg;
        msg << "pre-trial shipment to site " << v->site + 1 << " needs " << v->volume << " of " << v->capacity
            << " capacity";
        throw MonitorError(MonitorError::Code::capacity, msg.str());
    }
    return session;
}

AdvanceResult advance(MonitorSession& session, const WeeklyObservation& obs) {
    AdvanceResult result = apply_week(session, obs);
    if (!result.terminated && session.settings.auto_optimize && session.model.trial.is_optimization(obs.week)) {
        if (session.settings.reestimate) result.reestimation = run_reestimation(session);
        result.optimization = reoptimize(session);
    }
    return result;
}

WhatIf what_if(const MonitorSession& session, const Thresholds& candidate, int n_paths) {
    WhatIf out;
    out.paths = n_paths;
    if (n_paths <= 0) return out;
    DecisionVars decisions{session.decisions.production, candidate.trigger, candidate.ceiling};
    EvalOptions options;
    options.mode = CostMode::monitoring;
    options.allow_shortage = true;
    options.repair_capacity = true;
    int short_paths = 0;
    for (int k = 0; k < n_paths; ++k) {
        const auto suffix = generate_suffix(session.dists, session.model.trial, session.clock, session.observed,
                                            monitoring_evaluation_seed(session.seed, session.clock, k));
        const auto ctx = ScenarioContext::build(suffix, session.model.trial);
        const Evaluation ev = simulate_costs(decisions, ctx, session.model, session.state, nullptr, options);
        out.mean += ev.cost;
        if (ev.shortage_weeks > 0) ++short_paths;
    }
    out.mean /= n_paths;
    out.cost = out.mean.total;
    out.shortage_probability = static_cast<double>(short_paths) / n_paths;
    return out;
}

OptimizationRecord compute_reoptimization(const MonitorSession& session) {
    if (session.terminated()) reject(MonitorError::Code::terminated, "session has terminated");
    const auto& config = session.model.trial;
    const int t_star = session.clock;

    OptimizationRecord rec;
    std::vector<Eigen::MatrixXd> triggers;
    std::vector<Eigen::MatrixXd> ceilings;
    for (int k = 0; k < session.settings.n_sim; ++k) {
        const auto suffix = generate_suffix(session.dists, config, t_star, session.observed,
                                            monitoring_path_seed(session.seed, t_star, k));
        const auto ctx = ScenarioContext::build(suffix, config);
        Eigen::MatrixXd avg;
        try {
            avg = average_by_site_treatment(ctx.field, ctx.status.enrollment_open, t_star);
        } catch (const NoOpenWeeks&) {
            ++rec.skipped;
            continue;
        }
        const auto best = search_suffix(session, ctx, avg, monitoring_pso_seed(session.seed, t_star, k));
        if (!best) {
            ++rec.failed;
            continue;
        }
        triggers.push_back((*best)[0] * avg);
        ceilings.push_back((*best)[1] * avg);
    }
    rec.scenarios = static_cast<int>(triggers.size());

    if (triggers.empty()) {
        rec.applied = false;
        rec.trigger = session.decisions.trigger;
        rec.ceiling = session.decisions.ceiling;
        rec.note = rec.skipped == session.settings.n_sim ? "no enrollment left to plan for; thresholds kept"
                                                         : "no admissible starting swarm; thresholds kept";
    } else {
        rec.applied = true;
        rec.trigger = lower_median(triggers).array().ceil().matrix();
        rec.ceiling = lower_median(ceilings).array().ceil().matrix();
        if (rec.failed > 0) rec.note = std::to_string(rec.failed) + " suffixes without an admissible starting swarm";
    }
    const WhatIf prediction = what_if(session, {rec.trigger, rec.ceiling}, session.settings.evaluation_paths);
    rec.breakdown = prediction.mean;
    rec.predicted_remaining_cost = prediction.cost;
    rec.shortage_probability = prediction.shortage_probability;
    return rec;
}

void apply_optimization(MonitorSession& session, const OptimizationRecord& record) {
    if (record.applied) {
        session.decisions.trigger = record.trigger;
        session.decisions.ceiling = record.ceiling;
    }
    session.last_optimization = record;
    session.events.push_back({session.clock, EventKind::optimization, record});
}

OptimizationRecord reoptimize(MonitorSession& session, bool forced) {
    OptimizationRecord rec = compute_reoptimization(session);
    rec.forced = forced;
    apply_optimization(session, rec);
    return rec;
}

MonitorSession replay(MonitorSession session, const std::vector<Event>& log) {
    if (!session.events.empty() || session.clock != 0) throw std::invalid_argument("replay needs a fresh session");
    for (const Event& ev : log) {
        switch (ev.kind) {
            case EventKind::observation: apply_week(session, std::get<WeeklyObservation>(ev.payload)); break;
            case EventKind::reestimation: {
                const auto& rec = std::get<ReestimationRecord>(ev.payload);
                session.dists.enrollment_mean = rec.new_mean;
                session.events.push_back(ev);
                break;
            }
            case EventKind::optimization:
                apply_optimization(session, std::get<OptimizationRecord>(ev.payload));
                break;
            case EventKind::resupply:
            case EventKind::emergency:
            case EventKind::termination: break;
        }
    }
    if (session.events.size() != log.size()) {
        reject(MonitorError::Code::replay_mismatch, "replay produced " + std::to_string(session.events.size()) +
                                                        " events, log has " + std::to_string(log.size()));
    }
    for (std::size_t k = 0; k < log.size(); ++k) {
        if (!(session.events[k] == log[k]))
            reject(MonitorError::Code::replay_mismatch, "event " + std::to_string(k + 1) + " differs on replay");
    }
    return session;
}

RunSummary summarize(const MonitorSession& session) {
    const auto& tr = session.trajectory;
    const auto& model = session.model;
    RunSummary out;
    out.produced = tr.production;
    out.consumed = Eigen::VectorXd::Zero(model.treatments());
    for (const auto& block : tr.consumption.by_site) out.consumed += block.leftCols(tr.last_week).rowwise().sum();
    const double produced = out.produced.sum();
    out.utilization = produced > 0.0 ? out.consumed.sum() / produced : 0.0;
    out.shutdowns = static_cast<int>(tr.shortage_weeks.size());
    out.cost = trajectory_costs(tr, model, CostMode::monitoring, 0);
    out.cost.production = model.costs.production_cost.dot(tr.production);
    out.cost.shipment += model.costs.shipping_cost.dot(tr.pre_boxes.cast<double>());
    out.cost.finish();
    out.duration = tr.end_week > 0 ? tr.end_week : tr.last_week;
    return out;
}

}  // namespace trialsupply
