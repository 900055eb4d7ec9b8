#include "trialsupply/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace trialsupply {

namespace {

constexpr double kVolumeSlack = 1e-9;

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

bool fits(double volume, double capacity) { return volume <= capacity * (1.0 + kVolumeSlack); }

// Scales each treatment's column so the total shipped never exceeds DC stock.
void cap_at_dc(Eigen::MatrixXd& shipment, const Eigen::VectorXd& dc) {
    for (Eigen::Index i = 0; i < shipment.cols(); ++i) {
        const double requested = shipment.col(i).sum();
        const double available = std::max(dc[i], 0.0);
        if (requested > available) {
            shipment.col(i) *= requested > 0.0 ? available / requested : 0.0;
        }
    }
}

}  // namespace

bool DecisionVars::operator==(const DecisionVars& o) const {
    return same(production, o.production) && same(trigger, o.trigger) && same(ceiling, o.ceiling);
}

std::vector<std::string> check_decisions(const DecisionVars& d, const SupplyModel& model) {
    std::vector<std::string> problems;
    const int S = model.sites();
    const int I = model.treatments();
    if (d.production.size() != I) problems.push_back("production must have one entry per treatment");
    if (d.trigger.rows() != S || d.trigger.cols() != I) problems.push_back("trigger must be sites x treatments");
    if (d.ceiling.rows() != S || d.ceiling.cols() != I) problems.push_back("ceiling must be sites x treatments");
    if (!problems.empty()) return problems;
    if ((d.production.array() < 0.0).any()) problems.push_back("production must be >= 0");
    if ((d.trigger.array() < 0.0).any()) problems.push_back("trigger must be >= 0");
    for (int s = 0; s < S; ++s) {
        for (int i = 0; i < I; ++i) {
            const double lo = d.trigger(s, i);
            const double hi = d.ceiling(s, i);
            if (hi < lo || (hi > 0.0 && !(lo < hi))) {
                std::ostringstream os;
                os << "trigger must be below ceiling at site " << s + 1 << ", treatment " << i + 1;
                problems.push_back(os.str());
            }
        }
        const double volume = model.logistics.dose_volume * d.ceiling.row(s).sum();
        if (!fits(volume, model.logistics.site_capacity[s])) {
            std::ostringstream os;
            os << "ceilings at site " << s + 1 << " need " << volume << " but capacity is "
               << model.logistics.site_capacity[s];
            problems.push_back(os.str());
        }
    }
    return problems;
}

Eigen::VectorXd update_off_treatment(const Eigen::MatrixXd& off_treatment, const StatusSequence& delta,
                                     const ScenarioPath& path, int tau, int t) {
    const auto S = off_treatment.rows();
    if (t <= tau) return Eigen::VectorXd::Zero(S);
    Eigen::VectorXd next = off_treatment.col(t - 2);
    const int cohort = t - tau;
    for (Eigen::Index s = 0; s < S; ++s) {
        double survivors = delta[cohort - 1] * path.n(static_cast<int>(s), cohort);
        for (int m = 0; m < tau; ++m) survivors *= 1.0 - path.alpha(static_cast<int>(s), t - m);
        next[s] += survivors;
    }
    return next;
}

WeekStatus update_status(const StatusTrack& prev, const ScenarioPath& path, int tau, int t) {
    if (t == 1) return {1, 1};
    const int open = prev.delta(t - 1) == 1 && prev.total_off_treatment(t - 1) < path.D(t - 1) ? 1 : 0;
    const int k = t - tau;
    const int supply = k <= 0 ? 1 : (k == t ? open : prev.delta(k));
    return {open, supply};
}

StatusTrack compute_status(const ScenarioPath& path, const TrialConfig& config) {
    const int W = path.weeks();
    const int T = config.horizon;
    const int tau = config.treatment_duration;
    const int known = std::min(W + 1, T);  // delta(W+1) follows from week-W data

    StatusTrack st;
    st.weeks = W;
    st.off_treatment = Eigen::MatrixXd::Zero(config.sites, W);
    st.enrollment_open = StatusSequence::Zero(known);
    st.supply_open = StatusSequence::Zero(known);
    for (int t = 1; t <= known; ++t) {
        const WeekStatus ws = update_status(st, path, tau, t);
        st.enrollment_open[t - 1] = ws.enrollment_open;
        st.supply_open[t - 1] = ws.supply_open;
        if (t <= W) st.off_treatment.col(t - 1) = update_off_treatment(st.off_treatment, st.enrollment_open, path, tau, t);
    }

    // The trial ends on the last supply-open week before supply closes.
    st.end_week = 0;
    for (int t = 1; t <= std::min(W, T); ++t) {
        if (st.supply_open[t - 1] == 0) break;
        if (t == T) {
            st.end_week = T;
            break;
        }
        const int k = t + 1 - tau;  // theta(t+1) = delta(t+1-tau), known up to delta(W+1)
        if (k >= 1 && k <= known && st.enrollment_open[k - 1] == 0) {
            st.end_week = t;
            break;
        }
    }
    return st;
}

Eigen::MatrixXd resupply_decision(const Eigen::MatrixXd& inventory, const DecisionVars& decisions,
                                  ResupplyMode mode) {
    if (mode == ResupplyMode::emergency) return (decisions.ceiling - inventory).cwiseMax(0.0);
    return (inventory.array() < decisions.trigger.array()).select(decisions.ceiling - inventory, 0.0);
}

int quantize_shipment(const Eigen::Ref<const Eigen::VectorXd>& doses, const LogisticsParams& logistics) {
    const double volume = logistics.dose_volume * doses.sum();
    if (volume <= 0.0) return 0;
    const double ratio = volume / logistics.box_capacity;
    return static_cast<int>(std::ceil(ratio - kVolumeSlack * std::max(1.0, ratio)));
}

std::optional<CapacityViolation> check_capacity_pretrial(const Eigen::MatrixXd& shipment,
                                                         const LogisticsParams& logistics) {
    for (Eigen::Index s = 0; s < shipment.rows(); ++s) {
        const double volume = logistics.dose_volume * shipment.row(s).sum();
        if (!fits(volume, logistics.site_capacity[s]))
            return CapacityViolation{static_cast<int>(s), 0, volume, logistics.site_capacity[s]};
    }
    return std::nullopt;
}

std::optional<CapacityViolation> check_capacity(const Eigen::MatrixXd& previous_inventory,
                                                const Eigen::MatrixXd& arriving, const Eigen::MatrixXd& inventory,
                                                const LogisticsParams& logistics, int lead_time, int t) {
    for (Eigen::Index s = 0; s < inventory.rows(); ++s) {
        const double doses =
            t <= lead_time ? inventory.row(s).sum() : previous_inventory.row(s).sum() + arriving.row(s).sum();
        const double volume = logistics.dose_volume * doses;
        if (!fits(volume, logistics.site_capacity[s]))
            return CapacityViolation{static_cast<int>(s), t, volume, logistics.site_capacity[s]};
    }
    return std::nullopt;
}

bool SupplyState::operator==(const SupplyState& o) const {
    if (week != o.week || terminated != o.terminated || !same(dc, o.dc) || !same(site, o.site) ||
        transit.size() != o.transit.size())
        return false;
    for (std::size_t k = 0; k < transit.size(); ++k)
        if (!same(transit[k], o.transit[k])) return false;
    return true;
}

SupplyState start_supply(const DecisionVars& decisions, const SupplyModel& model, Eigen::MatrixXd& pre_shipment,
                         Eigen::VectorXi& pre_boxes) {
    const int S = model.sites();
    const int I = model.treatments();
    SupplyState state;
    state.week = 0;
    pre_shipment = decisions.ceiling.cwiseMax(0.0);
    cap_at_dc(pre_shipment, decisions.production);
    pre_boxes = Eigen::VectorXi::Zero(S);
    for (int s = 0; s < S; ++s) pre_boxes[s] = quantize_shipment(pre_shipment.row(s).transpose(), model.logistics);
    state.dc = decisions.production - pre_shipment.colwise().sum().transpose();
    state.site = pre_shipment;
    state.transit.assign(model.trial.lead_time, Eigen::MatrixXd::Zero(S, I));
    return state;
}

WeekReport advance_week(SupplyState& state, const WeekInputs& in, const DecisionVars& decisions,
                        const SupplyModel& model, const StepOptions& options) {
    const int t = in.week;
    const int L = model.trial.lead_time;
    const auto S = state.site.rows();
    const auto I = state.site.cols();
    const auto& logistics = model.logistics;

    WeekReport report;
    report.week = t;
    report.shipment = Eigen::MatrixXd::Zero(S, I);
    report.boxes = Eigen::VectorXi::Zero(S);

    const Eigen::MatrixXd previous = state.site;
    auto& slot = state.transit[static_cast<std::size_t>(t % L)];
    if (t > L) state.site += slot;  // shipment dispatched at t - L
    state.site -= in.consumption;

    report.capacity_violation = check_capacity(previous, slot, state.site, logistics, L, t);
    if (report.capacity_violation && !options.repair_capacity) {
        report.stopped = true;
        state.week = t;
        return report;
    }

    for (Eigen::Index s = 0; s < S; ++s)
        for (Eigen::Index i = 0; i < I; ++i)
            if (state.site(s, i) < 0.0)
                report.shortages.push_back({static_cast<int>(s), static_cast<int>(i), t, state.site(s, i)});
    if (!report.shortages.empty() && !options.allow_shortage) {
        report.stopped = true;
        state.week = t;
        return report;
    }

    if (in.supply_open == 1 && !in.arrival_after_close && !in.final_week) {
        for (Eigen::Index s = 0; s < S; ++s) {
            const bool short_here = (state.site.row(s).array() < 0.0).any();
            if (options.emergency_resupply && short_here) {
                report.shipment.row(s) = (decisions.ceiling.row(s) - state.site.row(s)).cwiseMax(0.0);
                report.emergency_sites.push_back(static_cast<int>(s));
            } else if (in.resupply_checkup) {
                report.shipment.row(s) = (state.site.row(s).array() < decisions.trigger.row(s).array())
                                             .select(decisions.ceiling.row(s) - state.site.row(s), 0.0);
            }
        }
        cap_at_dc(report.shipment, state.dc);

        if (options.repair_capacity) {
            for (Eigen::Index s = 0; s < S; ++s) {
                const double requested = report.shipment.row(s).sum();
                if (requested <= 0.0) continue;
                // Stock on hand plus everything landing before this shipment.
                double projected = state.site.row(s).sum();
                for (int k = 1; k < L; ++k) projected += state.transit[static_cast<std::size_t>((t + k) % L)].row(s).sum();
                const double room = logistics.site_capacity[s] / logistics.dose_volume - std::max(projected, 0.0);
                if (requested > room * (1.0 + kVolumeSlack)) {
                    report.shipment.row(s) *= std::max(room, 0.0) / requested;
                    report.reduced_sites.push_back(static_cast<int>(s));
                }
            }
        }
        for (Eigen::Index s = 0; s < S; ++s)
            report.boxes[s] = quantize_shipment(report.shipment.row(s).transpose(), logistics);
    }

    state.dc -= report.shipment.colwise().sum().transpose();
    slot = report.shipment;

    if (in.final_week) {
        report.disposed = state.site.cwiseMax(0.0);
        state.site.setZero();
        state.terminated = true;
    }
    state.week = t;
    return report;
}

WeekInputs week_inputs(const StatusTrack& status, const ConsumptionField& field, const TrialConfig& config, int t) {
    WeekInputs in;
    in.week = t;
    in.enrollment_open = status.delta(t);
    in.supply_open = status.theta(t);
    in.consumption = field.week(t);
    in.resupply_checkup = config.is_resupply(t);
    const int k = t + config.lead_time - config.treatment_duration;  // theta(t+L) = delta(k)
    in.arrival_after_close =
        k >= 1 && k <= t + 1 && k <= static_cast<int>(status.enrollment_open.size()) && status.delta(k) == 0;
    in.final_week = status.end_week == t;
    return in;
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::feasible: return "feasible";
        case Verdict::shortage: return "shortage";
        case Verdict::capacity: return "capacity";
    }
    return "unknown";
}

Trajectory empty_trajectory(const SupplyModel& model) {
    const int S = model.sites();
    const int I = model.treatments();
    const int T = model.horizon();
    Trajectory tr;
    tr.production = Eigen::VectorXd::Zero(I);
    tr.off_treatment = Eigen::MatrixXd::Zero(S, T);
    tr.enrollment_open = StatusSequence::Zero(T);
    tr.supply_open = StatusSequence::Zero(T);
    tr.dc_inventory = Eigen::MatrixXd::Zero(I, T);
    tr.site_inventory.assign(S, Eigen::MatrixXd::Zero(I, T));
    tr.pre_shipment = Eigen::MatrixXd::Zero(S, I);
    tr.shipments.assign(S, Eigen::MatrixXd::Zero(I, T));
    tr.pre_boxes = Eigen::VectorXi::Zero(S);
    tr.boxes = Eigen::MatrixXi::Zero(S, T);
    tr.consumption.by_site.assign(S, Eigen::MatrixXd::Zero(I, T));
    tr.disposed = Eigen::MatrixXd::Zero(S, I);
    return tr;
}

void record_week(Trajectory& tr, const SupplyState& state, const WeekReport& report, const StatusTrack& status,
                 const ConsumptionField& field) {
    const int t = report.week;
    const auto S = state.site.rows();
    tr.off_treatment.col(t - 1) = status.off_treatment.col(t - 1);
    tr.enrollment_open[t - 1] = status.delta(t);
    tr.supply_open[t - 1] = status.theta(t);
    tr.dc_inventory.col(t - 1) = state.dc;
    for (Eigen::Index s = 0; s < S; ++s) {
        tr.site_inventory[s].col(t - 1) = state.site.row(s).transpose();
        tr.shipments[s].col(t - 1) = report.shipment.row(s).transpose();
        tr.consumption.by_site[s].col(t - 1) = field.by_site[s].col(t - 1);
    }
    tr.boxes.col(t - 1) = report.boxes;
    tr.last_week = t;
    if (!report.shortages.empty()) {
        tr.shortage_events.insert(tr.shortage_events.end(), report.shortages.begin(), report.shortages.end());
        tr.shortage_weeks.push_back(t);
        if (!tr.first_shortage) tr.first_shortage = report.shortages.front();
    }
    if (report.disposed.size() > 0) {
        tr.disposed = report.disposed;
        tr.end_week = t;
        // Disposal leaves the recorded terminal stock at zero.
        for (Eigen::Index s = 0; s < S; ++s) tr.site_inventory[s].col(t - 1).setZero();
    }
}

SupplyState state_from_trajectory(const Trajectory& tr, const SupplyModel& model, int week) {
    const int S = model.sites();
    const int I = model.treatments();
    const int L = model.trial.lead_time;
    SupplyState state;
    state.week = week;
    state.transit.assign(L, Eigen::MatrixXd::Zero(S, I));
    if (week == 0) {
        state.dc = tr.production - tr.pre_shipment.colwise().sum().transpose();
        state.site = tr.pre_shipment;
        return state;
    }
    state.dc = tr.dc_inventory.col(week - 1);
    state.site.resize(S, I);
    for (int s = 0; s < S; ++s) state.site.row(s) = tr.site_inventory[s].col(week - 1).transpose();
    for (int w = std::max(1, week - L + 1); w <= week; ++w) {
        auto& slot = state.transit[static_cast<std::size_t>(w % L)];
        for (int s = 0; s < S; ++s) slot.row(s) = tr.shipments[s].col(w - 1).transpose();
    }
    state.terminated = tr.end_week > 0 && week >= tr.end_week;
    return state;
}

Trajectory rollout(const DecisionVars& decisions, const ScenarioPath& path, const SupplyModel& model, int from_week,
                   const Trajectory* carry_in, bool allow_shortage) {
    const auto& config = model.trial;
    const StatusTrack status = compute_status(path, config);
    const ConsumptionField field = estimate_consumption(path, status.enrollment_open, config);

    Trajectory tr = empty_trajectory(model);
    tr.production = decisions.production;
    SupplyState state;
    if (carry_in != nullptr && from_week > 0) {
        const int S = model.sites();
        tr.production = carry_in->production;
        tr.pre_shipment = carry_in->pre_shipment;
        tr.pre_boxes = carry_in->pre_boxes;
        tr.off_treatment.leftCols(from_week) = carry_in->off_treatment.leftCols(from_week);
        tr.enrollment_open.head(from_week) = carry_in->enrollment_open.head(from_week);
        tr.supply_open.head(from_week) = carry_in->supply_open.head(from_week);
        tr.dc_inventory.leftCols(from_week) = carry_in->dc_inventory.leftCols(from_week);
        tr.boxes.leftCols(from_week) = carry_in->boxes.leftCols(from_week);
        for (int s = 0; s < S; ++s) {
            tr.site_inventory[s].leftCols(from_week) = carry_in->site_inventory[s].leftCols(from_week);
            tr.shipments[s].leftCols(from_week) = carry_in->shipments[s].leftCols(from_week);
            tr.consumption.by_site[s].leftCols(from_week) = carry_in->consumption.by_site[s].leftCols(from_week);
        }
        for (const auto& e : carry_in->shortage_events)
            if (e.week <= from_week) tr.shortage_events.push_back(e);
        for (int w : carry_in->shortage_weeks)
            if (w <= from_week) tr.shortage_weeks.push_back(w);
        if (!tr.shortage_events.empty()) tr.first_shortage = tr.shortage_events.front();
        tr.last_week = from_week;
        state = state_from_trajectory(*carry_in, model, from_week);
    } else {
        from_week = 0;
        state = start_supply(decisions, model, tr.pre_shipment, tr.pre_boxes);
        if (auto v = check_capacity_pretrial(tr.pre_shipment, model.logistics)) {
            tr.verdict = Verdict::capacity;
            tr.capacity_violation = v;
            return tr;
        }
    }

    const int last = status.end_week > 0 ? status.end_week : std::min(status.weeks, config.horizon);
    StepOptions options;
    options.allow_shortage = allow_shortage;
    for (int t = from_week + 1; t <= last && !state.terminated; ++t) {
        const WeekInputs in = week_inputs(status, field, config, t);
        const WeekReport report = advance_week(state, in, decisions, model, options);
        record_week(tr, state, report, status, field);
        if (report.capacity_violation) {
            tr.verdict = Verdict::capacity;
            tr.capacity_violation = report.capacity_violation;
            break;
        }
        if (report.stopped) {
            tr.verdict = Verdict::shortage;
            break;
        }
    }
    if (tr.end_week == 0 && status.end_week > 0 && tr.last_week >= status.end_week) tr.end_week = status.end_week;
    return tr;
}

double mass_balance_error(const Trajectory& tr, int lead_time) {
    const double produced = tr.production.sum();
    double consumed = 0.0;
    double worst = 0.0;
    const auto S = static_cast<int>(tr.site_inventory.size());
    for (int t = 1; t <= tr.last_week; ++t) {
        double sites = 0.0;
        double transit = 0.0;
        for (int s = 0; s < S; ++s) {
            consumed += tr.consumption.by_site[s].col(t - 1).sum();
            sites += tr.site_inventory[s].col(t - 1).sum();
            for (int w = std::max(1, t - lead_time + 1); w <= t; ++w) transit += tr.shipments[s].col(w - 1).sum();
        }
        const double disposed = (tr.end_week > 0 && t >= tr.end_week) ? tr.disposed.sum() : 0.0;
        const double accounted = tr.dc_inventory.col(t - 1).sum() + sites + consumed + transit + disposed;
        worst = std::max(worst, std::abs(produced - accounted));
    }
    return worst;
}

}  // namespace trialsupply
