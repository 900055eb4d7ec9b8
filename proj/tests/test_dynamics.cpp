#include "fixtures.hpp"

#include "trialsupply/dynamics.hpp"
#include "trialsupply/objective.hpp"

#include <gtest/gtest.h>

using namespace trialsupply;

namespace {

DecisionVars golden_decisions() {
    return {Eigen::VectorXd::Constant(1, 25.0), Eigen::MatrixXd::Constant(1, 1, 10.0),
            Eigen::MatrixXd::Constant(1, 1, 20.0)};
}

// Thresholds proportional to each scenario's average consumption; production
// large enough that the DC never runs dry.
DecisionVars generous(const ScenarioPath& path, const SupplyModel& m, double x_mul = 3.0) {
    const auto ctx = ScenarioContext::build(path, m.trial);
    return expand_planning({x_mul, 9.0, 14.0}, ctx.field, ctx.status.enrollment_open);
}

}  // namespace

TEST(GoldenRollout, WeekByWeek) {
    const auto m = fixtures::golden_model();
    const auto tr = rollout(golden_decisions(), fixtures::golden_path(), m);
    ASSERT_TRUE(tr.feasible());
    EXPECT_EQ(tr.pre_shipment(0, 0), 20.0);
    EXPECT_EQ(tr.pre_boxes[0], 2);
    EXPECT_EQ(tr.site_inventory[0].row(0), (Eigen::RowVector3d(15, 5, 0)));
    EXPECT_EQ(tr.dc_inventory.row(0), (Eigen::RowVector3d(5, 0, 0)));
    EXPECT_EQ(tr.shipments[0].row(0), (Eigen::RowVector3d(0, 5, 0)));
    EXPECT_EQ(tr.boxes.row(0), (Eigen::RowVector3i(0, 1, 0)));
    EXPECT_TRUE(tr.shortage_events.empty());
    EXPECT_EQ(tr.end_week, 3);
    EXPECT_EQ(tr.off_treatment.row(0), (Eigen::RowVector3d(0, 5, 10)));
    EXPECT_EQ(mass_balance_error(tr, 1), 0.0);
}

TEST(UpdateOffTreatment, SurvivorsOfCohort) {
    TrialConfig c;
    c.sites = 1;
    c.treatments = 1;
    c.horizon = 3;
    c.treatment_duration = 2;
    ScenarioPath p = empty_path(c, 3);
    p.enrollment(0, 0) = 10;
    p.dropout.setConstant(0.1);
    p.target.setConstant(1e9);
    const StatusTrack st = compute_status(p, c);
    EXPECT_EQ(st.off_treatment(0, 0), 0.0);
    EXPECT_EQ(st.off_treatment(0, 1), 0.0);
    EXPECT_NEAR(st.off_treatment(0, 2), 8.1, 1e-12);
}

TEST(UpdateOffTreatment, NoAttritionTelescopes) {
    TrialConfig c;
    c.sites = 1;
    c.treatments = 1;
    c.horizon = 8;
    c.treatment_duration = 3;
    ScenarioPath p = empty_path(c, 8);
    p.enrollment << 1, 2, 3, 4, 5, 6, 7, 8;
    p.target.setConstant(1e9);
    const StatusTrack st = compute_status(p, c);
    for (int t = 1; t <= 8; ++t) {
        const double want = t > 3 ? p.enrollment.leftCols(t - 3).sum() : 0.0;
        EXPECT_EQ(st.off_treatment(0, t - 1), want);
    }
}

TEST(UpdateStatus, StrictInequalityClosesEnrollment) {
    TrialConfig c;
    c.sites = 2;
    c.treatments = 1;
    c.horizon = 6;
    c.treatment_duration = 1;
    ScenarioPath p = empty_path(c, 6);
    p.enrollment.col(0) << 400, 600;
    p.target.setConstant(1000);
    const StatusTrack st = compute_status(p, c);
    // N at week 2 reaches 1000 exactly.
    EXPECT_EQ(st.total_off_treatment(2), 1000.0);
    EXPECT_EQ(st.delta(1), 1);
    EXPECT_EQ(st.delta(2), 1);
    EXPECT_EQ(st.delta(3), 0);
    EXPECT_EQ(st.theta(3), 1);
    EXPECT_EQ(st.theta(4), 0);
    EXPECT_EQ(st.end_week, 3);
}

TEST(UpdateStatus, FirstWeekOpen) {
    const auto m = fixtures::reference_model();
    const auto p = generate_path(fixtures::reference_distributions(), m.trial, 1);
    StatusTrack empty;
    const WeekStatus ws = update_status(empty, p, 2, 1);
    EXPECT_EQ(ws.enrollment_open, 1);
    EXPECT_EQ(ws.supply_open, 1);
}

TEST(UpdateStatus, SupplyLagsEnrollmentByTau) {
    const auto m = fixtures::reference_model();
    const auto d = fixtures::reference_distributions();
    for (Seed seed = 0; seed < 20; ++seed) {
        const auto st = compute_status(generate_path(d, m.trial, seed), m.trial);
        int closed = 0;
        for (int t = 1; t <= m.horizon(); ++t) {
            if (t > 2) EXPECT_EQ(st.theta(t), st.delta(t - 2));
            if (st.delta(t) == 0 && closed == 0) closed = t;
            if (closed) EXPECT_EQ(st.delta(t), 0);
        }
        ASSERT_GT(closed, 0);
        EXPECT_EQ(st.end_week, closed + 1);
        EXPECT_EQ(st.theta(closed + 1), 1);
        EXPECT_EQ(st.theta(closed + 2), 0);
    }
}

TEST(ResupplyDecision, FloorCeilingRule) {
    DecisionVars d{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 5), Eigen::MatrixXd::Constant(1, 1, 20)};
    EXPECT_EQ(resupply_decision(Eigen::MatrixXd::Constant(1, 1, 5), d, ResupplyMode::regular)(0, 0), 0.0);
    EXPECT_EQ(resupply_decision(Eigen::MatrixXd::Constant(1, 1, 4), d, ResupplyMode::regular)(0, 0), 16.0);
    EXPECT_EQ(resupply_decision(Eigen::MatrixXd::Constant(1, 1, -3), d, ResupplyMode::emergency)(0, 0), 23.0);
    EXPECT_EQ(resupply_decision(Eigen::MatrixXd::Constant(1, 1, 12), d, ResupplyMode::emergency)(0, 0), 8.0);
}

TEST(ResupplyDecision, TopsUpBelowTriggerOnly) {
    DecisionVars d{Eigen::VectorXd::Zero(3), (Eigen::MatrixXd(1, 3) << 236, 118, 119).finished(),
                   (Eigen::MatrixXd(1, 3) << 280, 144, 143).finished()};
    const Eigen::MatrixXd y = (Eigen::MatrixXd(1, 3) << 265, 100, 99).finished();
    const Eigen::MatrixXd u = resupply_decision(y, d, ResupplyMode::regular);
    EXPECT_EQ(u, (Eigen::MatrixXd(1, 3) << 0, 44, 44).finished());
}

TEST(QuantizeShipment, BoxBoundaries) {
    LogisticsParams l;
    l.dose_volume = 2.56;
    l.box_capacity = 64.0;
    EXPECT_EQ(quantize_shipment((Eigen::VectorXd(3) << 10, 10, 5).finished(), l), 1);
    EXPECT_EQ(quantize_shipment((Eigen::VectorXd(3) << 10, 10, 6).finished(), l), 2);
    EXPECT_EQ(quantize_shipment(Eigen::VectorXd::Zero(3), l), 0);
    EXPECT_EQ(quantize_shipment((Eigen::VectorXd(1) << 0.1).finished(), l), 1);
}

TEST(CheckCapacity, PretrialBoundary) {
    LogisticsParams l;
    l.dose_volume = 2.56;
    l.box_capacity = 64.0;
    l.site_capacity = Eigen::VectorXd::Constant(1, 3000.0);
    const auto over = check_capacity_pretrial((Eigen::MatrixXd(1, 3) << 1000, 100, 72).finished(), l);
    ASSERT_TRUE(over.has_value());
    EXPECT_NEAR(over->volume, 3000.32, 1e-9);
    EXPECT_FALSE(check_capacity_pretrial((Eigen::MatrixXd(1, 3) << 1000, 100, 71).finished(), l));
    EXPECT_FALSE(check_capacity_pretrial((Eigen::MatrixXd(1, 3) << 330, 167, 165).finished(), l));
    EXPECT_FALSE(check_capacity_pretrial(Eigen::MatrixXd::Zero(1, 3), l));
}

TEST(CheckCapacity, WeeklyRows) {
    LogisticsParams l;
    l.dose_volume = 1.0;
    l.box_capacity = 1.0;
    l.site_capacity = Eigen::VectorXd::Constant(1, 100.0);
    const Eigen::MatrixXd prev = Eigen::MatrixXd::Constant(1, 1, 60);
    const Eigen::MatrixXd arriving = Eigen::MatrixXd::Constant(1, 1, 50);
    const Eigen::MatrixXd now = Eigen::MatrixXd::Constant(1, 1, 90);
    EXPECT_TRUE(check_capacity(prev, arriving, now, l, 1, 2).has_value());
    EXPECT_FALSE(check_capacity(prev, arriving, now, l, 2, 2).has_value());
    EXPECT_FALSE(check_capacity(prev, Eigen::MatrixXd::Zero(1, 1), now, l, 1, 2).has_value());
}

TEST(Rollout, NoProductionMeansImmediateShortage) {
    const auto m = fixtures::reference_model();
    const auto p = generate_path(fixtures::reference_distributions(), m.trial, 3);
    auto d = generous(p, m);
    d.production.setZero();
    const auto tr = rollout(d, p, m);
    EXPECT_EQ(tr.verdict, Verdict::shortage);
    ASSERT_TRUE(tr.first_shortage.has_value());
    EXPECT_EQ(tr.first_shortage->week, 1);
    EXPECT_EQ(tr.shortage_weeks, std::vector<int>{1});
}

TEST(Rollout, AmpleSupplyEndsTauWeeksAfterTargetReached) {
    const auto m = fixtures::reference_model();
    const auto d = fixtures::reference_distributions();
    for (Seed seed = 0; seed < 5; ++seed) {
        const auto p = generate_path(d, m.trial, seed);
        const auto tr = rollout(generous(p, m), p, m);
        ASSERT_TRUE(tr.feasible());
        const StatusTrack st = compute_status(p, m.trial);
        int reached = 0;
        for (int t = 1; t <= m.horizon() && reached == 0; ++t)
            if (st.total_off_treatment(t) >= p.D(t)) reached = t;
        EXPECT_EQ(tr.end_week, reached + 2);
        for (int s = 0; s < m.sites(); ++s) EXPECT_TRUE(tr.site_inventory[s].col(tr.end_week - 1).isZero(0.0));
    }
}

TEST(Rollout, MassBalanceDcAndLeadTime) {
    const auto m = fixtures::reference_model();
    const auto dists = fixtures::reference_distributions();
    for (Seed seed = 100; seed < 110; ++seed) {
        const auto p = generate_path(dists, m.trial, seed);
        const auto tr = rollout(generous(p, m), p, m);
        ASSERT_TRUE(tr.feasible());
        EXPECT_LE(mass_balance_error(tr, m.trial.lead_time), 1e-9);
        EXPECT_GE(tr.dc_inventory.leftCols(tr.last_week).minCoeff(), 0.0);
    }
}

TEST(Rollout, ShipmentsArriveAfterLeadTime) {
    auto m = fixtures::reference_model();
    m.trial.lead_time = 3;
    const auto p = generate_path(fixtures::reference_distributions(), m.trial, 8);
    const auto d = generous(p, m);
    const auto tr = rollout(d, p, m);
    ASSERT_TRUE(tr.feasible());
    for (int s = 0; s < m.sites(); ++s) {
        // Without arrivals the stock falls by exactly the consumption.
        for (int t = 1; t <= 3; ++t) {
            const Eigen::VectorXd before = t == 1 ? Eigen::VectorXd(tr.pre_shipment.row(s).transpose())
                                                  : Eigen::VectorXd(tr.site_inventory[s].col(t - 2));
            EXPECT_TRUE(tr.site_inventory[s].col(t - 1).isApprox(before - tr.consumption.by_site[s].col(t - 1)));
        }
    }
    EXPECT_LE(mass_balance_error(tr, 3), 1e-9);
}

TEST(Rollout, ShortageToleranceAgreesUpToFirstShortage) {
    const auto m = fixtures::reference_model();
    const auto dists = fixtures::reference_distributions();
    int checked = 0;
    for (Seed seed = 0; seed < 10; ++seed) {
        const auto p = generate_path(dists, m.trial, seed);
        const auto ctx = ScenarioContext::build(p, m.trial);
        const auto d = expand_planning({1.5, 2.0, 3.0}, ctx.field, ctx.status.enrollment_open);
        const auto strict = rollout(d, p, m, 0, nullptr, false);
        const auto loose = rollout(d, p, m, 0, nullptr, true);
        if (strict.feasible()) continue;
        ++checked;
        const int w = strict.first_shortage->week;
        EXPECT_EQ(loose.first_shortage, strict.first_shortage);
        for (int s = 0; s < m.sites(); ++s) {
            EXPECT_EQ(loose.site_inventory[s].leftCols(w), strict.site_inventory[s].leftCols(w));
            EXPECT_EQ(loose.shipments[s].leftCols(w - 1), strict.shipments[s].leftCols(w - 1));
        }
        EXPECT_EQ(loose.dc_inventory.leftCols(w - 1), strict.dc_inventory.leftCols(w - 1));
        EXPECT_GT(loose.last_week, w);
    }
    EXPECT_GT(checked, 0);
}

TEST(Rollout, ResumingFromCarryInMatchesFullRun) {
    const auto m = fixtures::reference_model();
    const auto p = generate_path(fixtures::reference_distributions(), m.trial, 21);
    const auto d = generous(p, m);
    const auto full = rollout(d, p, m);
    ASSERT_TRUE(full.feasible());
    for (int k : {1, 4, 17, 40}) {
        const auto resumed = rollout(d, p, m, k, &full);
        EXPECT_EQ(resumed.last_week, full.last_week);
        EXPECT_EQ(resumed.end_week, full.end_week);
        EXPECT_EQ(resumed.dc_inventory, full.dc_inventory);
        for (int s = 0; s < m.sites(); ++s) {
            EXPECT_EQ(resumed.site_inventory[s], full.site_inventory[s]);
            EXPECT_EQ(resumed.shipments[s], full.shipments[s]);
        }
        EXPECT_EQ(resumed.boxes, full.boxes);
    }
}

TEST(Rollout, StateReconstruction) {
    const auto m = fixtures::reference_model();
    const auto p = generate_path(fixtures::reference_distributions(), m.trial, 4);
    const auto d = generous(p, m);
    const auto tr = rollout(d, p, m);
    const StatusTrack st = compute_status(p, m.trial);
    const ConsumptionField field = estimate_consumption(p, st.enrollment_open, m.trial);
    Eigen::MatrixXd pre;
    Eigen::VectorXi boxes;
    SupplyState state = start_supply(d, m, pre, boxes);
    for (int t = 1; t <= 30; ++t) {
        advance_week(state, week_inputs(st, field, m.trial, t), d, m, {});
        EXPECT_TRUE(state == state_from_trajectory(tr, m, t)) << "week " << t;
    }
}

TEST(Rollout, CapacityViolationIsInfeasible) {
    auto m = fixtures::reference_model();
    m.logistics.site_capacity.setConstant(200.0);
    const auto p = generate_path(fixtures::reference_distributions(), m.trial, 4);
    const auto tr = rollout(generous(p, m), p, m);
    EXPECT_EQ(tr.verdict, Verdict::capacity);
    ASSERT_TRUE(tr.capacity_violation.has_value());
    EXPECT_EQ(tr.capacity_violation->week, 0);
}

TEST(CheckDecisions, Rules) {
    const auto m = fixtures::reference_model();
    DecisionVars d{Eigen::VectorXd::Constant(3, 100), Eigen::MatrixXd::Constant(5, 3, 10),
                   Eigen::MatrixXd::Constant(5, 3, 20)};
    EXPECT_TRUE(check_decisions(d, m).empty());
    d.trigger(2, 1) = 20;
    d.ceiling(4, 0) = 2000;
    EXPECT_EQ(check_decisions(d, m).size(), 2u);
}
