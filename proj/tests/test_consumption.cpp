#include "fixtures.hpp"
#include "oracles.hpp"

#include "trialsupply/consumption.hpp"

#include <gtest/gtest.h>

using namespace trialsupply;

namespace {

TrialConfig one_by_one(int weeks, int tau) {
    TrialConfig c;
    c.treatments = 1;
    c.sites = 1;
    c.horizon = weeks;
    c.treatment_duration = tau;
    return c;
}

ScenarioPath flat_path(int weeks, double n, double alpha) {
    ScenarioPath p;
    p.enrollment = Eigen::MatrixXd::Constant(1, weeks, n);
    p.dropout = Eigen::MatrixXd::Constant(1, weeks, alpha);
    p.target = Eigen::VectorXd::Constant(weeks, 1e9);
    p.consumption_rate = Eigen::MatrixXd::Constant(1, weeks, 1.0);
    return p;
}

}  // namespace

TEST(EstimateConsumption, CohortsAttenuateWithDropout) {
    const auto c = one_by_one(3, 2);
    const auto f = estimate_consumption(flat_path(3, 10, 0.1), StatusSequence::Ones(3), c);
    EXPECT_NEAR(f(0, 0, 1), 10.0, 1e-12);
    EXPECT_NEAR(f(0, 0, 2), 19.0, 1e-12);
    EXPECT_NEAR(f(0, 0, 3), 27.1, 1e-12);
    EXPECT_NEAR(total_by_treatment(f)[0], 56.1, 1e-12);
}

TEST(EstimateConsumption, NoPatientsNoConsumption) {
    const auto c = one_by_one(6, 2);
    EXPECT_TRUE(estimate_consumption(flat_path(6, 0, 0.1), StatusSequence::Ones(6), c).by_site[0].isZero(0.0));
}

TEST(EstimateConsumption, SingleCohortConsumesForTauPlusOneWeeks) {
    const auto c = one_by_one(6, 2);
    auto p = flat_path(6, 10, 0.0);
    p.consumption_rate << 1.5, 2.0, 2.5, 3.0, 3.5, 4.0;
    StatusSequence delta = StatusSequence::Zero(6);
    delta[0] = 1;
    const auto f = estimate_consumption(p, delta, c);
    // The week-1 cohort keeps its enrollment-week rate.
    const Eigen::VectorXd want = (Eigen::VectorXd(6) << 15, 15, 15, 0, 0, 0).finished();
    EXPECT_TRUE(f.by_site[0].row(0).transpose().isApprox(want, 1e-12)) << f.by_site[0];
}

TEST(EstimateConsumption, DimensionMismatchThrows) {
    auto c = one_by_one(3, 2);
    c.sites = 2;
    EXPECT_THROW(estimate_consumption(flat_path(3, 1, 0), StatusSequence::Ones(3), c), std::invalid_argument);
}

TEST(EstimateConsumption, MatchesCohortOracleOnRandomInstances) {
    Engine eng = make_engine(2024);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const auto inst = oracles::random_instance(eng);
        const auto f = estimate_consumption(inst.path, inst.delta, inst.config);
        const auto want = oracles::cohort_consumption(inst.path, inst.delta, inst.config.treatment_duration);
        for (int s = 0; s < inst.config.sites; ++s) {
            const double scale = std::max(1.0, want[s].cwiseAbs().maxCoeff());
            worst = std::max(worst, (f.by_site[s] - want[s]).cwiseAbs().maxCoeff() / scale);
        }
    }
    EXPECT_LE(worst, 1e-9);
}

TEST(EstimateConsumption, MonotoneInEnrollment) {
    Engine eng = make_engine(77);
    for (int k = 0; k < 50; ++k) {
        auto inst = oracles::random_instance(eng);
        const auto base = estimate_consumption(inst.path, inst.delta, inst.config);
        const int s = static_cast<int>(uniform01(eng) * inst.config.sites);
        const int t = 1 + static_cast<int>(uniform01(eng) * inst.config.horizon);
        inst.path.enrollment(s, t - 1) += 3.0;
        const auto bumped = estimate_consumption(inst.path, inst.delta, inst.config);
        for (int ss = 0; ss < inst.config.sites; ++ss)
            EXPECT_TRUE((bumped.by_site[ss].array() >= base.by_site[ss].array() - 1e-12).all());
    }
}

TEST(EstimateConsumption, DependsOnlyOnRecentWeeks) {
    Engine eng = make_engine(78);
    for (int k = 0; k < 50; ++k) {
        auto inst = oracles::random_instance(eng);
        const int tau = inst.config.treatment_duration;
        const auto base = estimate_consumption(inst.path, inst.delta, inst.config);
        const int t = 1 + static_cast<int>(uniform01(eng) * inst.config.horizon);
        inst.path.enrollment.col(t - 1).array() += 4.0;
        inst.path.dropout.col(t - 1).array() *= 0.5;
        inst.path.consumption_rate.col(t - 1).array() += 0.25;
        const auto moved = estimate_consumption(inst.path, inst.delta, inst.config);
        for (int s = 0; s < inst.config.sites; ++s) {
            for (int w = 1; w <= inst.config.horizon; ++w) {
                if (w >= t && w <= t + tau) continue;
                EXPECT_EQ(moved.by_site[s].col(w - 1), base.by_site[s].col(w - 1)) << "week " << w;
            }
        }
    }
}

TEST(Aggregates, TotalsAreLinearInSites) {
    auto c = one_by_one(3, 2);
    auto one = flat_path(3, 10, 0.1);
    const double single = total_by_treatment(estimate_consumption(one, StatusSequence::Ones(3), c))[0];
    c.sites = 2;
    ScenarioPath two = one;
    two.enrollment = Eigen::MatrixXd::Constant(2, 3, 10);
    two.dropout = Eigen::MatrixXd::Constant(2, 3, 0.1);
    EXPECT_NEAR(total_by_treatment(estimate_consumption(two, StatusSequence::Ones(3), c))[0], 2 * single, 1e-12);
}

TEST(Aggregates, AverageOverOpenWeeks) {
    const auto c = one_by_one(3, 2);
    const auto f = estimate_consumption(flat_path(3, 10, 0.1), StatusSequence::Ones(3), c);
    EXPECT_NEAR(average_by_site_treatment(f, StatusSequence::Ones(3), 0)(0, 0), 18.7, 1e-12);
    EXPECT_NEAR(average_by_site_treatment(f, StatusSequence::Ones(3), 1)(0, 0), 23.05, 1e-12);
    const StatusSequence first_only = (StatusSequence(3) << 1, 0, 0).finished();
    EXPECT_NEAR(average_by_site_treatment(f, first_only, 0)(0, 0), 56.1, 1e-12);
    EXPECT_THROW(average_by_site_treatment(f, first_only, 1), NoOpenWeeks);
}
