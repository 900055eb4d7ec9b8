#pragma once

#include "trialsupply/core_model.hpp"
#include "trialsupply/random.hpp"

#include <Eigen/Dense>

namespace trialsupply {

/// Generating distributions of the four stochastic input sequences.
struct ScenarioDistributions {
    double enrollment_mean = 6.0;      // Poisson mean per site per week
    double dropout_mean = 0.0;         // mean weekly dropout rate (triangular)
    double initial_target = 1000.0;    // patients
    double interim_bump_lo = 0.0;      // relative target increase at interim weeks
    double interim_bump_hi = 0.0;
    Eigen::VectorXd consumption_means; // doses per patient-week, per treatment
    double consumption_total = 0.0;    // fixed sum of the per-treatment rates
    double consumption_spread = 0.2;   // relative half-width of the per-treatment uniform

    bool operator==(const ScenarioDistributions& o) const;
};

/// Weekly dropout mean that leaves `retained` of a cohort after `weeks` weeks.
double dropout_mean_for(int weeks, double retained = 0.7);

ValidationReport validate_distributions(const ScenarioDistributions& dists, const TrialConfig& config);

/// One realization of the stochastic inputs. Column t-1 holds week t.
struct ScenarioPath {
    Eigen::MatrixXd enrollment;        // sites x weeks, non-negative integers
    Eigen::MatrixXd dropout;           // sites x weeks, in [0, 1)
    Eigen::VectorXd target;            // weeks
    Eigen::MatrixXd consumption_rate;  // treatments x weeks

    int weeks() const { return static_cast<int>(target.size()); }
    int sites() const { return static_cast<int>(enrollment.rows()); }
    int treatments() const { return static_cast<int>(consumption_rate.rows()); }

    double n(int site, int week) const { return enrollment(site, week - 1); }
    double alpha(int site, int week) const { return dropout(site, week - 1); }
    double D(int week) const { return target[week - 1]; }
    double gamma(int treatment, int week) const { return consumption_rate(treatment, week - 1); }

    /// Weeks 1..t of this path.
    ScenarioPath prefix(int t) const;

    bool operator==(const ScenarioPath& o) const;
};

ScenarioPath empty_path(const TrialConfig& config, int weeks);

/// Full-horizon path. One independent stream per site, plus one each for
/// the target size and the consumption rates.
ScenarioPath generate_path(const ScenarioDistributions& dists, const TrialConfig& config, Seed seed);

/// Keeps weeks 1..t_star of `observed` and simulates weeks t_star+1..horizon.
/// Throws std::invalid_argument if `observed` does not cover exactly t_star weeks.
ScenarioPath generate_suffix(const ScenarioDistributions& dists, const TrialConfig& config, int t_star,
                             const ScenarioPath& observed, Seed seed);

/// Draws one weekly dropout rate from the symmetric triangular distribution
/// with the given mean.
double sample_dropout(double mean, Engine& eng);

/// Draws per-treatment rates around their means, rescaled to the fixed total.
Eigen::VectorXd sample_consumption_rates(const ScenarioDistributions& dists, Engine& eng);

/// Two-sided exact Poisson test p-value for observing `count` events when
/// `expected` are expected: min(1, 2 min(P[X <= count], P[X >= count])).
double poisson_test_p_value(long long count, double expected);

/// Regularized upper incomplete gamma Q(a, x).
double regularized_gamma_q(double a, double x);

/// Replaces the enrollment mean with the sample mean when the exact Poisson
/// test on the pooled count rejects at `significance`; otherwise returns
/// `dists` unchanged. `observed_enrollment` is sites x observed weeks.
ScenarioDistributions reestimate(const ScenarioDistributions& dists, const Eigen::MatrixXd& observed_enrollment,
                                 double significance);

}  // namespace trialsupply
