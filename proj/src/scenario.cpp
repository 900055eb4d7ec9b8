#include "trialsupply/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace trialsupply {

namespace {

constexpr double kRoundingSlack = 1e-9;

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

// Series for the regularized lower incomplete gamma; converges for x < a + 1.
double gamma_p_series(double a, double x) {
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 1; n < 100000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for the upper incomplete gamma; x >= a + 1.
double gamma_q_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 100000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double regularized_gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_fraction(a, x);
}

void simulate_weeks(const ScenarioDistributions& dists, const TrialConfig& config, int first_week, Seed seed,
                    ScenarioPath& path) {
    const int T = config.horizon;
    const int S = config.sites;

    for (int s = 0; s < S; ++s) {
        Engine eng = make_engine(derive_seed(seed, "site", static_cast<std::uint64_t>(s)));
        std::poisson_distribution<long> arrivals(dists.enrollment_mean);
        for (int t = first_week; t <= T; ++t) {
            path.enrollment(s, t - 1) = static_cast<double>(arrivals(eng));
            path.dropout(s, t - 1) = sample_dropout(dists.dropout_mean, eng);
        }
    }

    Engine target_eng = make_engine(derive_seed(seed, "target"));
    Engine rate_eng = make_engine(derive_seed(seed, "consumption"));
    for (int t = first_week; t <= T; ++t) {
        if (t == 1) {
            path.target[0] = dists.initial_target;
        } else if (config.is_interim(t)) {
            const double bump = uniform(target_eng, dists.interim_bump_lo, dists.interim_bump_hi);
            path.target[t - 1] = std::ceil(path.target[t - 2] * (1.0 + bump) - kRoundingSlack);
        } else {
            path.target[t - 1] = path.target[t - 2];
        }

        if (t == 1 || config.is_interim(t)) {
            path.consumption_rate.col(t - 1) = sample_consumption_rates(dists, rate_eng);
        } else {
            path.consumption_rate.col(t - 1) = path.consumption_rate.col(t - 2);
        }
    }
}

}  // namespace

bool ScenarioDistributions::operator==(const ScenarioDistributions& o) const {
    return enrollment_mean == o.enrollment_mean && dropout_mean == o.dropout_mean &&
           initial_target == o.initial_target && interim_bump_lo == o.interim_bump_lo &&
           interim_bump_hi == o.interim_bump_hi && same(consumption_means, o.consumption_means) &&
           consumption_total == o.consumption_total && consumption_spread == o.consumption_spread;
}

double dropout_mean_for(int weeks, double retained) { return 1.0 - std::pow(retained, 1.0 / weeks); }

ValidationReport validate_distributions(const ScenarioDistributions& d, const TrialConfig& config) {
    ValidationReport report;
    auto err = [&](std::string field, double v, std::string rule) {
        std::ostringstream os;
        os << v;
        report.errors.push_back({std::move(field), os.str(), std::move(rule)});
    };
    if (!(d.enrollment_mean > 0.0)) err("enrollment_mean", d.enrollment_mean, "enrollment_mean must be > 0");
    if (!(d.dropout_mean >= 0.0 && d.dropout_mean < 1.0))
        err("dropout_mean", d.dropout_mean, "dropout_mean must lie in [0, 1)");
    if (!(d.initial_target > 0.0)) err("initial_target", d.initial_target, "initial_target must be > 0");
    if (!(d.interim_bump_lo <= d.interim_bump_hi))
        err("interim_bump_range", d.interim_bump_lo, "lower bound must not exceed upper bound");
    if (!(d.interim_bump_lo >= 0.0))
        err("interim_bump_range", d.interim_bump_lo, "target size may only increase");
    if (d.consumption_means.size() != config.treatments) {
        err("consumption_means", static_cast<double>(d.consumption_means.size()),
            "length must equal treatments");
    } else {
        if ((d.consumption_means.array() < 0.0).any())
            err("consumption_means", d.consumption_means.minCoeff(), "consumption_means must be >= 0");
        const double sum = d.consumption_means.sum();
        if (std::abs(sum - d.consumption_total) > 1e-9 * std::max(1.0, d.consumption_total))
            err("consumption_total", d.consumption_total, "consumption_means must sum to consumption_total");
    }
    if (!(d.consumption_spread >= 0.0 && d.consumption_spread <= 1.0))
        err("consumption_spread", d.consumption_spread, "consumption_spread must lie in [0, 1]");
    return report;
}

ScenarioPath ScenarioPath::prefix(int t) const {
    ScenarioPath p;
    p.enrollment = enrollment.leftCols(t);
    p.dropout = dropout.leftCols(t);
    p.target = target.head(t);
    p.consumption_rate = consumption_rate.leftCols(t);
    return p;
}

bool ScenarioPath::operator==(const ScenarioPath& o) const {
    return same(enrollment, o.enrollment) && same(dropout, o.dropout) && same(target, o.target) &&
           same(consumption_rate, o.consumption_rate);
}

ScenarioPath empty_path(const TrialConfig& config, int weeks) {
    ScenarioPath p;
    p.enrollment = Eigen::MatrixXd::Zero(config.sites, weeks);
    p.dropout = Eigen::MatrixXd::Zero(config.sites, weeks);
    p.target = Eigen::VectorXd::Zero(weeks);
    p.consumption_rate = Eigen::MatrixXd::Zero(config.treatments, weeks);
    return p;
}

double sample_dropout(double mean, Engine& eng) {
    const double half_width = std::min(mean, 1.0 - mean);
    const double u = uniform01(eng);
    if (half_width <= 0.0) return mean;
    // Inverse CDF of the symmetric triangle on [mean - h, mean + h].
    double x = u < 0.5 ? mean - half_width + half_width * std::sqrt(2.0 * u)
                       : mean + half_width - half_width * std::sqrt(2.0 * (1.0 - u));
    return std::min(std::max(x, 0.0), std::nextafter(1.0, 0.0));
}

Eigen::VectorXd sample_consumption_rates(const ScenarioDistributions& d, Engine& eng) {
    const Eigen::Index n = d.consumption_means.size();
    Eigen::VectorXd rates(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = d.consumption_means[i];
        rates[i] = uniform(eng, m * (1.0 - d.consumption_spread), m * (1.0 + d.consumption_spread));
    }
    const double sum = rates.sum();
    if (sum > 0.0) rates *= d.consumption_total / sum;
    return rates;
}

ScenarioPath generate_path(const ScenarioDistributions& dists, const TrialConfig& config, Seed seed) {
    ScenarioPath path = empty_path(config, config.horizon);
    simulate_weeks(dists, config, 1, seed, path);
    return path;
}

ScenarioPath generate_suffix(const ScenarioDistributions& dists, const TrialConfig& config, int t_star,
                             const ScenarioPath& observed, Seed seed) {
    if (t_star < 0 || t_star > config.horizon || observed.weeks() != t_star) {
        throw std::invalid_argument("observed prefix covers " + std::to_string(observed.weeks()) +
                                    " weeks, expected " + std::to_string(t_star));
    }
    ScenarioPath path = empty_path(config, config.horizon);
    if (t_star > 0) {
        path.enrollment.leftCols(t_star) = observed.enrollment;
        path.dropout.leftCols(t_star) = observed.dropout;
        path.target.head(t_star) = observed.target;
        path.consumption_rate.leftCols(t_star) = observed.consumption_rate;
    }
    simulate_weeks(dists, config, t_star + 1, seed, path);
    return path;
}

double regularized_gamma_q(double a, double x) {
    if (x <= 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_fraction(a, x);
}

double poisson_test_p_value(long long count, double expected) {
    if (expected <= 0.0) return count == 0 ? 1.0 : 0.0;
    const double k = static_cast<double>(count);
    const double lower = regularized_gamma_q(k + 1.0, expected);              // P[X <= k]
    const double upper = count == 0 ? 1.0 : regularized_gamma_p(k, expected);  // P[X >= k]
    return std::min(1.0, 2.0 * std::min(lower, upper));
}

ScenarioDistributions reestimate(const ScenarioDistributions& dists, const Eigen::MatrixXd& observed_enrollment,
                                 double significance) {
    const auto exposures = observed_enrollment.size();
    if (exposures == 0) return dists;
    const double total = observed_enrollment.sum();
    const double p = poisson_test_p_value(std::llround(total), dists.enrollment_mean * static_cast<double>(exposures));
    if (p >= significance) return dists;
    ScenarioDistributions updated = dists;
    updated.enrollment_mean = std::max(total / static_cast<double>(exposures), 1e-6);
    return updated;
}

}  // namespace trialsupply
