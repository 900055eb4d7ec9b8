#pragma once

#include "trialsupply/core_model.hpp"
#include "trialsupply/scenario.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace trialsupply {

/// Expected doses consumed, one treatments x weeks block per site.
struct ConsumptionField {
    std::vector<Eigen::MatrixXd> by_site;

    int sites() const { return static_cast<int>(by_site.size()); }
    int treatments() const { return by_site.empty() ? 0 : static_cast<int>(by_site.front().rows()); }
    int weeks() const { return by_site.empty() ? 0 : static_cast<int>(by_site.front().cols()); }

    double operator()(int site, int treatment, int week) const { return by_site[site](treatment, week - 1); }

    /// sites x treatments slice for one week.
    Eigen::MatrixXd week(int t) const;
};

/// Binary weekly status sequence, index t-1 holds week t.
using StatusSequence = Eigen::VectorXi;

/// Expected consumption of every cohort still on treatment:
///   d(s,i,t) = sum_{j=0}^{min(t-1,tau)} gamma(i,t-j) delta(t-j) n(s,t-j) prod_{m<j} (1 - alpha(s,t-m)).
/// At week 1 only the current cohort contributes. Covers min(path weeks, delta length) weeks.
ConsumptionField estimate_consumption(const ScenarioPath& path, const StatusSequence& delta,
                                      const TrialConfig& config);

/// Sum over sites and weeks, per treatment.
Eigen::VectorXd total_by_treatment(const ConsumptionField& field);

class NoOpenWeeks : public std::domain_error {
  public:
    NoOpenWeeks() : std::domain_error("no open weeks") {}
};

/// sites x treatments average weekly consumption over weeks after `from_week`,
/// normalized by the number of open-enrollment weeks in the same range.
/// Throws NoOpenWeeks when that count is zero.
Eigen::MatrixXd average_by_site_treatment(const ConsumptionField& field, const StatusSequence& delta,
                                          int from_week = 0);

}  // namespace trialsupply
