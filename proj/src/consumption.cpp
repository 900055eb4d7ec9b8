#include "trialsupply/consumption.hpp"

#include <algorithm>
#include <string>

namespace trialsupply {

Eigen::MatrixXd ConsumptionField::week(int t) const {
    Eigen::MatrixXd slice(sites(), treatments());
    for (int s = 0; s < sites(); ++s) slice.row(s) = by_site[s].col(t - 1).transpose();
    return slice;
}

ConsumptionField estimate_consumption(const ScenarioPath& path, const StatusSequence& delta,
                                      const TrialConfig& config) {
    if (path.sites() != config.sites || path.treatments() != config.treatments) {
        throw std::invalid_argument("scenario path has " + std::to_string(path.sites()) + " sites and " +
                                    std::to_string(path.treatments()) + " treatments; configuration expects " +
                                    std::to_string(config.sites) + " and " + std::to_string(config.treatments));
    }
    const int T = std::min(path.weeks(), static_cast<int>(delta.size()));
    const int tau = config.treatment_duration;

    ConsumptionField field;
    field.by_site.assign(config.sites, Eigen::MatrixXd::Zero(config.treatments, T));
    for (int s = 0; s < config.sites; ++s) {
        auto& d = field.by_site[s];
        for (int t = 1; t <= T; ++t) {
            double survival = 1.0;
            const int ages = std::min(t - 1, tau);
            for (int j = 0; j <= ages; ++j) {
                if (j > 0) survival *= 1.0 - path.alpha(s, t - j + 1);
                const int cohort = t - j;
                const double patients = delta[cohort - 1] * path.n(s, cohort) * survival;
                if (patients != 0.0) d.col(t - 1) += patients * path.consumption_rate.col(cohort - 1);
            }
        }
    }
    return field;
}

Eigen::VectorXd total_by_treatment(const ConsumptionField& field) {
    Eigen::VectorXd total = Eigen::VectorXd::Zero(field.treatments());
    for (const auto& d : field.by_site) total += d.rowwise().sum();
    return total;
}

Eigen::MatrixXd average_by_site_treatment(const ConsumptionField& field, const StatusSequence& delta,
                                          int from_week) {
    const int T = std::min(field.weeks(), static_cast<int>(delta.size()));
    const int first = std::max(from_week, 0);
    const int span = std::max(T - first, 0);
    const double open_weeks = span > 0 ? static_cast<double>(delta.segment(first, span).sum()) : 0.0;
    if (open_weeks <= 0.0) throw NoOpenWeeks();

    Eigen::MatrixXd avg(field.sites(), field.treatments());
    for (int s = 0; s < field.sites(); ++s) {
        avg.row(s) = field.by_site[s].middleCols(first, span).rowwise().sum().transpose() / open_weeks;
    }
    return avg;
}

}  // namespace trialsupply
