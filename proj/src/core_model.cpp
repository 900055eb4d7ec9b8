#include "trialsupply/core_model.hpp"

#include <algorithm>
#include <sstream>

namespace trialsupply {

namespace {

bool contains(const std::vector<int>& sorted, int week) {
    return std::binary_search(sorted.begin(), sorted.end(), week);
}

template <typename T>
std::string str(const T& v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

class Checker {
  public:
    explicit Checker(ValidationReport& r) : report_(r) {}

    void error(std::string field, std::string value, std::string rule) {
        report_.errors.push_back({std::move(field), std::move(value), std::move(rule)});
    }
    void warning(std::string field, std::string value, std::string rule) {
        report_.warnings.push_back({std::move(field), std::move(value), std::move(rule)});
    }

    void positive(const std::string& field, int v) {
        if (v < 1) error(field, str(v), field + " must be >= 1");
    }

    void sizes(const std::string& field, Eigen::Index got, Eigen::Index want, const char* of) {
        if (got != want)
            error(field, str(got) + " entries", std::string("length must equal ") + of + " (" + str(want) + ")");
    }

    void non_negative(const std::string& field, const Eigen::MatrixXd& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            if (!(m.data()[i] >= 0.0)) {
                error(field, str(m.data()[i]), field + " must be >= 0");
                return;
            }
        }
    }

    void time_set(const std::string& field, const std::vector<int>& weeks, int horizon) {
        for (std::size_t k = 0; k < weeks.size(); ++k) {
            if (weeks[k] < 1 || weeks[k] > horizon) {
                error(field, str(weeks[k]), field + " must lie within 1..horizon");
                return;
            }
            if (k > 0 && weeks[k] <= weeks[k - 1]) {
                error(field, str(weeks[k]), field + " must be strictly increasing");
                return;
            }
        }
    }

  private:
    ValidationReport& report_;
};

}  // namespace

bool TrialConfig::is_interim(int week) const { return contains(interim_times, week); }
bool TrialConfig::is_resupply(int week) const { return contains(resupply_times, week); }
bool TrialConfig::is_optimization(int week) const { return contains(optimization_times, week); }

bool CostParams::operator==(const CostParams& o) const {
    return same(production_cost, o.production_cost) && same(recruitment_cost, o.recruitment_cost) &&
           same(shipping_cost, o.shipping_cost) && dc_holding_cost == o.dc_holding_cost &&
           same(site_holding_cost, o.site_holding_cost) && same(disposal_cost, o.disposal_cost) &&
           shortage_penalty == o.shortage_penalty;
}

bool LogisticsParams::operator==(const LogisticsParams& o) const {
    return dose_volume == o.dose_volume && box_capacity == o.box_capacity && same(site_capacity, o.site_capacity);
}

std::string ValidationIssue::to_string() const { return field + " = " + value + ": " + rule; }

std::string ValidationReport::summary() const {
    std::ostringstream os;
    for (const auto& e : errors) os << "error: " << e.to_string() << '\n';
    for (const auto& w : warnings) os << "warning: " << w.to_string() << '\n';
    return os.str();
}

ConfigError::ConfigError(ValidationReport report)
    : std::runtime_error("invalid configuration:\n" + report.summary()), report_(std::move(report)) {}

ValidationReport validate_config(const SupplyModel& model) {
    ValidationReport report;
    Checker check(report);
    const auto& t = model.trial;
    const auto& c = model.costs;
    const auto& l = model.logistics;

    check.positive("treatments", t.treatments);
    check.positive("sites", t.sites);
    check.positive("horizon", t.horizon);
    check.positive("treatment_duration", t.treatment_duration);
    check.positive("lead_time", t.lead_time);
    check.time_set("interim_times", t.interim_times, t.horizon);
    check.time_set("resupply_times", t.resupply_times, t.horizon);
    check.time_set("optimization_times", t.optimization_times, t.horizon);

    const Eigen::Index I = std::max(t.treatments, 0);
    const Eigen::Index S = std::max(t.sites, 0);
    check.sizes("production_cost", c.production_cost.size(), I, "treatments");
    check.sizes("recruitment_cost", c.recruitment_cost.size(), S, "sites");
    check.sizes("shipping_cost", c.shipping_cost.size(), S, "sites");
    check.sizes("site_holding_cost", c.site_holding_cost.size(), S, "sites");
    check.sizes("site_capacity", l.site_capacity.size(), S, "sites");
    if (c.disposal_cost.rows() != S || c.disposal_cost.cols() != I) {
        check.error("disposal_cost", str(c.disposal_cost.rows()) + "x" + str(c.disposal_cost.cols()),
                    "shape must be sites x treatments");
    }

    check.non_negative("production_cost", c.production_cost);
    check.non_negative("recruitment_cost", c.recruitment_cost);
    check.non_negative("shipping_cost", c.shipping_cost);
    check.non_negative("site_holding_cost", c.site_holding_cost);
    check.non_negative("disposal_cost", c.disposal_cost);
    if (!(c.dc_holding_cost >= 0.0)) check.error("dc_holding_cost", str(c.dc_holding_cost), "dc_holding_cost must be >= 0");
    if (!(c.shortage_penalty >= 0.0))
        check.error("shortage_penalty", str(c.shortage_penalty), "shortage_penalty must be >= 0");

    for (Eigen::Index s = 0; s < c.site_holding_cost.size(); ++s) {
        if (!(c.site_holding_cost[s] > c.dc_holding_cost)) {
            check.warning("site_holding_cost[" + str(s + 1) + "]", str(c.site_holding_cost[s]),
                          "site holding cost should exceed dc_holding_cost (" + str(c.dc_holding_cost) + ")");
        }
    }

    if (!(l.dose_volume > 0.0)) check.error("dose_volume", str(l.dose_volume), "dose_volume must be > 0");
    if (!(l.box_capacity >= l.dose_volume))
        check.error("box_capacity", str(l.box_capacity), "box_capacity must be >= dose_volume");
    for (Eigen::Index s = 0; s < l.site_capacity.size(); ++s) {
        if (!(l.site_capacity[s] >= l.box_capacity)) {
            check.error("site_capacity[" + str(s + 1) + "]", str(l.site_capacity[s]),
                        "site_capacity must be >= box_capacity");
        }
    }
    return report;
}

const SupplyModel& require_valid(const SupplyModel& model) {
    auto report = validate_config(model);
    if (!report.ok()) throw ConfigError(std::move(report));
    return model;
}

std::vector<int> every_n_weeks(int start, int every, int last) {
    std::vector<int> weeks;
    if (every < 1) return weeks;
    for (int w = start; w <= last; w += every) weeks.push_back(w);
    return weeks;
}

}  // namespace trialsupply
