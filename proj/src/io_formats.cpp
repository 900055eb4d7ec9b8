#include "trialsupply/io_formats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace trialsupply {

namespace {

std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

[[noreturn]] void fail(const std::string& field, const std::string& message) { throw FormatError(field, message); }

/// Object view that remembers which keys were read and rejects the rest.
class Fields {
  public:
    Fields(const Json& j, std::string path, std::vector<std::string>& defaulted)
        : j_(j), path_(std::move(path)), defaulted_(defaulted) {
        if (!j_.is_object()) fail(path_.empty() ? "(document)" : path_, "expected an object");
    }

    const Json& required(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) fail(join_path(path_, key), "missing required field");
        return *it;
    }

    const Json* optional(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) {
            defaulted_.push_back(join_path(path_, key));
            return nullptr;
        }
        return &*it;
    }

    std::string path(const std::string& key) const { return join_path(path_, key); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(join_path(path_, it.key()), "unknown field");
    }

  private:
    const Json& j_;
    std::string path_;
    std::vector<std::string>& defaulted_;
    std::set<std::string> seen_;
};

double number(const Json& j, const std::string& field) {
    if (!j.is_number()) fail(field, "expected a number");
    return j.get<double>();
}

int integer(const Json& j, const std::string& field) {
    if (!j.is_number_integer()) fail(field, "expected an integer");
    const auto v = j.get<long long>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) fail(field, "out of range");
    return static_cast<int>(v);
}

bool boolean(const Json& j, const std::string& field) {
    if (!j.is_boolean()) fail(field, "expected true or false");
    return j.get<bool>();
}

Eigen::VectorXd broadcast(const Json& j, Eigen::Index n, const std::string& field) {
    if (j.is_number()) return Eigen::VectorXd::Constant(n, j.get<double>());
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
        fail(field, "expected a number or an array of " + std::to_string(n) + " numbers");
    Eigen::VectorXd v(n);
    for (Eigen::Index k = 0; k < n; ++k) v[k] = number(j[static_cast<std::size_t>(k)], field);
    return v;
}

Eigen::VectorXd vector(const Json& j, const std::string& field) {
    if (!j.is_array()) fail(field, "expected an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = number(j[k], field);
    return v;
}

/// Scalar, one entry per row (each a scalar or a full row), rows x cols.
Eigen::MatrixXd broadcast_matrix(const Json& j, Eigen::Index rows, Eigen::Index cols, const std::string& field) {
    if (j.is_number()) return Eigen::MatrixXd::Constant(rows, cols, j.get<double>());
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        fail(field, "expected a number or an array of " + std::to_string(rows) + " rows");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        m.row(r) = broadcast(j[static_cast<std::size_t>(r)], cols, field).transpose();
    return m;
}

Eigen::MatrixXd matrix(const Json& j, Eigen::Index rows, Eigen::Index cols, const std::string& field) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        fail(field, "expected " + std::to_string(rows) + " rows");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            fail(field, "expected rows of " + std::to_string(cols) + " numbers");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(row[static_cast<std::size_t>(c)], field);
    }
    return m;
}

std::vector<int> time_set(const Json& j, int horizon, const std::string& field, std::vector<std::string>& defaulted) {
    if (j.is_array()) {
        std::vector<int> out;
        for (const auto& e : j) out.push_back(integer(e, field));
        return out;
    }
    if (!j.is_object()) fail(field, "expected an array of weeks or {\"start\", \"every\"}");
    Fields f(j, field, defaulted);
    const int start = integer(f.required("start"), f.path("start"));
    const int every = integer(f.required("every"), f.path("every"));
    const Json* last = f.optional("last");
    f.finish();
    if (every < 1) fail(f.path("every"), "must be >= 1");
    return every_n_weeks(start, every, last ? integer(*last, f.path("last")) : horizon);
}

Json time_set_json(const std::vector<int>& weeks, int horizon) {
    if (weeks.size() >= 2) {
        const int start = weeks[0];
        const int every = weeks[1] - weeks[0];
        if (every >= 1 && every_n_weeks(start, every, horizon) == weeks)
            return Json{{"start", start}, {"every", every}, {"last", horizon}};
    }
    Json a = Json::array();
    for (int w : weeks) a.push_back(w);
    return a;
}

Json vector_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
    Json a = Json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
    return a;
}

Json matrix_json(const Eigen::MatrixXd& m) {
    Json a = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
    return a;
}

Eigen::MatrixXd matrix_any(const Json& j, const std::string& field) {
    if (!j.is_array()) fail(field, "expected an array of rows");
    if (j.empty()) return Eigen::MatrixXd(0, 0);
    const auto cols = j.front().is_array() ? static_cast<Eigen::Index>(j.front().size()) : 0;
    return matrix(j, static_cast<Eigen::Index>(j.size()), cols, field);
}

void read_pso(const Json* j, PsoParams<double>& p, const std::string& path, std::vector<std::string>& defaulted) {
    if (!j) {
        defaulted.push_back(path);
        return;
    }
    Fields f(*j, path, defaulted);
    if (auto v = f.optional("population")) p.population = integer(*v, f.path("population"));
    if (auto v = f.optional("max_iterations")) p.max_iterations = integer(*v, f.path("max_iterations"));
    if (auto v = f.optional("inertia")) p.inertia = number(*v, f.path("inertia"));
    if (auto v = f.optional("cognitive")) p.cognitive = number(*v, f.path("cognitive"));
    if (auto v = f.optional("social")) p.social = number(*v, f.path("social"));
    if (auto v = f.optional("bounds")) {
        const auto b = matrix(*v, v->is_array() ? static_cast<Eigen::Index>(v->size()) : 0, 2, f.path("bounds"));
        if (b.rows() != p.lower.size())
            fail(f.path("bounds"), "expected " + std::to_string(p.lower.size()) + " [lo, hi] pairs");
        p.lower = b.col(0);
        p.upper = b.col(1);
    }
    if (auto v = f.optional("velocity_clamp")) p.velocity_clamp = number(*v, f.path("velocity_clamp"));
    if (auto v = f.optional("init_retry_limit")) p.init_retry_limit = integer(*v, f.path("init_retry_limit"));
    if (auto v = f.optional("per_coordinate")) p.per_coordinate = boolean(*v, f.path("per_coordinate"));
    f.finish();
}

Json pso_json(const PsoParams<double>& p) {
    Json bounds = Json::array();
    for (Eigen::Index d = 0; d < p.lower.size(); ++d) bounds.push_back(Json::array({p.lower[d], p.upper[d]}));
    return Json{{"population", p.population},
                {"max_iterations", p.max_iterations},
                {"inertia", p.inertia},
                {"cognitive", p.cognitive},
                {"social", p.social},
                {"bounds", bounds},
                {"velocity_clamp", p.velocity_clamp},
                {"init_retry_limit", p.init_retry_limit},
                {"per_coordinate", p.per_coordinate}};
}

bool same_pso(const PsoParams<double>& a, const PsoParams<double>& b) {
    return a.population == b.population && a.max_iterations == b.max_iterations && a.inertia == b.inertia &&
           a.cognitive == b.cognitive && a.social == b.social && a.lower == b.lower && a.upper == b.upper &&
           a.velocity_clamp == b.velocity_clamp && a.init_retry_limit == b.init_retry_limit &&
           a.per_coordinate == b.per_coordinate;
}

void add_pso_issues(ValidationReport& report, const PsoParams<double>& p, const std::string& path, int dim) {
    for (const auto& problem : p.problems()) report.errors.push_back({path, "", problem});
    if (p.dimension() != dim)
        report.errors.push_back({path + ".bounds", std::to_string(p.dimension()),
                                 "needs " + std::to_string(dim) + " dimensions"});
}

int line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& s, int line, const std::string& field) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) throw FormatError(field, "not a number: '" + s + "'", line);
    return v;
}

long long dose(double v) { return static_cast<long long>(std::ceil(v - 1e-9)); }

void dose_block(std::ostringstream& out, const std::string& title, const Eigen::MatrixXd& m) {
    out << title << "\n" << std::setw(10) << "";
    for (Eigen::Index i = 0; i < m.cols(); ++i) out << std::setw(14) << ("Treatment " + std::to_string(i + 1));
    out << "\n";
    for (Eigen::Index s = 0; s < m.rows(); ++s) {
        out << std::left << std::setw(10) << ("Site " + std::to_string(s + 1)) << std::right;
        for (Eigen::Index i = 0; i < m.cols(); ++i) out << std::setw(14) << dose(m(s, i));
        out << "\n";
    }
}

}  // namespace

FormatError::FormatError(std::string field, const std::string& message, int line)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (field.empty() ? message : field + ": " + message)),
      field_(std::move(field)),
      line_(line) {}

bool RunSpec::operator==(const RunSpec& o) const {
    return model == o.model && dists == o.dists && planner.n_sim == o.planner.n_sim &&
           planner.quantile == o.planner.quantile && planner.evaluation_paths == o.planner.evaluation_paths &&
           planner.widen_factor == o.planner.widen_factor && same_pso(planner.pso, o.planner.pso) &&
           monitor == o.monitor && seed == o.seed;
}

std::string format_number(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

RunSpec runspec_from_json(const Json& doc) {
    RunSpec spec;
    auto& dflt = spec.defaulted;
    Fields top(doc, "", dflt);

    if (auto v = top.optional("seed")) {
        if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0))
            fail("seed", "expected a non-negative integer");
        spec.seed = v->get<std::uint64_t>();
    }

    auto& trial = spec.model.trial;
    {
        Fields f(top.required("trial"), "trial", dflt);
        trial.treatments = integer(f.required("treatments"), f.path("treatments"));
        trial.sites = integer(f.required("sites"), f.path("sites"));
        trial.horizon = integer(f.required("horizon"), f.path("horizon"));
        if (trial.treatments < 1) fail(f.path("treatments"), "must be >= 1");
        if (trial.sites < 1) fail(f.path("sites"), "must be >= 1");
        trial.interim_times = time_set(f.required("interim_times"), trial.horizon, f.path("interim_times"), dflt);
        trial.resupply_times = time_set(f.required("resupply_times"), trial.horizon, f.path("resupply_times"), dflt);
        trial.optimization_times =
            time_set(f.required("optimization_times"), trial.horizon, f.path("optimization_times"), dflt);
        trial.treatment_duration = integer(f.required("treatment_duration"), f.path("treatment_duration"));
        trial.lead_time = integer(f.required("lead_time"), f.path("lead_time"));
        f.finish();
    }
    const Eigen::Index I = trial.treatments;
    const Eigen::Index S = trial.sites;
    {
        auto& c = spec.model.costs;
        Fields f(top.required("costs"), "costs", dflt);
        c.production_cost = broadcast(f.required("production_cost"), I, f.path("production_cost"));
        c.recruitment_cost = broadcast(f.required("recruitment_cost"), S, f.path("recruitment_cost"));
        c.shipping_cost = broadcast(f.required("shipping_cost"), S, f.path("shipping_cost"));
        c.dc_holding_cost = number(f.required("dc_holding_cost"), f.path("dc_holding_cost"));
        c.site_holding_cost = broadcast(f.required("site_holding_cost"), S, f.path("site_holding_cost"));
        c.disposal_cost = broadcast_matrix(f.required("disposal_cost"), S, I, f.path("disposal_cost"));
        c.shortage_penalty = number(f.required("shortage_penalty"), f.path("shortage_penalty"));
        f.finish();
    }
    {
        auto& l = spec.model.logistics;
        Fields f(top.required("logistics"), "logistics", dflt);
        l.dose_volume = number(f.required("dose_volume"), f.path("dose_volume"));
        l.box_capacity = number(f.required("box_capacity"), f.path("box_capacity"));
        l.site_capacity = broadcast(f.required("site_capacity"), S, f.path("site_capacity"));
        f.finish();
    }
    {
        auto& d = spec.dists;
        Fields f(top.required("distributions"), "distributions", dflt);
        d.enrollment_mean = number(f.required("enrollment_mean"), f.path("enrollment_mean"));
        d.dropout_mean = number(f.required("dropout_mean"), f.path("dropout_mean"));
        d.initial_target = number(f.required("initial_target"), f.path("initial_target"));
        if (auto v = f.optional("interim_bump_range")) {
            const auto r = vector(*v, f.path("interim_bump_range"));
            if (r.size() != 2) fail(f.path("interim_bump_range"), "expected [lo, hi]");
            d.interim_bump_lo = r[0];
            d.interim_bump_hi = r[1];
        }
        d.consumption_means = broadcast(f.required("consumption_means"), I, f.path("consumption_means"));
        d.consumption_total = number(f.required("consumption_total"), f.path("consumption_total"));
        if (auto v = f.optional("consumption_spread")) d.consumption_spread = number(*v, f.path("consumption_spread"));
        f.finish();
    }
    if (const Json* j = top.optional("planner")) {
        auto& p = spec.planner;
        Fields f(*j, "planner", dflt);
        if (auto v = f.optional("n_sim")) p.n_sim = integer(*v, f.path("n_sim"));
        if (auto v = f.optional("quantile")) p.quantile = number(*v, f.path("quantile"));
        if (auto v = f.optional("evaluation_paths")) p.evaluation_paths = integer(*v, f.path("evaluation_paths"));
        if (auto v = f.optional("widen_factor")) p.widen_factor = number(*v, f.path("widen_factor"));
        read_pso(f.optional("pso"), p.pso, f.path("pso"), dflt);
        f.finish();
    }
    if (const Json* j = top.optional("monitor")) {
        auto& m = spec.monitor;
        Fields f(*j, "monitor", dflt);
        if (auto v = f.optional("n_sim")) m.n_sim = integer(*v, f.path("n_sim"));
        if (auto v = f.optional("evaluation_paths")) m.evaluation_paths = integer(*v, f.path("evaluation_paths"));
        if (auto v = f.optional("widen_factor")) m.widen_factor = number(*v, f.path("widen_factor"));
        if (auto v = f.optional("reestimate")) m.reestimate = boolean(*v, f.path("reestimate"));
        if (auto v = f.optional("significance")) m.significance = number(*v, f.path("significance"));
        if (auto v = f.optional("auto_optimize")) m.auto_optimize = boolean(*v, f.path("auto_optimize"));
        if (auto v = f.optional("shortage_is_infeasible"))
            m.shortage_is_infeasible = boolean(*v, f.path("shortage_is_infeasible"));
        read_pso(f.optional("pso"), m.pso, f.path("pso"), dflt);
        f.finish();
    }
    top.finish();

    ValidationReport report = validate_config(spec.model);
    const ValidationReport dr = validate_distributions(spec.dists, trial);
    report.errors.insert(report.errors.end(), dr.errors.begin(), dr.errors.end());
    report.warnings.insert(report.warnings.end(), dr.warnings.begin(), dr.warnings.end());
    if (spec.planner.n_sim < 1) report.errors.push_back({"planner.n_sim", std::to_string(spec.planner.n_sim), "must be >= 1"});
    if (!(spec.planner.quantile > 0.0 && spec.planner.quantile <= 1.0))
        report.errors.push_back({"planner.quantile", format_number(spec.planner.quantile), "must lie in (0, 1]"});
    if (spec.planner.evaluation_paths < 0)
        report.errors.push_back({"planner.evaluation_paths", "", "must be >= 0"});
    if (!(spec.planner.widen_factor >= 1.0)) report.errors.push_back({"planner.widen_factor", "", "must be >= 1"});
    if (spec.monitor.n_sim < 1) report.errors.push_back({"monitor.n_sim", std::to_string(spec.monitor.n_sim), "must be >= 1"});
    if (spec.monitor.evaluation_paths < 0)
        report.errors.push_back({"monitor.evaluation_paths", "", "must be >= 0"});
    if (!(spec.monitor.widen_factor >= 1.0)) report.errors.push_back({"monitor.widen_factor", "", "must be >= 1"});
    if (!(spec.monitor.significance > 0.0 && spec.monitor.significance < 1.0))
        report.errors.push_back({"monitor.significance", format_number(spec.monitor.significance), "must lie in (0, 1)"});
    add_pso_issues(report, spec.planner.pso, "planner.pso", 3);
    add_pso_issues(report, spec.monitor.pso, "monitor.pso", 2);
    if (!report.ok()) throw ConfigError(report);
    spec.warnings = report.warnings;
    return spec;
}

RunSpec load_runspec(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw FormatError("", e.what(), line_of(text, e.byte > 0 ? e.byte - 1 : 0));
    }
    return runspec_from_json(doc);
}

RunSpec load_runspec_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path, "cannot open runspec");
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_runspec(buf.str());
}

Json runspec_to_json(const RunSpec& spec) {
    const auto& t = spec.model.trial;
    const auto& c = spec.model.costs;
    const auto& l = spec.model.logistics;
    const auto& d = spec.dists;
    const auto& p = spec.planner;
    const auto& m = spec.monitor;
    Json doc;
    doc["seed"] = spec.seed;
    doc["trial"] = Json{{"treatments", t.treatments},
                        {"sites", t.sites},
                        {"horizon", t.horizon},
                        {"interim_times", time_set_json(t.interim_times, t.horizon)},
                        {"resupply_times", time_set_json(t.resupply_times, t.horizon)},
                        {"optimization_times", time_set_json(t.optimization_times, t.horizon)},
                        {"treatment_duration", t.treatment_duration},
                        {"lead_time", t.lead_time}};
    doc["costs"] = Json{{"production_cost", vector_json(c.production_cost)},
                        {"recruitment_cost", vector_json(c.recruitment_cost)},
                        {"shipping_cost", vector_json(c.shipping_cost)},
                        {"dc_holding_cost", c.dc_holding_cost},
                        {"site_holding_cost", vector_json(c.site_holding_cost)},
                        {"disposal_cost", matrix_json(c.disposal_cost)},
                        {"shortage_penalty", c.shortage_penalty}};
    doc["logistics"] = Json{{"dose_volume", l.dose_volume},
                            {"box_capacity", l.box_capacity},
                            {"site_capacity", vector_json(l.site_capacity)}};
    doc["distributions"] = Json{{"enrollment_mean", d.enrollment_mean},
                                {"dropout_mean", d.dropout_mean},
                                {"initial_target", d.initial_target},
                                {"interim_bump_range", Json::array({d.interim_bump_lo, d.interim_bump_hi})},
                                {"consumption_means", vector_json(d.consumption_means)},
                                {"consumption_total", d.consumption_total},
                                {"consumption_spread", d.consumption_spread}};
    doc["planner"] = Json{{"n_sim", p.n_sim},
                          {"quantile", p.quantile},
                          {"evaluation_paths", p.evaluation_paths},
                          {"widen_factor", p.widen_factor},
                          {"pso", pso_json(p.pso)}};
    doc["monitor"] = Json{{"n_sim", m.n_sim},
                          {"evaluation_paths", m.evaluation_paths},
                          {"widen_factor", m.widen_factor},
                          {"reestimate", m.reestimate},
                          {"significance", m.significance},
                          {"auto_optimize", m.auto_optimize},
                          {"shortage_is_infeasible", m.shortage_is_infeasible},
                          {"pso", pso_json(m.pso)}};
    return doc;
}

std::string save_runspec(const RunSpec& spec) { return runspec_to_json(spec).dump(2) + "\n"; }

Json decisions_to_json(const DecisionVars& d) {
    return Json{{"production", vector_json(d.production)},
                {"trigger", matrix_json(d.trigger)},
                {"ceiling", matrix_json(d.ceiling)}};
}

DecisionVars decisions_from_json(const Json& j, const SupplyModel& model) {
    std::vector<std::string> ignored;
    Fields f(j, "decisions", ignored);
    DecisionVars d;
    d.production = broadcast(f.required("production"), model.treatments(), f.path("production"));
    d.trigger = matrix(f.required("trigger"), model.sites(), model.treatments(), f.path("trigger"));
    d.ceiling = matrix(f.required("ceiling"), model.sites(), model.treatments(), f.path("ceiling"));
    f.finish();
    return d;
}

Json observation_to_json(const WeeklyObservation& obs) {
    return Json{{"week", obs.week},
                {"enrollment", vector_json(obs.enrollment)},
                {"dropout", vector_json(obs.dropout)},
                {"target", obs.target},
                {"consumption_rate", vector_json(obs.consumption_rate)}};
}

WeeklyObservation observation_from_json(const Json& j) {
    std::vector<std::string> ignored;
    Fields f(j, "observation", ignored);
    WeeklyObservation obs;
    obs.week = integer(f.required("week"), f.path("week"));
    obs.enrollment = vector(f.required("enrollment"), f.path("enrollment"));
    obs.dropout = vector(f.required("dropout"), f.path("dropout"));
    obs.target = number(f.required("target"), f.path("target"));
    obs.consumption_rate = vector(f.required("consumption_rate"), f.path("consumption_rate"));
    f.finish();
    return obs;
}

namespace {

Json breakdown_json(const CostBreakdown& b) {
    return Json{{"production", b.production},     {"recruitment", b.recruitment},
                {"shipment", b.shipment},         {"holding_dc", b.holding_dc},
                {"holding_sites", b.holding_sites}, {"shortage_penalty", b.shortage_penalty},
                {"disposal", b.disposal},         {"total", b.total}};
}

CostBreakdown breakdown_from(const Json& j, const std::string& path) {
    std::vector<std::string> ignored;
    Fields f(j, path, ignored);
    CostBreakdown b;
    b.production = number(f.required("production"), f.path("production"));
    b.recruitment = number(f.required("recruitment"), f.path("recruitment"));
    b.shipment = number(f.required("shipment"), f.path("shipment"));
    b.holding_dc = number(f.required("holding_dc"), f.path("holding_dc"));
    b.holding_sites = number(f.required("holding_sites"), f.path("holding_sites"));
    b.shortage_penalty = number(f.required("shortage_penalty"), f.path("shortage_penalty"));
    b.disposal = number(f.required("disposal"), f.path("disposal"));
    b.total = number(f.required("total"), f.path("total"));
    f.finish();
    return b;
}

struct PayloadWriter {
    Json operator()(const WeeklyObservation& o) const { return observation_to_json(o); }
    Json operator()(const ShipmentRecord& r) const {
        return Json{{"site", r.site + 1}, {"doses", vector_json(r.doses)}, {"boxes", r.boxes}, {"reduced", r.reduced}};
    }
    Json operator()(const ReestimationRecord& r) const {
        return Json{{"previous_mean", r.previous_mean},
                    {"new_mean", r.new_mean},
                    {"p_value", r.p_value},
                    {"changed", r.changed}};
    }
    Json operator()(const OptimizationRecord& r) const {
        return Json{{"applied", r.applied},
                    {"forced", r.forced},
                    {"trigger", matrix_json(r.trigger)},
                    {"ceiling", matrix_json(r.ceiling)},
                    {"predicted_remaining_cost", r.predicted_remaining_cost},
                    {"shortage_probability", r.shortage_probability},
                    {"breakdown", breakdown_json(r.breakdown)},
                    {"scenarios", r.scenarios},
                    {"skipped", r.skipped},
                    {"failed", r.failed},
                    {"note", r.note}};
    }
    Json operator()(const TerminationRecord& r) const {
        return Json{{"disposed", matrix_json(r.disposed)}, {"horizon_reached", r.horizon_reached}};
    }
};

}  // namespace

Json event_to_json(const Event& e) {
    return Json{{"week", e.week}, {"kind", to_string(e.kind)}, {"payload", std::visit(PayloadWriter{}, e.payload)}};
}

Event event_from_json(const Json& j) {
    std::vector<std::string> ignored;
    Fields f(j, "event", ignored);
    Event e;
    e.week = integer(f.required("week"), "event.week");
    const Json& kind = f.required("kind");
    if (!kind.is_string()) fail("event.kind", "expected a string");
    const auto k = event_kind_from_string(kind.get<std::string>());
    if (!k) fail("event.kind", "unknown kind '" + kind.get<std::string>() + "'");
    e.kind = *k;
    const Json& p = f.required("payload");
    f.finish();
    switch (e.kind) {
        case EventKind::observation: e.payload = observation_from_json(p); break;
        case EventKind::resupply:
        case EventKind::emergency: {
            Fields g(p, "payload", ignored);
            ShipmentRecord r;
            r.site = integer(g.required("site"), "payload.site") - 1;
            r.doses = vector(g.required("doses"), "payload.doses");
            r.boxes = integer(g.required("boxes"), "payload.boxes");
            r.reduced = boolean(g.required("reduced"), "payload.reduced");
            g.finish();
            e.payload = r;
            break;
        }
        case EventKind::reestimation: {
            Fields g(p, "payload", ignored);
            ReestimationRecord r;
            r.previous_mean = number(g.required("previous_mean"), "payload.previous_mean");
            r.new_mean = number(g.required("new_mean"), "payload.new_mean");
            r.p_value = number(g.required("p_value"), "payload.p_value");
            r.changed = boolean(g.required("changed"), "payload.changed");
            g.finish();
            e.payload = r;
            break;
        }
        case EventKind::optimization: {
            Fields g(p, "payload", ignored);
            OptimizationRecord r;
            r.applied = boolean(g.required("applied"), "payload.applied");
            r.forced = boolean(g.required("forced"), "payload.forced");
            r.trigger = matrix_any(g.required("trigger"), "payload.trigger");
            r.ceiling = matrix_any(g.required("ceiling"), "payload.ceiling");
            r.predicted_remaining_cost =
                number(g.required("predicted_remaining_cost"), "payload.predicted_remaining_cost");
            r.shortage_probability = number(g.required("shortage_probability"), "payload.shortage_probability");
            r.breakdown = breakdown_from(g.required("breakdown"), "payload.breakdown");
            r.scenarios = integer(g.required("scenarios"), "payload.scenarios");
            r.skipped = integer(g.required("skipped"), "payload.skipped");
            r.failed = integer(g.required("failed"), "payload.failed");
            const Json& note = g.required("note");
            if (!note.is_string()) fail("payload.note", "expected a string");
            r.note = note.get<std::string>();
            g.finish();
            e.payload = r;
            break;
        }
        case EventKind::termination: {
            Fields g(p, "payload", ignored);
            TerminationRecord r;
            r.disposed = matrix_any(g.required("disposed"), "payload.disposed");
            r.horizon_reached = boolean(g.required("horizon_reached"), "payload.horizon_reached");
            g.finish();
            e.payload = r;
            break;
        }
    }
    return e;
}

std::string event_line(const Event& e) { return event_to_json(e).dump(); }

std::vector<Event> read_event_log(std::istream& in) {
    std::vector<Event> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(event_from_json(Json::parse(line)));
        } catch (const Json::parse_error& e) {
            throw FormatError("", e.what(), n);
        } catch (const FormatError& e) {
            throw FormatError(e.field(), e.what(), n);
        }
    }
    return out;
}

void write_event_log(std::ostream& out, const std::vector<Event>& events) {
    for (const auto& e : events) out << event_line(e) << "\n";
}

void write_observations_csv(std::ostream& out, const std::vector<WeeklyObservation>& obs) {
    out << "record,week,site,enrollment,dropout,target,consumption_rate\n";
    for (const auto& o : obs) {
        for (Eigen::Index s = 0; s < o.enrollment.size(); ++s) {
            out << "site," << o.week << "," << s + 1 << "," << format_number(o.enrollment[s]) << ","
                << format_number(o.dropout[s]) << ",,\n";
        }
        out << "trial," << o.week << ",,,," << format_number(o.target) << ",";
        for (Eigen::Index i = 0; i < o.consumption_rate.size(); ++i)
            out << (i ? ";" : "") << format_number(o.consumption_rate[i]);
        out << "\n";
    }
}

std::vector<WeeklyObservation> read_observations_csv(std::istream& in, int sites, int treatments) {
    static const std::string header = "record,week,site,enrollment,dropout,target,consumption_rate";
    std::string line;
    int n = 0;
    if (!std::getline(in, line)) throw FormatError("", "empty observation file", 1);
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw FormatError("header", "expected '" + header + "'", n);

    struct Partial {
        WeeklyObservation obs;
        std::vector<int> site_rows;
        int trial_rows = 0;
    };
    std::map<int, Partial> weeks;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != 7) throw FormatError("", "expected 7 cells", n);
        const int week = static_cast<int>(parse_number(cells[1], n, "week"));
        if (week < 1 || cells[1] != std::to_string(week)) throw FormatError("week", "expected a positive integer", n);
        auto& p = weeks[week];
        if (p.site_rows.empty()) {
            p.obs.week = week;
            p.obs.enrollment = Eigen::VectorXd::Zero(sites);
            p.obs.dropout = Eigen::VectorXd::Zero(sites);
            p.obs.consumption_rate = Eigen::VectorXd::Zero(treatments);
            p.site_rows.assign(static_cast<std::size_t>(sites), 0);
        }
        if (cells[0] == "site") {
            const int s = static_cast<int>(parse_number(cells[2], n, "site"));
            if (s < 1 || s > sites || cells[2] != std::to_string(s))
                throw FormatError("site", "expected 1.." + std::to_string(sites), n);
            if (!cells[5].empty() || !cells[6].empty()) throw FormatError("", "site rows leave target and rates empty", n);
            p.obs.enrollment[s - 1] = parse_number(cells[3], n, "enrollment");
            p.obs.dropout[s - 1] = parse_number(cells[4], n, "dropout");
            ++p.site_rows[static_cast<std::size_t>(s - 1)];
        } else if (cells[0] == "trial") {
            if (!cells[2].empty() || !cells[3].empty() || !cells[4].empty())
                throw FormatError("", "trial rows leave site, enrollment and dropout empty", n);
            p.obs.target = parse_number(cells[5], n, "target");
            const auto rates = split(cells[6], ';');
            if (static_cast<int>(rates.size()) != treatments)
                throw FormatError("consumption_rate", "expected " + std::to_string(treatments) + " rates", n);
            for (int i = 0; i < treatments; ++i)
                p.obs.consumption_rate[i] = parse_number(rates[static_cast<std::size_t>(i)], n, "consumption_rate");
            ++p.trial_rows;
        } else {
            throw FormatError("record", "expected 'site' or 'trial'", n);
        }
    }
    std::vector<WeeklyObservation> out;
    int expected = weeks.empty() ? 0 : weeks.begin()->first;
    for (auto& [week, p] : weeks) {
        if (week != expected) throw FormatError("week", "week " + std::to_string(expected) + " is missing");
        ++expected;
        if (p.trial_rows != 1) throw FormatError("week", "week " + std::to_string(week) + " needs one trial row");
        for (int s = 0; s < sites; ++s) {
            if (p.site_rows[static_cast<std::size_t>(s)] != 1)
                throw FormatError("site", "week " + std::to_string(week) + " needs one row for site " +
                                              std::to_string(s + 1));
        }
        out.push_back(std::move(p.obs));
    }
    return out;
}

std::vector<WeeklyObservation> observations_from_path(const ScenarioPath& path, int weeks) {
    std::vector<WeeklyObservation> out;
    for (int t = 1; t <= std::min(weeks, path.weeks()); ++t) out.push_back(observation_from_path(path, t));
    return out;
}

const std::vector<std::string>& trajectory_columns() {
    static const std::vector<std::string> cols{"week",          "site",      "treatment",       "site_inventory",
                                               "shipment",      "boxes",     "consumption",     "enrollment_open",
                                               "supply_open",   "off_treatment", "dc_inventory"};
    return cols;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& tr) {
    const auto& cols = trajectory_columns();
    for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
    out << "\n";
    const int S = static_cast<int>(tr.site_inventory.size());
    const int I = static_cast<int>(tr.production.size());
    for (int t = 1; t <= tr.last_week; ++t) {
        for (int s = 0; s < S; ++s) {
            for (int i = 0; i < I; ++i) {
                out << t << "," << s + 1 << "," << i + 1 << "," << format_number(tr.site(s, i, t)) << ","
                    << format_number(tr.shipped(s, i, t)) << "," << tr.boxes(s, t - 1) << ","
                    << format_number(tr.consumption(s, i, t)) << "," << tr.enrollment_open[t - 1] << ","
                    << tr.supply_open[t - 1] << "," << format_number(tr.off_treatment(s, t - 1)) << ","
                    << format_number(tr.dc_inventory(i, t - 1)) << "\n";
            }
        }
    }
}

void write_scenarios_csv(std::ostream& out, const PlanningResult& result) {
    const auto I = result.decisions.production.size();
    out << "scenario,seed,x_mul,s_mul,S_mul,cost,widened";
    for (Eigen::Index i = 0; i < I; ++i) out << ",production_" << i + 1;
    out << "\n";
    for (std::size_t k = 0; k < result.per_scenario.size(); ++k) {
        const auto& o = result.per_scenario[k];
        out << k + 1 << "," << o.seed << "," << format_number(o.multipliers.x_mul) << ","
            << format_number(o.multipliers.s_mul) << "," << format_number(o.multipliers.S_mul) << ","
            << format_number(o.cost) << "," << (o.widened ? 1 : 0);
        for (Eigen::Index i = 0; i < I; ++i) out << "," << format_number(o.production[i]);
        out << "\n";
    }
}

void write_traces_csv(std::ostream& out, const PlanningResult& result) {
    out << "scenario,iteration,best_value\n";
    for (std::size_t k = 0; k < result.per_scenario.size(); ++k) {
        const auto& trace = result.per_scenario[k].trace;
        for (std::size_t it = 0; it < trace.size(); ++it)
            out << k + 1 << "," << it << "," << format_number(trace[it]) << "\n";
    }
}

std::string render_planning_report(const PlanningResult& result) {
    std::ostringstream out;
    const auto& d = result.decisions;
    out << "Recommended production amount (dose)\n" << std::setw(10) << "";
    for (Eigen::Index i = 0; i < d.production.size(); ++i) out << std::setw(14) << ("Treatment " + std::to_string(i + 1));
    out << "\n" << std::setw(10) << "";
    for (Eigen::Index i = 0; i < d.production.size(); ++i) out << std::setw(14) << dose(d.production[i]);
    out << "\n\n";
    dose_block(out, "Trigger level (dose)", d.trigger);
    out << "\n";
    dose_block(out, "Recommended inventory level (dose)", d.ceiling);
    out << "\nTotal cost (predicted): " << std::llround(result.predicted_cost) << "\n";
    return out.str();
}

CheckpointReport checkpoint_report(const MonitorSession& session) {
    CheckpointReport r;
    r.week = session.clock;
    for (int t : session.model.trial.optimization_times)
        if (t <= session.clock) ++r.checkpoint;
    r.inventory = session.state.site;
    if (session.clock == 0) {
        r.resupply = session.trajectory.pre_shipment;
    } else {
        r.resupply.resize(session.model.sites(), session.model.treatments());
        for (int s = 0; s < session.model.sites(); ++s)
            r.resupply.row(s) = session.trajectory.shipments[static_cast<std::size_t>(s)].col(session.clock - 1).transpose();
    }
    r.trigger = session.decisions.trigger;
    r.ceiling = session.decisions.ceiling;
    if (session.last_optimization && !session.events.empty()) {
        for (auto it = session.events.rbegin(); it != session.events.rend(); ++it) {
            if (it->week != session.clock) break;
            if (it->kind == EventKind::optimization) {
                r.predicted_remaining_cost = std::get<OptimizationRecord>(it->payload).predicted_remaining_cost;
                break;
            }
        }
    }
    return r;
}

std::string render_checkpoint_report(const CheckpointReport& r) {
    std::ostringstream out;
    out << "Check point " << r.checkpoint << " (week " << r.week << ")\n\n";
    dose_block(out, "Current inventory at sites (dose)", r.inventory);
    out << "\n";
    dose_block(out, "Resupply amount (dose)", r.resupply);
    out << "\n";
    dose_block(out, "Updated trigger level (dose)", r.trigger);
    out << "\n";
    dose_block(out, "Updated recommended inventory level (dose)", r.ceiling);
    if (r.predicted_remaining_cost) out << "\nTotal cost (predicted remaining): " << std::llround(*r.predicted_remaining_cost) << "\n";
    return out.str();
}

std::string render_summary_line(const RunSummary& s) {
    std::ostringstream out;
    out << "production=" << std::llround(s.produced.sum()) << " consumption=" << std::llround(s.consumed.sum())
        << " ratio=" << std::fixed << std::setprecision(3) << s.utilization << " shutdowns=" << s.shutdowns
        << " cost=" << std::llround(s.cost.total) << " duration=" << s.duration;
    return out.str();
}

}  // namespace trialsupply
