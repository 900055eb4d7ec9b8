#include "fixtures.hpp"

#include "trialsupply/io_formats.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

using namespace trialsupply;

namespace {

const std::string preset_path = std::string(TRIALSUPPLY_SOURCE_DIR) + "/presets/reference.run";

Json preset_json() {
    std::ifstream in(preset_path);
    return Json::parse(in);
}

DecisionVars golden_decisions() {
    return {Eigen::VectorXd::Constant(1, 25.0), Eigen::MatrixXd::Constant(1, 1, 10.0),
            Eigen::MatrixXd::Constant(1, 1, 20.0)};
}

std::string field_of(const std::string& text) {
    try {
        load_runspec(text);
    } catch (const FormatError& e) {
        return e.field();
    }
    return "(accepted)";
}

}  // namespace

TEST(RunSpec, PresetIsTheReferenceConfiguration) {
    const auto spec = load_runspec_file(preset_path);
    EXPECT_EQ(spec.model, fixtures::reference_model());
    EXPECT_EQ(spec.dists, fixtures::reference_distributions());
    EXPECT_EQ(spec.model.trial.interim_times.front(), 4);
    EXPECT_EQ(spec.model.trial.interim_times.back(), 260);
    EXPECT_EQ(spec.model.trial.interim_times.size(), 65u);
    EXPECT_EQ(spec.planner.pso.population, 20);
    EXPECT_EQ(spec.planner.pso.inertia, 0.9);
    EXPECT_EQ(spec.planner.pso.cognitive, 1.6);
    EXPECT_EQ(spec.planner.pso.social, 1.8);
    EXPECT_EQ(spec.monitor.pso.dimension(), 2);
    EXPECT_EQ(spec.planner.n_sim, 100);
    ASSERT_EQ(spec.warnings.size(), 5u);
    for (const auto& w : spec.warnings) EXPECT_EQ(w.field.rfind("site_holding_cost[", 0), 0u);
}

TEST(RunSpec, MissingDoseVolumeNamesTheField) {
    auto j = preset_json();
    j["logistics"].erase("dose_volume");
    EXPECT_EQ(field_of(j.dump()), "logistics.dose_volume");
}

TEST(RunSpec, UnknownFieldsAreRejected) {
    auto j = preset_json();
    j["costs"]["holding"] = 1;
    EXPECT_EQ(field_of(j.dump()), "costs.holding");
    j = preset_json();
    j["extra"] = true;
    EXPECT_EQ(field_of(j.dump()), "extra");
    j = preset_json();
    j["planner"]["pso"]["momentum"] = 0.1;
    EXPECT_EQ(field_of(j.dump()), "planner.pso.momentum");
}

TEST(RunSpec, SyntaxErrorCarriesLine) {
    const std::string text = "{\n  \"seed\": 1,\n  \"trial\": {\n    \"sites\": ,\n";
    try {
        load_runspec(text);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 4);
    }
}

TEST(RunSpec, WrongShapeNamesTheField) {
    auto j = preset_json();
    j["costs"]["recruitment_cost"] = Json::array({1, 2});
    EXPECT_EQ(field_of(j.dump()), "costs.recruitment_cost");
    j = preset_json();
    j["trial"]["sites"] = "five";
    EXPECT_EQ(field_of(j.dump()), "trial.sites");
}

TEST(RunSpec, ModelViolationsRaiseConfigError) {
    auto j = preset_json();
    j["trial"]["treatment_duration"] = 0;
    EXPECT_THROW(load_runspec(j.dump()), ConfigError);
    j = preset_json();
    j["planner"]["pso"]["bounds"] = Json::array({Json::array({0, 1}), Json::array({0, 1})});
    EXPECT_EQ(field_of(j.dump()), "planner.pso.bounds");
    j = preset_json();
    j["planner"]["pso"]["inertia"] = 1.2;
    EXPECT_THROW(load_runspec(j.dump()), ConfigError);
}

TEST(RunSpec, DefaultsAreAppliedAndRecorded) {
    auto j = preset_json();
    j.erase("planner");
    j.erase("monitor");
    j.erase("seed");
    j["distributions"].erase("consumption_spread");
    const auto spec = load_runspec(j.dump());
    EXPECT_EQ(spec.seed, 1u);
    EXPECT_EQ(spec.planner.n_sim, PlannerSettings{}.n_sim);
    EXPECT_EQ(spec.monitor, MonitorSettings{});
    const auto has = [&](const std::string& p) {
        return std::find(spec.defaulted.begin(), spec.defaulted.end(), p) != spec.defaulted.end();
    };
    EXPECT_TRUE(has("planner"));
    EXPECT_TRUE(has("monitor"));
    EXPECT_TRUE(has("seed"));
    EXPECT_TRUE(has("distributions.consumption_spread"));
    EXPECT_FALSE(has("logistics.dose_volume"));
}

TEST(RunSpec, ScalarsBroadcast) {
    auto j = preset_json();
    j["costs"]["disposal_cost"] = 7.5;
    j["costs"]["shipping_cost"] = 40;
    const auto spec = load_runspec(j.dump());
    EXPECT_EQ(spec.model.costs.disposal_cost, Eigen::MatrixXd::Constant(5, 3, 7.5));
    EXPECT_EQ(spec.model.costs.shipping_cost, Eigen::VectorXd::Constant(5, 40));
    j["costs"]["disposal_cost"] = Json::array({1, Json::array({1, 2, 3}), 1, 1, 1});
    EXPECT_EQ(load_runspec(j.dump()).model.costs.disposal_cost(1, 2), 3.0);
}

TEST(RunSpec, ExplicitTimeListsAndBoundedRanges) {
    auto j = preset_json();
    j["trial"]["interim_times"] = Json::array({5, 9, 30});
    j["trial"]["resupply_times"] = Json{{"start", 2}, {"every", 2}, {"last", 10}};
    const auto spec = load_runspec(j.dump());
    EXPECT_EQ(spec.model.trial.interim_times, (std::vector<int>{5, 9, 30}));
    EXPECT_EQ(spec.model.trial.resupply_times, (std::vector<int>{2, 4, 6, 8, 10}));
    EXPECT_EQ(load_runspec(save_runspec(spec)), spec);
}

TEST(RunSpec, LoadSaveLoadFixpoint) {
    const auto a = load_runspec_file(preset_path);
    const std::string text = save_runspec(a);
    const auto b = load_runspec(text);
    EXPECT_EQ(a, b);
    EXPECT_EQ(save_runspec(b), text);
    EXPECT_TRUE(b.defaulted.empty());
}

TEST(RunSpec, RoundTripIsExactForAwkwardDoubles) {
    auto spec = load_runspec_file(preset_path);
    spec.dists.dropout_mean = 0.1 + 0.2;
    spec.model.costs.dc_holding_cost = 1.0 / 3.0;
    spec.seed = 18446744073709551615ull;
    EXPECT_EQ(load_runspec(save_runspec(spec)), spec);
}

TEST(FormatNumber, ShortestRoundTrip) {
    EXPECT_EQ(format_number(0.0), "0");
    EXPECT_EQ(format_number(-0.0), "0");
    EXPECT_EQ(format_number(15.0), "15");
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(2748771.0), "2748771");
    for (double v : {1.0 / 3.0, 0.16333997346592444, 1e-300, 123456789.125}) {
        EXPECT_EQ(std::stod(format_number(v)), v);
    }
}

TEST(ObservationCsv, ByteExactExample) {
    WeeklyObservation o;
    o.week = 1;
    o.enrollment = Eigen::Vector2d(5, 7);
    o.dropout = Eigen::Vector2d(0.125, 0);
    o.target = 1000;
    o.consumption_rate = Eigen::Vector3d(2.25, 0.75, 1);
    std::ostringstream out;
    write_observations_csv(out, {o});
    EXPECT_EQ(out.str(),
              "record,week,site,enrollment,dropout,target,consumption_rate\n"
              "site,1,1,5,0.125,,\n"
              "site,1,2,7,0,,\n"
              "trial,1,,,,1000,2.25;0.75;1\n");
}

TEST(ObservationCsv, RoundTripsAPath) {
    const auto path = generate_path(fixtures::reference_distributions(), fixtures::reference_model().trial, 31);
    const auto obs = observations_from_path(path, 12);
    std::stringstream buf;
    write_observations_csv(buf, obs);
    const auto back = read_observations_csv(buf, 5, 3);
    ASSERT_EQ(back.size(), 12u);
    EXPECT_EQ(back, obs);
}

TEST(ObservationCsv, RejectsMalformedInput) {
    const std::string header = "record,week,site,enrollment,dropout,target,consumption_rate\n";
    const auto reject = [](const std::string& text, int line) {
        std::istringstream in(text);
        try {
            read_observations_csv(in, 1, 2);
            ADD_FAILURE() << "accepted: " << text;
        } catch (const FormatError& e) {
            EXPECT_EQ(e.line(), line) << text;
        }
    };
    reject("week,site\n", 1);
    reject(header + "site,1,2,5,0,,\ntrial,1,,,,10,1;1\n", 2);
    reject(header + "site,1,1,x,0,,\n", 2);
    reject(header + "site,1,1,5,0,,\ntrial,1,,,,10,1\n", 3);
    reject(header + "bogus,1,1,5,0,,\n", 2);
    reject(header + "site,1,1,5,0\n", 2);
    reject(header + "site,1,1,5,0,,\n", 0);
    reject(header + "site,1,1,5,0,,\ntrial,1,,,,10,1;1\nsite,3,1,5,0,,\ntrial,3,,,,10,1;1\n", 0);
}

TEST(ObservationCsv, AcceptsCrlf) {
    std::istringstream in(
        "record,week,site,enrollment,dropout,target,consumption_rate\r\nsite,1,1,5,0,,\r\ntrial,1,,,,10,1;3\r\n");
    const auto obs = read_observations_csv(in, 1, 2);
    ASSERT_EQ(obs.size(), 1u);
    EXPECT_EQ(obs[0].consumption_rate, Eigen::Vector2d(1, 3));
}

TEST(TrajectoryCsv, GoldenInstanceByteExact) {
    const auto tr = rollout(golden_decisions(), fixtures::golden_path(), fixtures::golden_model());
    std::ostringstream out;
    write_trajectory_csv(out, tr);
    EXPECT_EQ(out.str(),
              "week,site,treatment,site_inventory,shipment,boxes,consumption,enrollment_open,supply_open,"
              "off_treatment,dc_inventory\n"
              "1,1,1,15,0,0,5,1,1,0,5\n"
              "2,1,1,5,5,1,10,1,1,5,0\n"
              "3,1,1,0,0,0,10,1,1,10,0\n");
}

TEST(TrajectoryCsv, TerminatedRunEndsAtZeroStock) {
    const auto m = fixtures::reference_model();
    const auto path = generate_path(fixtures::reference_distributions(), m.trial, 4);
    const auto ctx = ScenarioContext::build(path, m.trial);
    const auto d = expand_planning({3.0, 9.0, 14.0}, ctx.field, ctx.status.enrollment_open);
    const auto tr = rollout(d, path, m);
    ASSERT_TRUE(tr.feasible());
    std::ostringstream out;
    write_trajectory_csv(out, tr);
    std::istringstream in(out.str());
    std::string line;
    int rows = 0;
    std::vector<std::string> last;
    while (std::getline(in, line)) {
        ++rows;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        ASSERT_EQ(cells.size(), trajectory_columns().size());
        if (rows > 1 && std::stoi(cells[0]) == tr.last_week) EXPECT_EQ(cells[3], "0");
    }
    EXPECT_EQ(rows, 1 + tr.last_week * 15);
}

TEST(EventLog, SessionEventsRoundTrip) {
    const auto m = fixtures::reference_model();
    const auto dists = fixtures::reference_distributions();
    MonitorSettings s;
    s.n_sim = 3;
    s.evaluation_paths = 2;
    s.pso.max_iterations = 2;
    DecisionVars d;
    d.production = Eigen::Vector3d(20000, 10000, 10000);
    d.trigger = Eigen::MatrixXd::Constant(5, 3, 100);
    d.ceiling = Eigen::MatrixXd::Constant(5, 3, 200);
    auto session = start_session(d, dists, m, s, 12);
    const auto truth = generate_path(dists, m.trial, 99);
    for (int t = 1; t <= 8; ++t) advance(session, observation_from_path(truth, t));
    ASSERT_FALSE(session.events.empty());

    std::stringstream buf;
    write_event_log(buf, session.events);
    const auto back = read_event_log(buf);
    EXPECT_EQ(back, session.events);

    const auto fresh = start_session(d, dists, m, s, 12);
    const auto replayed = replay(fresh, back);
    EXPECT_EQ(replayed.state, session.state);
    EXPECT_EQ(replayed.decisions, session.decisions);
}

TEST(EventLog, LineShape) {
    Event e;
    e.week = 4;
    e.kind = EventKind::resupply;
    e.payload = ShipmentRecord{4, Eigen::Vector3d(0, 44, 44), 4, false};
    EXPECT_EQ(event_line(e), R"({"week":4,"kind":"resupply","payload":{"site":5,"doses":[0.0,44.0,44.0],"boxes":4,"reduced":false}})");
    EXPECT_EQ(event_from_json(Json::parse(event_line(e))), e);
}

TEST(EventLog, BadLinesReportTheirNumber) {
    std::istringstream in("\n{\"week\":1,\"kind\":\"bogus\",\"payload\":{}}\n");
    try {
        read_event_log(in);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_EQ(e.field(), "event.kind");
    }
}

TEST(Decisions, JsonRoundTrip) {
    const auto m = fixtures::reference_model();
    DecisionVars d;
    d.production = Eigen::Vector3d(19887, 10013, 9928);
    d.trigger = Eigen::MatrixXd::Constant(5, 3, 121);
    d.ceiling = Eigen::MatrixXd::Constant(5, 3, 165);
    EXPECT_EQ(decisions_from_json(decisions_to_json(d), m), d);
    auto j = decisions_to_json(d);
    j["trigger"].erase(0);
    EXPECT_THROW(decisions_from_json(j, m), FormatError);
}

TEST(Report, PlanningLayout) {
    PlanningResult r;
    r.decisions.production = Eigen::Vector2d(19886.2, 10013);
    r.decisions.trigger = (Eigen::MatrixXd(2, 2) << 238.4, 119, 243, 122).finished();
    r.decisions.ceiling = (Eigen::MatrixXd(2, 2) << 327, 163, 329, 165).finished();
    r.predicted_cost = 2748770.6;
    EXPECT_EQ(render_planning_report(r),
              "Recommended production amount (dose)\n"
              "             Treatment 1   Treatment 2\n"
              "                   19887         10013\n"
              "\n"
              "Trigger level (dose)\n"
              "             Treatment 1   Treatment 2\n"
              "Site 1               239           119\n"
              "Site 2               243           122\n"
              "\n"
              "Recommended inventory level (dose)\n"
              "             Treatment 1   Treatment 2\n"
              "Site 1               327           163\n"
              "Site 2               329           165\n"
              "\n"
              "Total cost (predicted): 2748771\n");
}

TEST(Report, FreshSessionShowsCeilingsAsInventory) {
    const auto m = fixtures::reference_model();
    DecisionVars d;
    d.production = Eigen::Vector3d(19887, 10013, 9928);
    d.trigger = Eigen::MatrixXd::Constant(5, 3, 120);
    d.ceiling = Eigen::MatrixXd::Constant(5, 3, 165);
    d.ceiling(0, 0) = 327;
    const auto session = start_session(d, fixtures::reference_distributions(), m, MonitorSettings{}, 1);
    const auto rep = checkpoint_report(session);
    EXPECT_EQ(rep.week, 0);
    EXPECT_EQ(rep.checkpoint, 1);
    EXPECT_EQ(rep.inventory, d.ceiling);
    EXPECT_EQ(rep.resupply, d.ceiling);
    EXPECT_FALSE(rep.predicted_remaining_cost);
    const auto text = render_checkpoint_report(rep);
    EXPECT_EQ(text.rfind("Check point 1 (week 0)\n\nCurrent inventory at sites (dose)\n", 0), 0u);
    EXPECT_NE(text.find("Resupply amount (dose)"), std::string::npos);
    EXPECT_NE(text.find("Updated trigger level (dose)"), std::string::npos);
    EXPECT_NE(text.find("Updated recommended inventory level (dose)"), std::string::npos);
    EXPECT_NE(text.find("Site 1               327"), std::string::npos);
}

TEST(Report, SummaryLine) {
    RunSummary s;
    s.produced = Eigen::Vector2d(30000, 12660.4);
    s.consumed = Eigen::Vector2d(20000, 7039);
    s.utilization = 27039.0 / 42660.4;
    s.shutdowns = 0;
    s.cost.total = 3967337.5;
    s.duration = 95;
    EXPECT_EQ(render_summary_line(s),
              "production=42660 consumption=27039 ratio=0.634 shutdowns=0 cost=3967338 duration=95");
}
