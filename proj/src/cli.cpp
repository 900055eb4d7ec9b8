#include "trialsupply/cli.hpp"

#include "trialsupply/service.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace trialsupply {

Seed truth_seed(Seed master) { return derive_seed(master, "truth"); }

SimulationRun monitor_truth(const RunSpec& spec, const PlanningResult& planning, const ScenarioPath& truth, Seed seed,
                            bool freeze) {
    MonitorSettings settings = spec.monitor;
    if (freeze) settings.reestimate = false;
    SimulationRun run;
    run.planning = planning;
    run.session = start_session(planning.decisions, spec.dists, spec.model, settings, seed);
    run.checkpoints.push_back(checkpoint_report(run.session));
    const auto& trial = spec.model.trial;
    for (int t = 1; t <= trial.horizon && !run.session.terminated(); ++t) {
        run.observations.push_back(observation_from_path(truth, t));
        advance(run.session, run.observations.back());
        if (trial.is_optimization(t) && !run.session.terminated()) run.checkpoints.push_back(checkpoint_report(run.session));
    }
    run.summary = summarize(run.session);
    return run;
}

SimulationRun simulate_run(const RunSpec& spec, Seed seed, std::optional<double> true_mu, bool freeze) {
    const PlanningResult planning = plan(spec.dists, spec.model, spec.planner, seed);
    ScenarioDistributions truth_dists = spec.dists;
    if (true_mu) truth_dists.enrollment_mean = *true_mu;
    const ScenarioPath truth = generate_path(truth_dists, spec.model.trial, truth_seed(seed));
    return monitor_truth(spec, planning, truth, seed, freeze);
}

namespace {

struct Options {
    std::string runspec;
    std::optional<Seed> seed;
    std::string out;
    std::optional<int> n_sim;
    std::vector<double> true_mu;
    bool freeze = false;
    int replicates = 0;
    std::vector<Seed> seeds;
    std::string serve_addr = "127.0.0.1:8080";
    std::string token;
    std::string data_dir;
};

class Output {
  public:
    explicit Output(std::string dir) : dir_(std::move(dir)) {
        if (!dir_.empty()) std::filesystem::create_directories(dir_);
    }

    void write(const std::string& name, const std::string& content) const {
        if (dir_.empty()) return;
        std::ofstream f(std::filesystem::path(dir_) / name, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + (std::filesystem::path(dir_) / name).string());
        f << content;
    }

  private:
    std::string dir_;
};

template <typename Fn>
std::string to_text(Fn&& fn) {
    std::ostringstream os;
    fn(os);
    return os.str();
}

RunSpec load(const Options& o) {
    RunSpec spec = load_runspec_file(o.runspec);
    if (o.seed) spec.seed = *o.seed;
    if (o.n_sim) {
        spec.planner.n_sim = *o.n_sim;
        if (*o.n_sim < 1) {
            ValidationReport r;
            r.errors.push_back({"--n-sim", std::to_string(*o.n_sim), "must be >= 1"});
            throw ConfigError(r);
        }
    }
    return spec;
}

std::vector<Seed> seed_list(const Options& o, const RunSpec& spec, int default_count) {
    if (!o.seeds.empty()) return o.seeds;
    const int n = o.replicates > 0 ? o.replicates : default_count;
    std::vector<Seed> out;
    for (int k = 0; k < n; ++k) out.push_back(spec.seed + static_cast<Seed>(k));
    return out;
}

void write_planning(const Output& files, const PlanningResult& r) {
    files.write("plan_report.txt", render_planning_report(r));
    files.write("decisions.json", decisions_to_json(r.decisions).dump(2) + "\n");
    files.write("scenarios.csv", to_text([&](std::ostream& os) { write_scenarios_csv(os, r); }));
    files.write("traces.csv", to_text([&](std::ostream& os) { write_traces_csv(os, r); }));
}

const char* summary_header = "seed,production,consumption,ratio,shutdowns,cost,duration\n";

std::string summary_row(Seed seed, const RunSummary& s) {
    std::ostringstream os;
    os << seed << "," << format_number(s.produced.sum()) << "," << format_number(s.consumed.sum()) << ","
       << format_number(s.utilization) << "," << s.shutdowns << "," << format_number(s.cost.total) << ","
       << s.duration << "\n";
    return os.str();
}

int cmd_plan(const Options& o, std::ostream& out) {
    const RunSpec spec = load(o);
    const Output files(o.out);
    const PlanningResult r = plan(spec.dists, spec.model, spec.planner, spec.seed);
    write_planning(files, r);
    out << render_planning_report(r);
    return exit_ok;
}

int cmd_simulate(const Options& o, std::ostream& out) {
    const RunSpec spec = load(o);
    const Output files(o.out);
    std::optional<double> mu;
    if (!o.true_mu.empty()) mu = o.true_mu.front();
    const SimulationRun run = simulate_run(spec, spec.seed, mu, o.freeze);
    write_planning(files, run.planning);
    files.write("observations.csv", to_text([&](std::ostream& os) { write_observations_csv(os, run.observations); }));
    files.write("trajectory.csv",
                to_text([&](std::ostream& os) { write_trajectory_csv(os, run.session.trajectory); }));
    files.write("events.jsonl", to_text([&](std::ostream& os) { write_event_log(os, run.session.events); }));
    std::string reports;
    for (const auto& c : run.checkpoints) reports += (reports.empty() ? "" : "\n") + render_checkpoint_report(c);
    files.write("checkpoints.txt", reports);
    const std::string line = render_summary_line(run.summary) + "\n";
    files.write("summary.txt", line);
    out << line;
    return exit_ok;
}

int cmd_replicate(const Options& o, std::ostream& out) {
    const RunSpec spec = load(o);
    const Output files(o.out);
    std::optional<double> mu;
    if (!o.true_mu.empty()) mu = o.true_mu.front();
    std::string table = summary_header;
    for (Seed seed : seed_list(o, spec, 4)) {
        const auto run = simulate_run(spec, seed, mu, o.freeze);
        table += summary_row(seed, run.summary);
        out << "seed " << seed << ": " << render_summary_line(run.summary) << "\n";
    }
    files.write("replicate.csv", table);
    return exit_ok;
}

int cmd_sensitivity(const Options& o, std::ostream& out) {
    const RunSpec spec = load(o);
    const Output files(o.out);
    const std::vector<double> mus = o.true_mu.empty() ? std::vector<double>{4, 5, 7, 8} : o.true_mu;
    const auto seeds = seed_list(o, spec, 5);

    // Planning depends only on the seed, so every true mean shares the plan.
    std::vector<PlanningResult> plans;
    for (Seed seed : seeds) plans.push_back(plan(spec.dists, spec.model, spec.planner, seed));

    std::string runs = "true_mu," + std::string(summary_header);
    std::ostringstream table;
    table << "true_mu,runs,production,consumption,ratio,shutdowns,cost,duration\n";
    out << std::setw(6) << "mu" << std::setw(12) << "production" << std::setw(13) << "consumption" << std::setw(8)
        << "ratio" << std::setw(10) << "shutdown" << std::setw(12) << "cost" << std::setw(10) << "duration\n";
    for (double mu : mus) {
        ScenarioDistributions truth_dists = spec.dists;
        truth_dists.enrollment_mean = mu;
        double produced = 0, consumed = 0, ratio = 0, shutdowns = 0, cost = 0, duration = 0;
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            const auto truth = generate_path(truth_dists, spec.model.trial, truth_seed(seeds[k]));
            const auto run = monitor_truth(spec, plans[k], truth, seeds[k], o.freeze);
            runs += format_number(mu) + "," + summary_row(seeds[k], run.summary);
            produced += run.summary.produced.sum();
            consumed += run.summary.consumed.sum();
            ratio += run.summary.utilization;
            shutdowns += run.summary.shutdowns;
            cost += run.summary.cost.total;
            duration += run.summary.duration;
        }
        const double n = static_cast<double>(seeds.size());
        table << format_number(mu) << "," << seeds.size() << "," << format_number(produced / n) << ","
              << format_number(consumed / n) << "," << format_number(ratio / n) << "," << format_number(shutdowns / n)
              << "," << format_number(cost / n) << "," << format_number(duration / n) << "\n";
        out << std::setw(6) << format_number(mu) << std::setw(12) << std::llround(produced / n) << std::setw(13)
            << std::llround(consumed / n) << std::fixed << std::setprecision(3) << std::setw(8) << ratio / n
            << std::setprecision(2) << std::setw(10) << shutdowns / n << std::setw(12) << std::llround(cost / n)
            << std::setprecision(1) << std::setw(10) << duration / n << "\n"
            << std::defaultfloat;
    }
    files.write("sensitivity_runs.csv", runs);
    files.write("sensitivity.csv", table.str());
    return exit_ok;
}

int cmd_serve(const Options& o, std::ostream& out) {
    const auto colon = o.serve_addr.rfind(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--serve-addr", "expected HOST:PORT");
    const std::string host = o.serve_addr.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(o.serve_addr.substr(colon + 1));
    } catch (const std::exception&) {
        throw CLI::ValidationError("--serve-addr", "port is not a number");
    }
    ServiceOptions opts;
    opts.token = o.token;
    opts.data_dir = o.data_dir;
    SessionService service(opts);
    const std::size_t recovered = service.recover();
    out << "recovered " << recovered << " sessions\n" << std::flush;
    HttpFrontend http(service);
    const int bound = http.start(host, port);
    if (bound < 0) throw std::runtime_error("cannot listen on " + o.serve_addr);
    out << "listening on " << host << ":" << bound << "\n" << std::flush;
    http.wait();
    return exit_ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app("Drug supply planning and monitoring for adaptive trials", "trialsupply");
    app.require_subcommand(1, 1);
    Options o;

    const auto common = [&](CLI::App* cmd) {
        cmd->add_option("--runspec", o.runspec, "Run specification (JSON)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--seed", o.seed, "Master seed; overrides the runspec");
        cmd->add_option("--out", o.out, "Output directory");
        cmd->add_option("--n-sim", o.n_sim, "Planning scenarios");
    };
    auto* plan_cmd = app.add_subcommand("plan", "Optimize production and initial thresholds");
    common(plan_cmd);
    auto* sim_cmd = app.add_subcommand("simulate", "Plan, then monitor one simulated trial");
    common(sim_cmd);
    auto* rep_cmd = app.add_subcommand("replicate", "simulate over several seeds");
    common(rep_cmd);
    auto* sens_cmd = app.add_subcommand("sensitivity", "Monitor truths drawn at other enrollment means");
    common(sens_cmd);
    for (auto* cmd : {sim_cmd, rep_cmd, sens_cmd}) {
        cmd->add_option("--true-mu", o.true_mu, "Enrollment mean of the hidden truth")->delimiter(',');
        cmd->add_flag("--freeze-reestimation", o.freeze, "Keep the assumed enrollment mean");
    }
    for (auto* cmd : {rep_cmd, sens_cmd}) {
        cmd->add_option("--replicates", o.replicates, "Consecutive seeds from --seed")->check(CLI::PositiveNumber);
        cmd->add_option("--seeds", o.seeds, "Explicit seed list")->delimiter(',');
    }
    auto* serve_cmd = app.add_subcommand("serve", "Run the session HTTP service");
    serve_cmd->add_option("--serve-addr", o.serve_addr, "HOST:PORT");
    serve_cmd->add_option("--token", o.token, "Static bearer token");
    serve_cmd->add_option("--data-dir", o.data_dir, "Session log directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*plan_cmd) return cmd_plan(o, out);
        if (*sim_cmd) return cmd_simulate(o, out);
        if (*rep_cmd) return cmd_replicate(o, out);
        if (*sens_cmd) return cmd_sensitivity(o, out);
        return cmd_serve(o, out);
    } catch (const CLI::Error& e) {
        err << e.what() << "\n";
        return exit_usage;
    } catch (const FormatError& e) {
        err << "runspec error: " << e.what() << "\n";
        return exit_config;
    } catch (const ConfigError& e) {
        err << "invalid configuration:\n" << e.report().summary() << "\n";
        return exit_config;
    } catch (const PlanningFailure& e) {
        err << "planning failed: " << e.what() << "\n"
            << "no admissible starting swarm was found even after widening the bounds; raise the upper bounds in "
               "planner.pso.bounds (the production multiplier first) or increase planner.pso.init_retry_limit\n";
        return exit_optimization;
    } catch (const MonitorError& e) {
        err << "monitoring error: " << e.what() << "\n";
        return exit_config;
    }
}

}  // namespace trialsupply
