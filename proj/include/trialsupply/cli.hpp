#pragma once

#include "trialsupply/io_formats.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace trialsupply {

/// One end-to-end run: plan, draw a hidden truth, monitor it week by week.
struct SimulationRun {
    PlanningResult planning;
    MonitorSession session;
    RunSummary summary;
    std::vector<CheckpointReport> checkpoints;  // week 0, then every optimization week reached
    std::vector<WeeklyObservation> observations;
};

/// Truth uses `true_mu` as the enrollment mean when given; planning and
/// monitoring keep the runspec's mean. `freeze` disables re-estimation.
SimulationRun simulate_run(const RunSpec& spec, Seed seed, std::optional<double> true_mu = std::nullopt,
                           bool freeze = false);

/// Monitors a given truth path from fixed decisions.
SimulationRun monitor_truth(const RunSpec& spec, const PlanningResult& planning, const ScenarioPath& truth,
                            Seed seed, bool freeze = false);

Seed truth_seed(Seed master);

enum ExitCode { exit_ok = 0, exit_usage = 2, exit_config = 2, exit_optimization = 3 };

/// Runs one command line (without the program name). Files go under --out.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trialsupply
