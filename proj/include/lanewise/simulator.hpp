#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "lanewise/lanechange.hpp"
#include "lanewise/qtable.hpp"

namespace lanewise {

struct SimConfig {
  Scenario scenario;
  std::uint64_t trials = 100000;
  double dt = 0.1;                         // s
  double checkpoint_interval = 500.0;      // m
  std::uint64_t seed = 0;
  std::optional<double> jitter_speed_kmh;  // per-vehicle speed spread, off when empty
  unsigned threads = 0;                    // 0 = hardware concurrency

  void validate() const;
  // interval, 2 * interval, ... up to the goal, plus the goal itself when it
  // is not a multiple of the interval.
  std::vector<double> checkpoints() const;
};

struct SimReport {
  std::vector<double> checkpoints;
  std::vector<std::uint64_t> pass_counts;
  std::uint64_t trials = 0;
  std::vector<double> probabilities;
  std::vector<double> ci_halfwidths;  // 1.96 * sqrt(p (1 - p) / trials)
};

// State of the ego after one time step of one trial.
struct TraceStep {
  std::uint64_t trial;
  std::uint64_t step;
  double position;    // m, after the motion update
  double speed;       // m/s used for this step
  std::size_t lane;   // index into scenario.lanes
  bool maneuvering;
};
using TraceFn = std::function<void(const TraceStep&)>;

// Time-stepped gap-acceptance oracle. A trace callback forces single-threaded
// execution and is invoked for every step of every trial.
SimReport run_trials(const SimConfig& config, const TraceFn& trace = {});

struct ModelComparison {
  SimReport sim;
  std::vector<double> model;       // P(S) at each checkpoint
  std::vector<double> errors;      // model - sim
  std::vector<double> abs_errors;
  double max_abs_error = 0.0;
  double mean_abs_error = 0.0;
};

ModelComparison compare_with_model(const SimConfig& config, const QTable& table);

// checkpoint_m,passes,trials,p,ci95
void write_sim_report_csv(std::ostream& out, const SimReport& report);
// checkpoint_m,sim_p,model_p,error,abs_error
void write_comparison_csv(std::ostream& out, const ModelComparison& cmp);

}  // namespace lanewise
