#include <doctest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include "lanewise/errors.hpp"
#include "lanewise/estimation.hpp"
#include "lanewise/simulator.hpp"
#include "test_support.hpp"

using namespace lanewise;

namespace {

SimConfig base_config(std::vector<double> speeds_kmh, std::uint64_t trials, std::uint64_t seed = 1) {
  TrafficSpec spec;
  spec.speeds_kmh = std::move(speeds_kmh);
  SimConfig cfg;
  cfg.scenario = {profiles_from_spec(spec), 5000.0};
  cfg.trials = trials;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("checkpoints") {
  SimConfig cfg = base_config({120, 110}, 1);
  CHECK(cfg.checkpoints() == std::vector<double>{500, 1000, 1500, 2000, 2500, 3000, 3500, 4000, 4500, 5000});
  cfg.scenario.goal_distance = 1200.0;
  CHECK(cfg.checkpoints() == std::vector<double>{500, 1000, 1200});
  cfg.scenario.goal_distance = 300.0;
  CHECK(cfg.checkpoints() == std::vector<double>{300});
}

TEST_CASE("config validation") {
  SimConfig cfg = base_config({120, 110}, 10);
  cfg.trials = 0;
  CHECK_THROWS_AS(run_trials(cfg), ConfigError);
  cfg = base_config({120, 110}, 10);
  cfg.dt = 0.0;
  CHECK_THROWS_AS(run_trials(cfg), ConfigError);
  cfg = base_config({120, 110}, 10);
  cfg.checkpoint_interval = -1.0;
  CHECK_THROWS_AS(run_trials(cfg), ConfigError);
  cfg = base_config({120, 110}, 10);
  cfg.scenario.lanes[1].mu = -40.0;
  CHECK_THROWS_AS(run_trials(cfg), ConfigError);
}

TEST_CASE("any gap is acceptable when the critical gap vanishes") {
  SimConfig cfg = base_config({120, 110}, 2000);
  cfg.scenario.lanes[1].g_crit = 1e-9;
  const SimReport r = run_trials(cfg);
  for (double p : r.probabilities) CHECK(p == 1.0);
}

TEST_CASE("tiny headways leave no acceptable gap") {
  SimConfig cfg = base_config({120, 110}, 200);
  cfg.scenario.lanes[1].mu = -5.0;
  const SimReport r = run_trials(cfg);
  CHECK(r.probabilities.back() == 0.0);
}

TEST_CASE("report invariants and determinism") {
  SimConfig cfg = base_config({120, 110, 100}, 3000, 42);
  const SimReport a = run_trials(cfg);
  const SimReport b = run_trials(cfg);
  CHECK(a.pass_counts == b.pass_counts);
  cfg.threads = 3;
  CHECK(run_trials(cfg).pass_counts == a.pass_counts);
  REQUIRE(a.checkpoints.size() == 10);
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    CHECK(a.pass_counts[i] <= a.trials);
    if (i > 0) CHECK(a.pass_counts[i] >= a.pass_counts[i - 1]);
    const double p = static_cast<double>(a.pass_counts[i]) / 3000.0;
    CHECK(a.probabilities[i] == p);
    CHECK(a.ci_halfwidths[i] == doctest::Approx(1.96 * std::sqrt(p * (1 - p) / 3000.0)));
  }
  cfg.seed = 43;
  CHECK(run_trials(cfg).pass_counts != a.pass_counts);

  std::ostringstream csv;
  write_sim_report_csv(csv, a);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "checkpoint_m,passes,trials,p,ci95");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 10);
}

TEST_CASE("the ego moves continuously and changes one lane per maneuver") {
  SimConfig cfg = base_config({120, 110, 100, 90}, 40, 3);
  cfg.scenario.goal_distance = 5000.0;
  std::uint64_t current = ~0ull;
  double pos = 0.0;
  std::size_t lane = 0;
  bool was_maneuvering = false;
  std::uint64_t maneuver_steps = 0;
  std::uint64_t expected_step = 0;
  bool ok = true;
  const auto steps_per_change = static_cast<std::uint64_t>(std::llround(3.0 / cfg.dt));
  run_trials(cfg, [&](const TraceStep& s) {
    if (s.trial != current) {
      current = s.trial;
      pos = 0.0;
      lane = 0;
      was_maneuvering = false;
      maneuver_steps = 0;
      expected_step = 0;
    }
    ok = ok && s.step == expected_step++;
    ok = ok && std::abs(s.position - (pos + s.speed * cfg.dt)) < 1e-9 && s.position > pos;
    ok = ok && s.speed == cfg.scenario.lanes[s.lane].v;
    ok = ok && (s.lane == lane || (s.lane == lane + 1 && was_maneuvering && maneuver_steps == steps_per_change));
    if (s.lane != lane) maneuver_steps = 0;
    maneuver_steps = s.maneuvering ? maneuver_steps + 1 : 0;
    ok = ok && maneuver_steps <= steps_per_change;
    pos = s.position;
    lane = s.lane;
    was_maneuvering = s.maneuvering;
  });
  CHECK(ok);
}

TEST_CASE("halving the time step barely moves the estimate") {
  SimConfig cfg = base_config({120, 110}, 100000, 5);
  const SimReport coarse = run_trials(cfg);
  cfg.dt = 0.05;
  const SimReport fine = run_trials(cfg);
  for (std::size_t i = 0; i < coarse.probabilities.size(); ++i)
    CHECK(std::abs(coarse.probabilities[i] - fine.probabilities[i]) <= 0.005);
}

TEST_CASE("comparison record" * doctest::test_suite("default_table")) {
  SimConfig cfg = base_config({120, 110}, 1, 9);
  const ModelComparison one = compare_with_model(cfg, test::default_table());
  REQUIRE(one.model.size() == 10);
  CHECK(one.errors.size() == 10);
  CHECK(one.max_abs_error <= 1.0);
  CHECK(one.mean_abs_error <= one.max_abs_error);
  for (std::size_t i = 0; i < 10; ++i) CHECK(one.abs_errors[i] == std::abs(one.errors[i]));

  cfg.trials = 20000;
  const ModelComparison cmp = compare_with_model(cfg, test::default_table());
  CHECK(cmp.max_abs_error <= 0.03);
  std::ostringstream csv;
  write_comparison_csv(csv, cmp);
  CHECK(csv.str().rfind("checkpoint_m,sim_p,model_p,error,abs_error\n", 0) == 0);
}

TEST_CASE("speed jitter makes equal-speed lanes improve with distance" * doctest::test_suite("default_table")) {
  SimConfig cfg = base_config({110, 110}, 4000, 12);
  cfg.jitter_speed_kmh = 5.0;
  const ModelComparison cmp = compare_with_model(cfg, test::default_table());
  CHECK(cmp.model.front() == cmp.model.back());
  CHECK(cmp.sim.probabilities.back() > cmp.sim.probabilities.front() + 0.05);
}
