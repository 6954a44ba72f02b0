#include "lanewise/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "lanewise/errors.hpp"
#include "lanewise/random.hpp"

namespace lanewise {

namespace {

constexpr std::size_t kMaxVehiclesPerLane = 5'000'000;
constexpr double kNever = std::numeric_limits<double>::infinity();

}  // namespace

void SimConfig::validate() const {
  scenario.validate();
  if (trials == 0) throw ConfigError("trials must be >= 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError(fmt::format("dt must be positive, got {}", dt));
  if (!(checkpoint_interval > 0.0))
    throw ConfigError(fmt::format("checkpoint interval must be positive, got {}", checkpoint_interval));
  if (jitter_speed_kmh && !(*jitter_speed_kmh >= 0.0)) throw ConfigError("speed jitter must be >= 0");
}

std::vector<double> SimConfig::checkpoints() const {
  std::vector<double> out;
  const double goal = scenario.goal_distance;
  for (std::size_t k = 1;; ++k) {
    const double c = static_cast<double>(k) * checkpoint_interval;
    if (c > goal * (1.0 + 1e-12)) break;
    out.push_back(c);
  }
  if (out.empty() || goal - out.back() > 1e-9 * goal) out.push_back(goal);
  return out;
}

namespace {

// Vehicles of one lane at t = 0. `speeds` is empty unless jitter is on.
struct LaneTraffic {
  std::vector<double> x;
  std::vector<double> speeds;
};

struct TrialPlan {
  double horizon_time;              // s, upper bound on any trial's duration
  std::vector<double> reach;        // per lane, max lane-frame excursion of the ego
  std::vector<std::uint64_t> steps; // per lane, maneuver length in steps
};

TrialPlan plan_trials(const SimConfig& cfg, double goal) {
  const auto& lanes = cfg.scenario.lanes;
  double slowest = lanes[0].v;
  for (std::size_t k = 0; k + 1 < lanes.size(); ++k) slowest = std::min(slowest, lanes[k].v);
  TrialPlan plan;
  plan.horizon_time = goal / slowest + cfg.dt;
  const double jitter = cfg.jitter_speed_kmh.value_or(0.0) / 3.6;
  plan.reach.assign(lanes.size(), 0.0);
  plan.steps.assign(lanes.size(), 0);
  for (std::size_t j = 1; j < lanes.size(); ++j) {
    double rel = 0.0;
    for (std::size_t k = 0; k + 1 < lanes.size(); ++k) rel = std::max(rel, std::abs(lanes[k].v - lanes[j].v));
    plan.reach[j] = plan.horizon_time * (rel + jitter);
    plan.steps[j] = static_cast<std::uint64_t>(std::llround(lanes[j].t_lc / cfg.dt));
  }
  return plan;
}

double lognormal_draw(Rng& rng, std::normal_distribution<double>& normal, const LaneProfile& lane) {
  if (lane.sigma == 0.0) return std::exp(lane.mu);
  return std::exp(lane.mu + lane.sigma * normal(rng));
}

// Positions cover [-(reach + 10 m), reach + 10 m] around the ego start after a
// burn-in of 20 mean headways, which lets the renewal process forget its
// starting phase.
LaneTraffic generate_lane(const LaneProfile& lane, double reach, double jitter_kmh, Rng& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  const double m = lane.mean_headway();
  const double lo = -(reach + 10.0 * m);
  const double hi = reach + 10.0 * m;
  const double expected = (hi - lo + 20.0 * m) / m;
  if (!std::isfinite(expected) || expected > static_cast<double>(kMaxVehiclesPerLane))
    throw ConfigError(fmt::format("lane traffic needs about {:.3g} vehicles per trial; parameters are degenerate",
                                  expected));

  LaneTraffic out;
  double prev = lo - 20.0 * m;
  double pos = prev + unit(rng) * lognormal_draw(rng, normal, lane);
  while (pos < lo) {
    prev = pos;
    pos += lognormal_draw(rng, normal, lane);
  }
  // The last vehicle below the window keeps every position in range bracketed.
  out.x.push_back(prev);
  while (true) {
    out.x.push_back(pos);
    if (pos > hi) break;
    pos += lognormal_draw(rng, normal, lane);
    if (out.x.size() > kMaxVehiclesPerLane)
      throw ConfigError("lane traffic exceeds the vehicle limit; parameters are degenerate");
  }

  if (jitter_kmh > 0.0) {
    std::normal_distribution<double> spread(0.0, jitter_kmh / 2.0);
    out.speeds.resize(out.x.size());
    for (auto& s : out.speeds) {
      double dv = 0.0;
      do dv = spread(rng);
      while (std::abs(dv) > jitter_kmh);
      s = lane.v + dv / 3.6;
    }
  }
  return out;
}

// Gap test for an ego at lane-frame position r against sorted positions,
// keeping `idx` so that x[idx] <= r < x[idx + 1].
bool gap_ok_sorted(const std::vector<double>& x, std::size_t& idx, double r, double half_gap) {
  while (idx + 1 < x.size() && x[idx + 1] <= r) ++idx;
  while (idx > 0 && x[idx] > r) --idx;
  if (idx + 1 >= x.size() || x[idx] > r)
    throw ConfigError(fmt::format("ego left the generated traffic window at {} m", r));
  return r - x[idx] >= half_gap && x[idx + 1] - r >= half_gap;
}

bool gap_ok_scan(const LaneTraffic& lane, double t, double ego, double half_gap) {
  double lead = kNever;
  double trail = kNever;
  for (std::size_t k = 0; k < lane.x.size(); ++k) {
    const double d = lane.x[k] + lane.speeds[k] * t - ego;
    if (d >= 0.0) lead = std::min(lead, d);
    else trail = std::min(trail, -d);
  }
  return lead >= half_gap && trail >= half_gap;
}

// Arrival position on the goal lane, or infinity when the ego does not get
// there before passing `goal`.
double run_one(const SimConfig& cfg, const TrialPlan& plan, double goal, std::uint64_t trial,
               const TraceFn& trace) {
  const auto& lanes = cfg.scenario.lanes;
  const double jitter = cfg.jitter_speed_kmh.value_or(0.0);
  Rng rng = make_stream(cfg.seed, trial);
  std::vector<LaneTraffic> traffic(lanes.size());
  for (std::size_t j = 1; j < lanes.size(); ++j) traffic[j] = generate_lane(lanes[j], plan.reach[j], jitter, rng);

  std::size_t lane = 0;
  double speed = lanes[0].v;
  double ego = 0.0;
  std::uint64_t remaining = 0;  // maneuver steps left, 0 when searching
  bool maneuvering = false;
  std::size_t idx = 0;
  bool idx_ready = false;
  const auto max_steps = static_cast<std::uint64_t>(std::ceil(plan.horizon_time / cfg.dt)) + 1;

  for (std::uint64_t step = 0; step < max_steps; ++step) {
    const double t = static_cast<double>(step) * cfg.dt;
    while (!maneuvering) {
      const LaneProfile& target = lanes[lane + 1];
      const double half = 0.5 * target.g_crit;
      bool ok = false;
      if (jitter > 0.0) {
        ok = gap_ok_scan(traffic[lane + 1], t, ego, half);
      } else {
        const double r = ego - target.v * t;
        const auto& x = traffic[lane + 1].x;
        if (!idx_ready) {
          idx = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), r) - x.begin());
          idx = idx == 0 ? 0 : idx - 1;
          idx_ready = true;
        }
        ok = gap_ok_sorted(x, idx, r, half);
        // Same speed as the target lane: the view never changes.
        if (!ok && speed == target.v) return kNever;
      }
      if (!ok) break;
      maneuvering = true;
      remaining = plan.steps[lane + 1];
      if (remaining == 0) {
        // Zero-duration change: complete it and search the next lane at once.
        maneuvering = false;
        idx_ready = false;
        speed = lanes[++lane].v;
        if (lane + 1 == lanes.size()) return ego;
      }
    }

    ego += speed * cfg.dt;
    if (maneuvering) --remaining;
    if (trace) trace({trial, step, ego, speed, lane, maneuvering});

    if (maneuvering && remaining == 0) {
      maneuvering = false;
      idx_ready = false;
      speed = lanes[++lane].v;
      if (lane + 1 == lanes.size()) return ego;
    }
    if (ego > goal) return kNever;
  }
  return kNever;
}

}  // namespace

SimReport run_trials(const SimConfig& config, const TraceFn& trace) {
  config.validate();
  const std::vector<double> checkpoints = config.checkpoints();
  const double goal = checkpoints.back();
  const TrialPlan plan = plan_trials(config, goal);

  std::vector<double> arrival(config.trials, kNever);
  unsigned threads = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
  if (trace) threads = 1;
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, config.trials));

  std::atomic<std::uint64_t> next{0};
  auto worker = [&] {
    for (std::uint64_t i = next++; i < config.trials; i = next++) arrival[i] = run_one(config, plan, goal, i, trace);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::sort(arrival.begin(), arrival.end());
  SimReport report;
  report.checkpoints = checkpoints;
  report.trials = config.trials;
  const auto n = static_cast<double>(config.trials);
  for (double c : checkpoints) {
    const auto passes = static_cast<std::uint64_t>(std::upper_bound(arrival.begin(), arrival.end(), c) - arrival.begin());
    const double p = static_cast<double>(passes) / n;
    report.pass_counts.push_back(passes);
    report.probabilities.push_back(p);
    report.ci_halfwidths.push_back(1.96 * std::sqrt(p * (1.0 - p) / n));
  }
  return report;
}

ModelComparison compare_with_model(const SimConfig& config, const QTable& table) {
  ModelComparison cmp;
  cmp.sim = run_trials(config);
  const Eigen::ArrayXd model = evaluate_at(config.scenario, table, cmp.sim.checkpoints);
  double sum = 0.0;
  for (std::size_t i = 0; i < cmp.sim.checkpoints.size(); ++i) {
    const double m = model[static_cast<Eigen::Index>(i)];
    const double e = m - cmp.sim.probabilities[i];
    cmp.model.push_back(m);
    cmp.errors.push_back(e);
    cmp.abs_errors.push_back(std::abs(e));
    cmp.max_abs_error = std::max(cmp.max_abs_error, std::abs(e));
    sum += std::abs(e);
  }
  cmp.mean_abs_error = sum / static_cast<double>(cmp.errors.size());
  return cmp;
}

void write_sim_report_csv(std::ostream& out, const SimReport& report) {
  out << "checkpoint_m,passes,trials,p,ci95\n";
  for (std::size_t i = 0; i < report.checkpoints.size(); ++i)
    out << fmt::format("{},{},{},{},{}\n", report.checkpoints[i], report.pass_counts[i], report.trials,
                       report.probabilities[i], report.ci_halfwidths[i]);
}

void write_comparison_csv(std::ostream& out, const ModelComparison& cmp) {
  out << "checkpoint_m,sim_p,model_p,error,abs_error\n";
  for (std::size_t i = 0; i < cmp.model.size(); ++i)
    out << fmt::format("{},{},{},{},{}\n", cmp.sim.checkpoints[i], cmp.sim.probabilities[i], cmp.model[i],
                       cmp.errors[i], cmp.abs_errors[i]);
}

}  // namespace lanewise
