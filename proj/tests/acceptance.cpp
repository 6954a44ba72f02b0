// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "lanewise/cli.hpp"
#include "lanewise/estimation.hpp"
#include "lanewise/lanechange.hpp"
#include "lanewise/qtable.hpp"
#include "lanewise/simulator.hpp"
#include "oracles.hpp"

using namespace lanewise;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << fmt::format("[{}] criterion {}: {} -- {}\n", pass ? "PASS" : "FAIL", id, title, detail) << std::flush;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Scenario base_case(std::vector<double> speeds_kmh, double d, double rho = 1200.0, double delta = 2.0) {
  TrafficSpec spec;
  spec.rho_l = rho;
  spec.delta = delta;
  spec.speeds_kmh = std::move(speeds_kmh);
  return {profiles_from_spec(spec), d};
}

double at_1km(const Scenario& s, const QTable& t) {
  const double d[] = {1000.0};
  return evaluate_at(s, t, d)[0];
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string cli_output(const std::vector<std::string>& args, int& code) {
  std::ostringstream out, err;
  code = cli::run(args, out, err);
  return out.str();
}

struct Tuple {
  double g, mu, sigma, published;
};
const Tuple kPublished[] = {{0.2, -2, 0.4, 0.6924}, {0.2, -2, 0.8, 0.9538}, {0.2, -1, 0.4, 1.0},    {0.2, -1, 0.8, 0.9999},
                            {0.5, -2, 0.4, 0.0021}, {0.5, -2, 0.8, 0.2012}, {0.5, -1, 0.4, 0.3567}, {0.5, -1, 0.8, 0.6602}};

void criterion_1() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string rows;
  for (const auto& t : kPublished) {
    const double q = estimate_q({t.g, t.mu, t.sigma}, 100000, 7);
    worst = std::max(worst, std::abs(q - t.published));
    rows += fmt::format(" {:.4f}/{:.4f}", q, t.published);
  }
  const double secs = seconds_since(start);
  report(1, "published q values at 1e5 trials", worst <= 0.015 && secs < 60.0,
         fmt::format("max |err| {:.4f} <= 0.015, {:.2f} s; got/published:{}", worst, secs, rows));
}

void criterion_2() {
  const int replicates = 30;
  std::vector<double> means, spreads;
  std::string rows;
  bool pass = true;
  for (std::uint64_t n : {100ull, 1000ull, 10000ull, 100000ull}) {
    std::vector<double> est;
    for (int r = 0; r < replicates; ++r) est.push_back(estimate_q({0.2, -2, 0.4}, n, 2, static_cast<std::uint64_t>(r)));
    const double mean = std::accumulate(est.begin(), est.end(), 0.0) / replicates;
    double ss = 0.0;
    for (double e : est) ss += (e - mean) * (e - mean);
    const double sd = std::sqrt(ss / (replicates - 1));
    // The replicate mean is unbiased around the reference value.
    pass = pass && std::abs(mean - 0.6924) <= 3.0 * sd / std::sqrt(replicates) + 0.002;
    if (!spreads.empty()) pass = pass && sd < spreads.back() / 2.0;
    means.push_back(mean);
    spreads.push_back(sd);
    rows += fmt::format(" N={}: mean {:.4f} sd {:.4f};", n, mean, sd);
  }
  const double single = estimate_q({0.2, -2, 0.4}, 100000, 7, 99);
  pass = pass && std::abs(single - 0.6924) < 0.01;
  report(2, "convergence toward 0.6924 with shrinking spread", pass,
         fmt::format("{} single 1e5 run {:.4f}", rows, single));
}

void criterion_3() {
  const auto start = Clock::now();
  std::mt19937_64 pick(2718);
  std::uniform_real_distribution<double> u;
  const std::uint64_t n = 40000;
  int agree = 0;
  for (int c = 0; c < 50; ++c) {
    const double D = 20.0 + 1980.0 * u(pick);
    const double sigma = 0.1 + 1.4 * u(pick);
    const double mu = std::log(D) - 0.5 - 3.0 * u(pick);
    const double G = D * (0.05 + 0.65 * u(pick));
    const double direct = oracle::windowed_gap_probability(G, D, mu, sigma, n, 5000 + c);
    const double scaled = estimate_q({G / D, mu - std::log(D), sigma}, n, 31, static_cast<std::uint64_t>(c));
    const double se = std::sqrt(direct * (1 - direct) / n + scaled * (1 - scaled) / n);
    if (std::abs(direct - scaled) <= std::max(3.0 * se, 1e-12)) ++agree;
  }
  const double secs = seconds_since(start);
  report(3, "scaling a length-D window onto the unit interval", agree >= 47 && secs < 300.0,
         fmt::format("{}/50 cases within 3 combined SE (need 47), {:.1f} s", agree, secs));
}

void oracle_check(int id, const char* title, const std::vector<std::vector<double>>& cases, double limit,
                  const QTable& table) {
  bool pass = true;
  std::string rows;
  for (const auto& speeds : cases) {
    SimConfig cfg;
    cfg.scenario = base_case(speeds, 5000.0);
    cfg.trials = 100000;
    cfg.seed = 20 + speeds.size();
    const auto start = Clock::now();
    const ModelComparison cmp = compare_with_model(cfg, table);
    pass = pass && cmp.max_abs_error <= limit && cmp.model.size() == 10;
    rows += fmt::format(" {} lanes: max {:.4f} mean {:.4f} ({:.1f} s);", speeds.size(), cmp.max_abs_error,
                        cmp.mean_abs_error, seconds_since(start));
  }
  report(id, title, pass, fmt::format("limit {}, 10 checkpoints, 1e5 trials;{}", limit, rows));
}

void criterion_6(const QTable& table) {
  Scenario s = base_case({120, 110, 100}, 5000.0);
  s.lanes[2].g_crit = 1e-6;
  const double shift = s.lanes[2].t_lc * s.lanes[1].v;
  std::vector<double> ds;
  for (double d = 0.0; d <= 5000.0; d += 1.0) ds.push_back(d);
  const Eigen::ArrayXd p3 = evaluate_at(s, table, ds);
  double worst = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double d2 = ds[i] - shift;
    const double p2 = d2 > 0.0 ? p_two_lane(d2, s.lanes[0].v, s.lanes[1], table) : 0.0;
    worst = std::max(worst, std::abs(p3[static_cast<Eigen::Index>(i)] - p2));
  }
  double worst_direct = 0.0;
  for (double d : {300.0, 1000.0, 2500.0, 5000.0}) {
    Scenario at = s;
    at.goal_distance = d;
    worst_direct = std::max(worst_direct, std::abs(p_multilane(at, table) - p_two_lane(d - shift, s.lanes[0].v, s.lanes[1], table)));
  }
  report(6, "near-zero final critical gap: p3(d) = p2(d - t3 v2)", std::max(worst, worst_direct) <= 1e-3,
         fmt::format("max |diff| {:.2e} over d = 0..5000 step 1 (direct route {:.2e}), limit 1e-3", worst, worst_direct));
}

void criterion_7(const QTable& table) {
  const double slack = 0.02;
  int violations = 0;
  std::string detail;

  double prev = 2.0;
  for (double rho = 400.0; rho <= 2400.0 + 1e-9; rho += 100.0) {
    const double p = at_1km(base_case({120, 110}, 1000.0, rho), table);
    if (p > prev + slack) ++violations;
    prev = p;
  }
  detail += fmt::format("rho_l 400..2400: p {:.3f} -> {:.3f};", at_1km(base_case({120, 110}, 1000.0, 400.0), table), prev);

  prev = 2.0;
  for (int k = 0; k <= 28; ++k) {
    const double delta = 0.4 + 0.1 * k;
    const double p = at_1km(base_case({120, 110}, 1000.0, 1200.0, delta), table);
    if (p > prev + slack) ++violations;
    prev = p;
  }
  detail += fmt::format(" delta 0.4..3.2: ends at {:.3f};", prev);

  double lowest_v = 0.0, lowest_p = 2.0;
  for (double v1 = 80.0; v1 <= 140.0; v1 += 5.0) {
    const double p = at_1km(base_case({v1, 110}, 1000.0), table);
    if (p < lowest_p) {
      lowest_p = p;
      lowest_v = v1;
    }
  }
  if (lowest_v != 110.0) ++violations;
  detail += fmt::format(" v1 sweep minimum at {} km/h (v2 = 110);", lowest_v);

  const ProbabilityProfile p2 = profile(base_case({120, 110}, 5000.0), table);
  const ProbabilityProfile p3 = profile(base_case({120, 110, 100}, 5000.0), table);
  const ProbabilityProfile p4 = profile(base_case({120, 110, 100, 90}, 5000.0), table);
  int lane_violations = 0;
  for (Eigen::Index i = 0; i < p2.probabilities.size(); ++i) {
    if (p3.probabilities[i] > p2.probabilities[i] + slack) ++lane_violations;
    if (p4.probabilities[i] > p3.probabilities[i] + slack) ++lane_violations;
  }
  violations += lane_violations;
  detail += fmt::format(" n = 2,3,4 at 1 km: {:.3f} {:.3f} {:.3f}", p2.probabilities[100], p3.probabilities[100],
                        p4.probabilities[100]);
  report(7, "parameter trends at d = 1 km", violations == 0, fmt::format("{} violations; {}", violations, detail));
}

void criterion_8_and_9(const QTable& fixture_table, const std::filesystem::path& fixture_path) {
  // Profile timings with a preloaded table: best of 7 runs per lane count.
  std::vector<double> times;
  for (std::size_t n = 2; n <= 4; ++n) {
    std::vector<double> speeds = {120, 110, 100, 90};
    speeds.resize(n);
    const Scenario s = base_case(speeds, 5000.0);
    double best = 1e9;
    for (int r = 0; r < 7; ++r) {
      const auto start = Clock::now();
      const ProbabilityProfile p = profile(s, fixture_table, 10.0);
      best = std::min(best, seconds_since(start));
      if (p.distances.size() != 501) best = 1e9;
    }
    times.push_back(best);
  }
  // No faster than linear: the cost added by the fourth lane may not exceed
  // the cost added by the third.
  const double inc3 = times[1] - times[0];
  const double inc4 = times[2] - times[1];
  const bool linear = inc4 <= 1.25 * inc3 + 1e-3;

  const auto dir = std::filesystem::temp_directory_path() / "lanewise_acceptance";
  std::filesystem::create_directories(dir);
  int code = 0;
  const auto smoke_start = Clock::now();
  cli_output({"precompute", "--axes", "mini", "--trials", "1e5", "--seed", "7", "-o", (dir / "mini_a.bin").string()}, code);
  const double smoke = seconds_since(smoke_start);
  const bool smoke_ok = code == 0;

  const auto full_start = Clock::now();
  const QTable full = precompute_table(GridAxes::defaults(), 100000, 7);
  const double full_secs = seconds_since(full_start);
  save_table(full, dir / "full.bin");
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());

  report(8, "performance",
         times[2] < 1.0 && linear && smoke_ok && smoke < 10.0 && full_secs < 7200.0,
         fmt::format("5 km profile n=2/3/4: {:.2f}/{:.2f}/{:.2f} ms (increments {:.2f}, {:.2f} ms); mini precompute "
                     "{:.2f} s; full 501,061-cell precompute at 1e5 trials {:.0f} s on {} core(s), limit 7200 s",
                     times[0] * 1e3, times[1] * 1e3, times[2] * 1e3, inc3 * 1e3, inc4 * 1e3, smoke, full_secs, cores));

  // Determinism across repeated runs.
  std::vector<std::string> mismatched;
  cli_output({"precompute", "--axes", "mini", "--trials", "1e5", "--seed", "7", "--threads", "3", "-o",
              (dir / "mini_b.bin").string()},
             code);
  if (slurp(dir / "mini_a.bin") != slurp(dir / "mini_b.bin")) mismatched.push_back("mini table");
  if (slurp(dir / "full.bin") != slurp(fixture_path)) mismatched.push_back("default table");
  const std::string table = fixture_path.string();
  const std::vector<std::vector<std::string>> commands = {
      {"profile", "--table", table, "--speeds", "120,110,100,90", "-d", "5000"},
      {"sweep", "--table", table, "--var", "delta", "--cross-section", (dir / "cross.csv").string()},
      {"validate", "--table", table, "--trials", "20000", "--seed", "3", "--speeds", "120,110,100"},
      {"validate", "--table", table, "--trials", "5000", "--seed", "3", "--jitter-kmh", "5", "--qualitative"},
      {"isosurface", "--table", table, "--level", "0.5", "--tolerance", "0.02"}};
  for (const auto& args : commands) {
    int c1 = 0, c2 = 0;
    const std::string a = cli_output(args, c1);
    const std::string cross_a = slurp(dir / "cross.csv");
    const std::string b = cli_output(args, c2);
    const std::string cross_b = slurp(dir / "cross.csv");
    if (c1 != 0 || c2 != 0 || a != b || a.empty() || cross_a != cross_b) mismatched.push_back(args[0]);
  }
  std::string detail = "mini table (1 vs 3 threads), default table vs fixture file, profile/sweep/validate/isosurface CSVs";
  if (!mismatched.empty()) {
    detail += "; mismatched:";
    for (const auto& m : mismatched) detail += " " + m;
  }
  report(9, "bytewise determinism", mismatched.empty(), detail);
}

}  // namespace

int main() {
  const char* env = std::getenv("LANEWISE_QTABLE");
  if (env == nullptr) {
    std::cerr << "LANEWISE_QTABLE must point at the default table (set by ctest)\n";
    return 2;
  }
  const std::filesystem::path fixture_path = env;
  const QTable table = load_table(fixture_path);

  criterion_1();
  criterion_2();
  criterion_3();
  oracle_check(4, "oracle equivalence, 2 lanes", {{120, 110}}, 0.03, table);
  oracle_check(5, "oracle equivalence, 3 and 4 lanes", {{120, 110, 100}, {120, 110, 100, 90}}, 0.05, table);
  criterion_6(table);
  criterion_7(table);
  criterion_8_and_9(table, fixture_path);

  std::cout << fmt::format("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
