#include "lanewise/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lanewise/config.hpp"
#include "lanewise/errors.hpp"
#include "lanewise/estimation.hpp"
#include "lanewise/lanechange.hpp"
#include "lanewise/qtable.hpp"
#include "lanewise/simulator.hpp"

namespace lanewise::cli {

namespace {

class ValidationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Accepts plain integers and exact scientific forms such as "1e5".
std::uint64_t parse_count(const std::string& text, const char* what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !(v >= 0.0) || v != std::floor(v) || v > 1.8e19)
    throw ConfigError(fmt::format("{} must be a non-negative integer, got '{}'", what, text));
  return static_cast<std::uint64_t>(v);
}

Axis parse_axis(const std::string& text, const char* name) {
  Axis a;
  char c1 = 0;
  char c2 = 0;
  std::istringstream in(text);
  if (!(in >> a.start >> c1 >> a.step >> c2 >> a.count) || c1 != ':' || c2 != ':' || !in.eof())
    throw ConfigError(fmt::format("--{}-axis expects start:step:count, got '{}'", name, text));
  return a;
}

// Opens `path` for writing, or returns `fallback` when the path is empty.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : path_(path) {
    if (path.empty()) {
      stream_ = &fallback;
      return;
    }
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw std::ios_base::failure("cannot open " + path + " for writing");
    stream_ = &file_;
  }
  std::ostream& get() { return *stream_; }
  void close() {
    stream_->flush();
    if (!*stream_) throw std::ios_base::failure("write failed" + (path_.empty() ? "" : " for " + path_));
  }

 private:
  std::string path_;
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

struct ScenarioOptions {
  std::string config;
  std::string table;
  std::optional<double> d;
  std::vector<double> speeds;
  std::optional<double> rho_l;
  std::optional<double> delta;
  std::optional<double> sigma_default;

  void attach(CLI::App& app) {
    app.add_option("-c,--config", config, "Run configuration file");
    app.add_option("--table", table, "Q-table file (else config 'table', else $LANEWISE_QTABLE)");
    app.add_option("-d,--distance", d, "Goal distance in m");
    app.add_option("--speeds", speeds, "Lane speeds in km/h, start lane first")->delimiter(',');
    app.add_option("--rho-l", rho_l, "Traffic density, veh/h/lane");
    app.add_option("--delta", delta, "Desired time headway, s");
    app.add_option("--sigma-default", sigma_default, "Headway log-sd for derived lanes");
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? default_run_config() : resolve_config(read_config_file(config));
    if (d) cfg.goal_distance = *d;
    const bool aggregate_override = !speeds.empty() || rho_l || delta || sigma_default;
    if (aggregate_override) {
      if (!cfg.aggregate_mode()) throw ConfigError("traffic aggregate flags need an aggregate-mode configuration");
      if (!speeds.empty()) cfg.traffic->speeds_kmh = speeds;
      if (rho_l) cfg.traffic->rho_l = *rho_l;
      if (delta) cfg.traffic->delta = *delta;
      if (sigma_default) cfg.traffic->sigma_default = *sigma_default;
      try {
        cfg.traffic->validate();
      } catch (const ParameterError& e) {
        throw ConfigError(e.what());
      }
    }
    if (!table.empty()) cfg.table = table;
    return cfg;
  }
};

std::filesystem::path table_path(const RunConfig& cfg) {
  if (cfg.table) return *cfg.table;
  if (const char* env = std::getenv("LANEWISE_QTABLE"); env != nullptr && *env != '\0') return env;
  throw MissingArtifactError("no q-table given: use --table, the config key 'table' or LANEWISE_QTABLE");
}

QTable load_for(const RunConfig& cfg) {
  const auto path = table_path(cfg);
  if (!std::filesystem::exists(path)) throw MissingArtifactError("q-table not found: " + path.string());
  return load_table(path);
}

Scenario checked_scenario(const RunConfig& cfg, std::ostream& err) {
  Scenario s = cfg.scenario();
  try {
    s.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (s.goal_outside_nominal_range())
    err << fmt::format("warning: goal distance {} m is outside the 100 m .. 5 km range the model targets\n",
                       s.goal_distance);
  return s;
}

void write_profile(std::ostream& out, const ProbabilityProfile& p) {
  out << "d_m,p\n";
  for (Eigen::Index i = 0; i < p.distances.size(); ++i) out << fmt::format("{},{}\n", p.distances[i], p.probabilities[i]);
}

// ---- precompute -----------------------------------------------------------

struct PrecomputeOptions {
  std::string trials = "100000";
  std::uint64_t seed = 7;
  std::string axes = "default";
  std::string g_axis, mu_axis, sigma_axis;
  std::string output;
  unsigned threads = 0;
};

int cmd_precompute(const PrecomputeOptions& o, std::ostream& out, std::ostream& err) {
  GridAxes axes = o.axes == "mini" ? GridAxes::mini() : GridAxes::defaults();
  if (!o.g_axis.empty()) axes.g = parse_axis(o.g_axis, "g");
  if (!o.mu_axis.empty()) axes.mu = parse_axis(o.mu_axis, "mu");
  if (!o.sigma_axis.empty()) axes.sigma = parse_axis(o.sigma_axis, "sigma");
  const std::uint64_t trials = parse_count(o.trials, "--trials");
  try {
    axes.validate();
    if (trials == 0) throw ParameterError("--trials must be positive");
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }

  int last_pct = -1;
  const QTable table = precompute_table(
      axes, trials, o.seed,
      [&](std::size_t done, std::size_t total) {
        const int pct = static_cast<int>(100 * done / total);
        if (pct / 5 != last_pct / 5 || done == total) {
          last_pct = pct;
          err << fmt::format("precompute: {:3d}% ({}/{} columns)\n", pct, done, total) << std::flush;
        }
      },
      o.threads);
  save_table(table, o.output);

  const auto& v = table.values();
  bool g0_ones = true;
  for (std::size_t im = 0; im < axes.mu.count; ++im)
    for (std::size_t is = 0; is < axes.sigma.count; ++is) g0_ones = g0_ones && (axes.g.start > 0.0 || table.at(0, im, is) == 1.0f);
  out << fmt::format("wrote {}\ncells {} ({}x{}x{}), trials/cell {}, seed {}\n", o.output, v.size(), axes.g.count,
                     axes.mu.count, axes.sigma.count, trials, o.seed);
  out << fmt::format("min {:.6g} max {:.6g} mean {:.6g}, g=0 plane all 1: {}\n", v.minCoeff(), v.maxCoeff(), v.mean(),
                     g0_ones ? "yes" : "no");
  return kOk;
}

// ---- profile --------------------------------------------------------------

struct ProfileOptions {
  ScenarioOptions scenario;
  std::optional<double> sample_step;
  std::optional<double> grid_step;
  std::string output;
};

int cmd_profile(const ProfileOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = o.scenario.resolve();
  if (o.sample_step) cfg.sample_step = *o.sample_step;
  if (o.grid_step) cfg.grid_step = *o.grid_step;
  if (!(cfg.sample_step > 0.0) || !(cfg.grid_step > 0.0)) throw ConfigError("sample and grid steps must be positive");
  const Scenario s = checked_scenario(cfg, err);
  const QTable table = load_for(cfg);
  const ProbabilityProfile p = profile(s, table, cfg.sample_step, cfg.grid_step);
  Sink sink(o.output, out);
  write_profile(sink.get(), p);
  sink.close();
  return kOk;
}

// ---- sweep ----------------------------------------------------------------

struct SweepOptions {
  ScenarioOptions scenario;
  std::string var;
  std::optional<double> from, to, step, at;
  std::optional<double> sample_step;
  std::string output;
  std::string cross_section;
};

std::vector<double> sweep_values(double from, double to, double step) {
  if (!(step > 0.0) || !(to >= from)) throw ConfigError("sweep range needs from <= to and step > 0");
  std::vector<double> out;
  for (std::size_t k = 0;; ++k) {
    const double v = std::round((from + static_cast<double>(k) * step) * 1e9) / 1e9;
    if (v > to + 1e-9 * step) break;
    out.push_back(v);
    if (out.size() > 100000) throw ConfigError("sweep range has too many values");
  }
  return out;
}

int cmd_sweep(const SweepOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = o.scenario.resolve();
  ConfigDocument doc;
  if (!o.scenario.config.empty()) doc = read_config_file(o.scenario.config);
  auto from_doc = [&](const char* key) -> std::optional<double> {
    auto it = doc.global.find(key);
    if (it == doc.global.end()) return std::nullopt;
    try {
      return std::stod(it->second.value);
    } catch (const std::logic_error&) {
      throw ConfigError(fmt::format("line {}: '{}' expects a number", it->second.line, key));
    }
  };

  std::string var = o.var;
  if (var.empty()) {
    if (auto it = doc.global.find("sweep_var"); it != doc.global.end()) var = it->second.value;
  }
  double dflt_from = 0.0, dflt_to = 0.0, dflt_step = 0.0;
  if (var == "rho_l") {
    dflt_from = 400, dflt_to = 2400, dflt_step = 400;
  } else if (var == "delta") {
    dflt_from = 0.4, dflt_to = 3.2, dflt_step = 0.4;
  } else if (var == "v1") {
    dflt_from = 80, dflt_to = 140, dflt_step = 5;
  } else {
    throw ConfigError(fmt::format("unknown sweep variable '{}' (expected rho_l, delta or v1)", var));
  }
  if ((var == "rho_l" || var == "delta") && !cfg.aggregate_mode())
    throw ConfigError(fmt::format("sweeping {} needs an aggregate-mode configuration", var));

  const double from = o.from.value_or(from_doc("sweep_from").value_or(dflt_from));
  const double to = o.to.value_or(from_doc("sweep_to").value_or(dflt_to));
  const double step = o.step.value_or(from_doc("sweep_step").value_or(dflt_step));
  const double at = o.at.value_or(from_doc("cross_section_d").value_or(1000.0));
  if (o.sample_step) cfg.sample_step = *o.sample_step;
  if (!(at > 0.0)) throw ConfigError("cross-section distance must be positive");

  const QTable table = load_for(cfg);
  Sink long_sink(o.output, out);
  std::string cross_path = o.cross_section;
  if (cross_path.empty() && !o.output.empty()) {
    std::filesystem::path p(o.output);
    cross_path = (p.parent_path() / (p.stem().string() + ".cross.csv")).string();
  }
  std::optional<Sink> cross_sink;
  if (!cross_path.empty()) cross_sink.emplace(cross_path, out);

  long_sink.get() << "sweep_value,d_m,p\n";
  if (cross_sink) cross_sink->get() << "sweep_value,d_m,p\n";
  for (double value : sweep_values(from, to, step)) {
    RunConfig c = cfg;
    if (var == "rho_l") c.traffic->rho_l = value;
    else if (var == "delta") c.traffic->delta = value;
    else if (c.traffic) c.traffic->speeds_kmh[0] = value;
    else c.explicit_lanes[0].v = value / 3.6;
    c.goal_distance = std::max(c.goal_distance, at);
    Scenario s;
    try {
      s = checked_scenario(c, err);
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    const ProbabilityProfile p = profile(s, table, c.sample_step, c.grid_step);
    for (Eigen::Index i = 0; i < p.distances.size(); ++i)
      long_sink.get() << fmt::format("{},{},{}\n", value, p.distances[i], p.probabilities[i]);
    if (cross_sink) {
      const double d[] = {at};
      cross_sink->get() << fmt::format("{},{},{}\n", value, at, evaluate_at(s, table, d, c.grid_step)[0]);
    }
  }
  long_sink.close();
  if (cross_sink) cross_sink->close();
  return kOk;
}

// ---- validate -------------------------------------------------------------

struct ValidateOptions {
  ScenarioOptions scenario;
  std::string trials;
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<double> jitter_kmh;
  std::optional<double> checkpoint_interval;
  double tolerance = 0.05;
  bool qualitative = false;
  unsigned threads = 0;
  std::string output;
  std::string sim_output;
};

int cmd_validate(const ValidateOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = o.scenario.resolve();
  SimConfig sim;
  sim.scenario = checked_scenario(cfg, err);
  sim.trials = o.trials.empty() ? cfg.trials : parse_count(o.trials, "--trials");
  sim.seed = o.seed.value_or(cfg.seed);
  sim.dt = o.dt.value_or(cfg.dt);
  sim.checkpoint_interval = o.checkpoint_interval.value_or(cfg.checkpoint_interval);
  sim.jitter_speed_kmh = o.jitter_kmh ? o.jitter_kmh : cfg.jitter_kmh;
  if (sim.jitter_speed_kmh && *sim.jitter_speed_kmh == 0.0) sim.jitter_speed_kmh.reset();
  sim.threads = o.threads;
  if (!(o.tolerance >= 0.0)) throw ConfigError("--tolerance must be >= 0");

  const QTable table = load_for(cfg);
  const ModelComparison cmp = compare_with_model(sim, table);

  {
    Sink sink(o.output, out);
    write_comparison_csv(sink.get(), cmp);
    sink.close();
  }
  if (!o.sim_output.empty()) {
    Sink sink(o.sim_output, out);
    write_sim_report_csv(sink.get(), cmp.sim);
    sink.close();
  }

  const bool within = cmp.max_abs_error <= o.tolerance;
  err << fmt::format("max_abs_error={:.6f} mean_abs_error={:.6f} tolerance={} trials={}\n", cmp.max_abs_error,
                     cmp.mean_abs_error, o.tolerance, sim.trials);
  if (o.qualitative) {
    const double sim_rise = cmp.sim.probabilities.back() - cmp.sim.probabilities.front();
    const double model_rise = cmp.model.back() - cmp.model.front();
    err << fmt::format("qualitative: sim rises by {:.4f}, model rises by {:.4f} from {} m to {} m; {}\n", sim_rise,
                       model_rise, cmp.sim.checkpoints.front(), cmp.sim.checkpoints.back(),
                       within ? "model and simulation agree within tolerance"
                              : "model and simulation diverge beyond tolerance");
    return kOk;
  }
  if (!within)
    throw ValidationFailure(fmt::format("max abs error {:.6f} exceeds tolerance {}", cmp.max_abs_error, o.tolerance));
  return kOk;
}

// ---- fit ------------------------------------------------------------------

struct FitOptions {
  std::string sample;
  std::string into;
  std::size_t lane = 0;
};

int cmd_fit(const FitOptions& o, std::ostream& out, std::ostream&) {
  std::ifstream in(o.sample);
  if (!in) throw MissingArtifactError("cannot open headway sample " + o.sample);
  HeadwaySample sample;
  LognormalFit fit{};
  try {
    sample = read_headway_sample(in, static_cast<int>(o.lane));
    fit = fit_lognormal(sample);
  } catch (const ParameterError& e) {
    throw ConfigError(o.sample + ": " + e.what());
  }
  out << fmt::format("mu={:.6f} sigma={:.6f}\n", fit.mu, fit.sigma);

  if (!o.into.empty()) {
    if (o.lane < 2) throw ConfigError("--lane must name a target lane (2 or higher)");
    std::ifstream cfg_in(o.into);
    if (!cfg_in) throw MissingArtifactError("cannot open config " + o.into);
    const std::string text{std::istreambuf_iterator<char>(cfg_in), std::istreambuf_iterator<char>()};
    const std::string updated = inject_lane_fit(text, o.lane - 1, fit.mu, fit.sigma);
    Sink sink(o.into, out);
    sink.get() << updated;
    sink.close();
  }
  return kOk;
}

// ---- isosurface -----------------------------------------------------------

struct IsoOptions {
  std::string table;
  double level = 0.9;
  double tolerance = 0.01;
  std::string output;
};

int cmd_isosurface(const IsoOptions& o, std::ostream& out, std::ostream&) {
  RunConfig cfg;
  if (!o.table.empty()) cfg.table = o.table;
  const QTable table = load_for(cfg);
  std::vector<IsoPoint> points;
  try {
    points = export_isosurface_slice(table, o.level, o.tolerance);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  Sink sink(o.output, out);
  write_isosurface_csv(sink.get(), points);
  sink.close();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lane-change success probability engine", "lanewise"};
  app.require_subcommand(1);

  PrecomputeOptions pre;
  auto* c_pre = app.add_subcommand("precompute", "Tabulate q(g, mu, sigma) to a table file");
  c_pre->add_option("--trials", pre.trials, "Windows per (mu, sigma) column, e.g. 1e5")->capture_default_str();
  c_pre->add_option("--seed", pre.seed, "Master seed")->capture_default_str();
  c_pre->add_option("--axes", pre.axes, "Axis preset")->check(CLI::IsMember({"default", "mini"}))->capture_default_str();
  c_pre->add_option("--g-axis", pre.g_axis, "Override g axis as start:step:count");
  c_pre->add_option("--mu-axis", pre.mu_axis, "Override mu axis as start:step:count");
  c_pre->add_option("--sigma-axis", pre.sigma_axis, "Override sigma axis as start:step:count");
  c_pre->add_option("-o,--output", pre.output, "Table file to write")->required();
  c_pre->add_option("--threads", pre.threads, "Worker threads, 0 = all cores");

  ProfileOptions prof;
  auto* c_prof = app.add_subcommand("profile", "P(S) against distance as d_m,p CSV");
  prof.scenario.attach(*c_prof);
  c_prof->add_option("--sample-step", prof.sample_step, "Distance between samples, m");
  c_prof->add_option("--grid-step", prof.grid_step, "Convolution grid step, m");
  c_prof->add_option("-o,--output", prof.output, "CSV path (default stdout)");

  SweepOptions sw;
  auto* c_sw = app.add_subcommand("sweep", "Profiles across one parameter, long CSV sweep_value,d_m,p");
  sw.scenario.attach(*c_sw);
  c_sw->add_option("--var", sw.var, "rho_l, delta or v1 (km/h of the start lane)");
  c_sw->add_option("--from", sw.from);
  c_sw->add_option("--to", sw.to);
  c_sw->add_option("--step", sw.step);
  c_sw->add_option("--at", sw.at, "Cross-section distance, m (default 1000)");
  c_sw->add_option("--sample-step", sw.sample_step, "Distance between samples, m");
  c_sw->add_option("-o,--output", sw.output, "Long CSV path (default stdout)");
  c_sw->add_option("--cross-section", sw.cross_section, "Cross-section CSV path (default <output>.cross.csv)");

  ValidateOptions val;
  auto* c_val = app.add_subcommand("validate", "Compare the model with the oracle simulator");
  val.scenario.attach(*c_val);
  c_val->add_option("--trials", val.trials, "Simulated trials, e.g. 1e5");
  c_val->add_option("--seed", val.seed);
  c_val->add_option("--dt", val.dt, "Time step, s");
  c_val->add_option("--jitter-kmh", val.jitter_kmh, "Per-vehicle speed spread, km/h");
  c_val->add_option("--checkpoint-interval", val.checkpoint_interval, "m");
  c_val->add_option("--tolerance", val.tolerance, "Max allowed abs error")->capture_default_str();
  c_val->add_flag("--qualitative", val.qualitative, "Report divergence without failing");
  c_val->add_option("--threads", val.threads, "Worker threads, 0 = all cores");
  c_val->add_option("-o,--output", val.output, "Comparison CSV path (default stdout)");
  c_val->add_option("--sim-output", val.sim_output, "Simulator report CSV path");

  FitOptions fit;
  auto* c_fit = app.add_subcommand("fit", "Fit log-normal headway parameters");
  c_fit->add_option("sample", fit.sample, "Single-column headway file, metres")->required();
  c_fit->add_option("--into", fit.into, "Config whose lane block receives mu and sigma");
  c_fit->add_option("--lane", fit.lane, "Lane number for --into, start lane = 1");

  IsoOptions iso;
  auto* c_iso = app.add_subcommand("isosurface", "Cells with |q - level| <= tolerance as g,mu,sigma,q CSV");
  c_iso->add_option("--table", iso.table, "Q-table file (else $LANEWISE_QTABLE)");
  c_iso->add_option("--level", iso.level)->capture_default_str();
  c_iso->add_option("--tolerance", iso.tolerance)->capture_default_str();
  c_iso->add_option("-o,--output", iso.output, "CSV path (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_pre->parsed()) return cmd_precompute(pre, out, err);
    if (c_prof->parsed()) return cmd_profile(prof, out, err);
    if (c_sw->parsed()) return cmd_sweep(sw, out, err);
    if (c_val->parsed()) return cmd_validate(val, out, err);
    if (c_fit->parsed()) return cmd_fit(fit, out, err);
    if (c_iso->parsed()) return cmd_isosurface(iso, out, err);
  } catch (const ValidationFailure& e) {
    err << "validation failed: " << e.what() << '\n';
    return kValidationFailed;
  } catch (const MissingArtifactError& e) {
    err << "error: " << e.what() << '\n';
    return kMissingArtifact;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TableError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}

}  // namespace lanewise::cli
