#include "lanewise/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "lanewise/errors.hpp"

namespace lanewise {

namespace {

const std::set<std::string> kGlobalKeys = {
    "goal_distance", "table",  "sample_step", "grid_step",  "trials",         "seed",
    "dt",            "checkpoint_interval",   "jitter_kmh", "rho_l",          "delta",
    "s0",            "sigma_default",         "t_lc",       "speeds_kmh",     "sweep_var",
    "sweep_from",    "sweep_to",              "sweep_step", "cross_section_d"};
const std::set<std::string> kLaneKeys = {"speed_kmh", "mu", "sigma", "g_crit", "t_lc"};
const std::set<std::string> kAggregateKeys = {"rho_l", "delta", "s0", "sigma_default", "speeds_kmh"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_header(const std::string& line) { return line == "[lane]"; }

double to_double(const ConfigDocument::Entry& e, const std::string& key) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(e.value, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != e.value.size() || !std::isfinite(v))
    throw ConfigError(fmt::format("line {}: '{}' expects a number, got '{}'", e.line, key, e.value));
  return v;
}

std::uint64_t to_count(const ConfigDocument::Entry& e, const std::string& key) {
  const double v = to_double(e, key);
  if (v < 0.0 || v != std::floor(v) || v > 1.8e19)
    throw ConfigError(fmt::format("line {}: '{}' expects a non-negative integer, got '{}'", e.line, key, e.value));
  return static_cast<std::uint64_t>(v);
}

std::vector<double> to_list(const ConfigDocument::Entry& e, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double({trim(item), e.line}, key));
  return out;
}

}  // namespace

ConfigDocument parse_config(std::istream& in) {
  ConfigDocument doc;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (is_header(line)) {
      doc.lanes.emplace_back();
      continue;
    }
    if (line.front() == '[') throw ConfigError(fmt::format("line {}: unknown section '{}'", line_no, line));
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no));

    auto& section = doc.lanes.empty() ? doc.global : doc.lanes.back();
    const auto& allowed = doc.lanes.empty() ? kGlobalKeys : kLaneKeys;
    if (!allowed.contains(key))
      throw ConfigError(fmt::format("line {}: unknown {} key '{}'", line_no, doc.lanes.empty() ? "global" : "lane", key));
    if (section.contains(key)) throw ConfigError(fmt::format("line {}: duplicate key '{}'", line_no, key));
    section[key] = {value, line_no};
  }
  return doc;
}

ConfigDocument read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open config " + path.string());
  return parse_config(in);
}

Scenario RunConfig::scenario() const {
  Scenario s;
  s.lanes = traffic ? profiles_from_spec(*traffic) : explicit_lanes;
  s.goal_distance = goal_distance;
  return s;
}

RunConfig default_run_config() {
  RunConfig cfg;
  TrafficSpec spec;
  spec.speeds_kmh = {120.0, 110.0};
  cfg.traffic = spec;
  return cfg;
}

RunConfig resolve_config(const ConfigDocument& doc) {
  RunConfig cfg = default_run_config();
  const auto& g = doc.global;
  auto num = [&](const char* key, double& field) {
    if (auto it = g.find(key); it != g.end()) field = to_double(it->second, key);
  };
  num("goal_distance", cfg.goal_distance);
  num("sample_step", cfg.sample_step);
  num("grid_step", cfg.grid_step);
  num("dt", cfg.dt);
  num("checkpoint_interval", cfg.checkpoint_interval);
  if (auto it = g.find("trials"); it != g.end()) cfg.trials = to_count(it->second, "trials");
  if (auto it = g.find("seed"); it != g.end()) cfg.seed = to_count(it->second, "seed");
  if (auto it = g.find("jitter_kmh"); it != g.end()) cfg.jitter_kmh = to_double(it->second, "jitter_kmh");
  if (auto it = g.find("table"); it != g.end()) cfg.table = it->second.value;

  bool any_explicit = false;
  for (const auto& lane : doc.lanes)
    if (lane.contains("mu") || lane.contains("sigma") || lane.contains("g_crit")) any_explicit = true;
  std::string aggregate_key;
  for (const auto& k : kAggregateKeys)
    if (g.contains(k)) aggregate_key = k;

  double t_lc = 3.0;
  num("t_lc", t_lc);

  if (any_explicit) {
    if (!aggregate_key.empty())
      throw ConfigError(fmt::format("line {}: '{}' cannot be combined with explicit per-lane mu/sigma",
                                    g.at(aggregate_key).line, aggregate_key));
    if (doc.lanes.size() < 2) throw ConfigError("explicit mode needs at least two [lane] blocks");
    cfg.traffic.reset();
    for (std::size_t j = 0; j < doc.lanes.size(); ++j) {
      const auto& lane = doc.lanes[j];
      auto need = [&](const char* key) -> double {
        auto it = lane.find(key);
        if (it == lane.end()) throw ConfigError(fmt::format("lane {} is missing '{}'", j + 1, key));
        return to_double(it->second, key);
      };
      LaneProfile p;
      p.v = need("speed_kmh") / 3.6;
      p.t_lc = t_lc;
      if (auto it = lane.find("t_lc"); it != lane.end()) p.t_lc = to_double(it->second, "t_lc");
      if (j > 0) {
        p.mu = need("mu");
        p.sigma = need("sigma");
        p.g_crit = need("g_crit");
      }
      cfg.explicit_lanes.push_back(p);
    }
    return cfg;
  }

  TrafficSpec& spec = *cfg.traffic;
  spec.t_lc = t_lc;
  num("rho_l", spec.rho_l);
  num("delta", spec.delta);
  num("s0", spec.s0);
  num("sigma_default", spec.sigma_default);
  if (auto it = g.find("speeds_kmh"); it != g.end()) {
    if (!doc.lanes.empty())
      throw ConfigError(fmt::format("line {}: give lane speeds either as speeds_kmh or in [lane] blocks", it->second.line));
    spec.speeds_kmh = to_list(it->second, "speeds_kmh");
  } else if (!doc.lanes.empty()) {
    spec.speeds_kmh.clear();
    for (std::size_t j = 0; j < doc.lanes.size(); ++j) {
      const auto& lane = doc.lanes[j];
      auto it = lane.find("speed_kmh");
      if (it == lane.end()) throw ConfigError(fmt::format("lane {} is missing 'speed_kmh'", j + 1));
      if (lane.contains("t_lc"))
        throw ConfigError(fmt::format("line {}: per-lane t_lc needs explicit mode", lane.at("t_lc").line));
      spec.speeds_kmh.push_back(to_double(it->second, "speed_kmh"));
    }
  }
  try {
    spec.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

std::string inject_lane_fit(const std::string& text, std::size_t lane, double mu, double sigma) {
  std::istringstream probe(text);
  const ConfigDocument doc = parse_config(probe);
  for (const auto& k : kAggregateKeys)
    if (doc.global.contains(k))
      throw ConfigError(fmt::format("config uses traffic aggregate '{}'; fitted parameters need explicit lanes", k));
  if (lane >= doc.lanes.size())
    throw ConfigError(fmt::format("config has {} lane blocks, cannot update lane {}", doc.lanes.size(), lane + 1));

  const std::string mu_line = fmt::format("mu = {:.6f}", mu);
  const std::string sigma_line = fmt::format("sigma = {:.6f}", sigma);
  std::istringstream in(text);
  std::ostringstream out;
  std::string raw;
  long block = -1;
  bool wrote_mu = false;
  bool wrote_sigma = false;
  auto flush_missing = [&] {
    if (block == static_cast<long>(lane)) {
      if (!wrote_mu) out << mu_line << '\n';
      if (!wrote_sigma) out << sigma_line << '\n';
      wrote_mu = wrote_sigma = true;
    }
  };
  while (std::getline(in, raw)) {
    std::string content = raw;
    if (const auto hash = content.find('#'); hash != std::string::npos) content.erase(hash);
    content = trim(content);
    if (is_header(content)) {
      flush_missing();
      ++block;
      out << raw << '\n';
      continue;
    }
    if (block == static_cast<long>(lane)) {
      const auto eq = content.find('=');
      const std::string key = eq == std::string::npos ? std::string{} : trim(content.substr(0, eq));
      if (key == "mu") {
        out << mu_line << '\n';
        wrote_mu = true;
        continue;
      }
      if (key == "sigma") {
        out << sigma_line << '\n';
        wrote_sigma = true;
        continue;
      }
    }
    out << raw << '\n';
  }
  flush_missing();
  return out.str();
}

}  // namespace lanewise
