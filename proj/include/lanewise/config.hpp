#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lanewise/estimation.hpp"
#include "lanewise/lanechange.hpp"

namespace lanewise {

// Flat "key = value" document. Keys before the first [lane] header are
// global; each [lane] header opens one lane block, start lane first.
struct ConfigDocument {
  struct Entry {
    std::string value;
    std::size_t line;
  };
  using Section = std::map<std::string, Entry>;

  Section global;
  std::vector<Section> lanes;
};

ConfigDocument parse_config(std::istream& in);
ConfigDocument read_config_file(const std::filesystem::path& path);

// Scenario-level settings resolved from a document. Lanes come either from
// explicit per-lane (mu, sigma) blocks or from traffic aggregates, never both.
struct RunConfig {
  std::optional<TrafficSpec> traffic;  // set in aggregate mode
  std::vector<LaneProfile> explicit_lanes;
  double goal_distance = 1000.0;
  std::optional<std::filesystem::path> table;
  double sample_step = 10.0;
  double grid_step = 5.0;
  std::uint64_t trials = 100000;
  std::uint64_t seed = 1;
  double dt = 0.1;
  double checkpoint_interval = 500.0;
  std::optional<double> jitter_kmh;

  bool aggregate_mode() const { return traffic.has_value(); }
  Scenario scenario() const;
};

// Base case: 1200 veh/h/lane, delta 2 s, 120/110 km/h, d = 1000 m.
RunConfig default_run_config();
RunConfig resolve_config(const ConfigDocument& doc);

// Sets mu and sigma in lane block `lane` (0-based) of the text, preserving
// every other line. Throws ConfigError for aggregate-mode documents.
std::string inject_lane_fit(const std::string& text, std::size_t lane, double mu, double sigma);

}  // namespace lanewise
