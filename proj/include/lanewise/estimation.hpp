#pragma once

#include <iosfwd>
#include <vector>

#include "lanewise/lanechange.hpp"

namespace lanewise {

struct HeadwaySample {
  std::vector<double> values;  // metres, all > 0
  int lane_id = 0;
};

struct LognormalFit {
  double mu;
  double sigma;
};

inline constexpr std::size_t kMinFitSamples = 30;

// mu = mean of ln(x), sigma = unbiased standard deviation of ln(x).
LognormalFit fit_lognormal(const HeadwaySample& sample);

// Aggregate traffic description for lanes without measured headways.
struct TrafficSpec {
  double rho_l = 1200.0;            // veh/h/lane
  double delta = 2.0;               // desired time headway, s
  double s0 = 7.0;                  // standstill distance, m
  std::vector<double> speeds_kmh;   // start lane first
  double sigma_default = 0.8;
  double t_lc = 3.0;                // s

  void validate() const;
};

// One profile per speed. The log-normal mean matches the mean distance
// headway v * 3600 / rho_l, and g_crit = s0 + delta * v.
std::vector<LaneProfile> profiles_from_spec(const TrafficSpec& spec);

// Single-column text, optional non-numeric header row. Error messages name
// the offending line.
HeadwaySample read_headway_sample(std::istream& in, int lane_id = 0);

}  // namespace lanewise
