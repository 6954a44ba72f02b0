#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "lanewise/qtable.hpp"

namespace lanewise {

// Traffic on one lane. Speeds in m/s, distances in m, durations in s.
struct LaneProfile {
  double v = 0.0;       // average lane speed
  double mu = 0.0;      // headway log-mean, log of metres
  double sigma = 0.0;   // headway log-sd
  double g_crit = 0.0;  // critical gap for merging into this lane
  double t_lc = 0.0;    // duration of the lane change into this lane

  double mean_headway() const;
  void validate() const;
};

// Lanes are ordered from the start lane (index 0) to the goal lane (last).
// The start lane only contributes its speed.
struct Scenario {
  std::vector<LaneProfile> lanes;
  double goal_distance = 0.0;

  std::size_t lane_count() const { return lanes.size(); }
  // Sum of t_j * v_{j-1}: no success is possible at or below this distance.
  double min_maneuver_distance() const;
  void validate() const;
  // True when the goal lies outside the 100 m .. 5 km range the model targets.
  bool goal_outside_nominal_range() const;
};

struct ProbabilityProfile {
  Eigen::ArrayXd distances;
  Eigen::ArrayXd probabilities;
  Scenario scenario;
};

// Search distances behind one two-lane query.
struct TwoLaneReduction {
  double search_distance;    // d - t * v1, where the maneuver must start
  double relative_distance;  // search distance travelled relative to the target lane
  double effective_length;   // relative distance plus the critical gap
  AbstractGapQuery query;
};

// Maps a two-lane problem onto the unit-interval query. Empty when the
// maneuver cannot complete within d.
std::optional<TwoLaneReduction> reduce_two_lane(double d, double v1, const LaneProfile& lane2);

double p_two_lane(double d, double v1, const LaneProfile& lane2, const QTable& table);

enum class ConvolutionMethod { direct, fft };

// Distribution of the distance at which the ego completes its final lane
// change, sampled on a grid that starts at the minimum maneuver distance.
// values[k] is P(arrival < offset + k * step + 0) (the right limit at k = 0).
class CompletionCurve {
 public:
  CompletionCurve(double offset, double step, Eigen::ArrayXd values)
      : offset_(offset), step_(step), values_(std::move(values)) {}

  double offset() const { return offset_; }
  double step() const { return step_; }
  const Eigen::ArrayXd& values() const { return values_; }

  // P(success within d); zero at or below the offset, linear between nodes.
  double operator()(double d) const;

 private:
  double offset_;
  double step_;
  Eigen::ArrayXd values_;
};

// Builds the completion curve up to distance `extent` for any lane count >= 2.
CompletionCurve completion_curve(const Scenario& scenario, const QTable& table, double extent,
                                 double grid_step, ConvolutionMethod method);

// Success probability at scenario.goal_distance.
double p_multilane(const Scenario& scenario, const QTable& table, double grid_step = 5.0);

// P(S) at d = 0, step, 2 step, ... up to the goal distance.
ProbabilityProfile profile(const Scenario& scenario, const QTable& table, double sample_step = 10.0,
                           double grid_step = 5.0);

// P(S) at arbitrary distances, sharing one completion curve.
Eigen::ArrayXd evaluate_at(const Scenario& scenario, const QTable& table,
                           std::span<const double> distances, double grid_step = 5.0);

namespace detail {

// Recursion step on a shared grid: given the nodal CDF of the previous
// completion distance and the kernel of the next lane (kernel[0] is its right
// limit), returns the nodal CDF after one more lane change. Every cell mass is
// weighted by the kernel averaged over the cell.
template <typename DerivedCdf, typename DerivedKernel>
Eigen::ArrayXd stieltjes_convolve_direct(const Eigen::ArrayBase<DerivedCdf>& cdf,
                                         const Eigen::ArrayBase<DerivedKernel>& kernel) {
  const Eigen::Index n = cdf.size();
  Eigen::ArrayXd out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double acc = cdf[0] * kernel[k];
    for (Eigen::Index i = 1; i <= k; ++i)
      acc += (cdf[i] - cdf[i - 1]) * 0.5 * (kernel[k - i] + kernel[k - i + 1]);
    out[k] = acc;
  }
  return out;
}

Eigen::ArrayXd stieltjes_convolve_fft(const Eigen::ArrayXd& cdf, const Eigen::ArrayXd& kernel);

}  // namespace detail

}  // namespace lanewise
