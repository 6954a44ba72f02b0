#include "lanewise/lanechange.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include "lanewise/errors.hpp"

namespace lanewise {

double LaneProfile::mean_headway() const { return std::exp(mu + 0.5 * sigma * sigma); }

void LaneProfile::validate() const {
  if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError(fmt::format("lane speed must be positive, got {}", v));
  if (!(g_crit > 0.0)) throw ParameterError(fmt::format("critical gap must be positive, got {}", g_crit));
  if (!(sigma >= 0.0)) throw ParameterError(fmt::format("headway sigma must be >= 0, got {}", sigma));
  if (!(t_lc >= 0.0)) throw ParameterError(fmt::format("lane-change duration must be >= 0, got {}", t_lc));
  if (!std::isfinite(mu)) throw ParameterError("headway mu must be finite");
}

double Scenario::min_maneuver_distance() const {
  double total = 0.0;
  for (std::size_t j = 1; j < lanes.size(); ++j) total += lanes[j].t_lc * lanes[j - 1].v;
  return total;
}

void Scenario::validate() const {
  if (lanes.size() < 2) throw ParameterError("a scenario needs at least two lanes");
  if (!(lanes[0].v > 0.0)) throw ParameterError("start lane speed must be positive");
  for (std::size_t j = 1; j < lanes.size(); ++j) lanes[j].validate();
  if (!(goal_distance > 0.0)) throw ParameterError("goal distance must be positive");
}

bool Scenario::goal_outside_nominal_range() const {
  return goal_distance < 100.0 || goal_distance > 5000.0;
}

namespace {

// Query for a search that may start anywhere within `search_distance` of
// travel at speed v1. Zero search distance gives the right limit g = 1.
AbstractGapQuery search_query(double search_distance, double v1, const LaneProfile& lane2) {
  const double relative = search_distance * std::abs(1.0 - lane2.v / v1);
  const double effective = relative + lane2.g_crit;
  return {lane2.g_crit / effective, lane2.mu - std::log(effective), lane2.sigma};
}

// Kernel of one lane change on the shared grid: entry m is the probability of
// completing the change within t * v_prev + m * step.
Eigen::ArrayXd lane_kernel(const LaneProfile& lane, double v_prev, Eigen::Index nodes, double step,
                           const QTable& table) {
  Eigen::ArrayXd k(nodes);
  for (Eigen::Index m = 0; m < nodes; ++m)
    k[m] = lookup(table, search_query(static_cast<double>(m) * step, v_prev, lane));
  return k;
}

}  // namespace

std::optional<TwoLaneReduction> reduce_two_lane(double d, double v1, const LaneProfile& lane2) {
  if (!(d > 0.0)) throw ParameterError(fmt::format("distance must be positive, got {}", d));
  if (!(v1 > 0.0)) throw ParameterError(fmt::format("ego speed must be positive, got {}", v1));
  lane2.validate();
  const double search = d - lane2.t_lc * v1;
  if (search <= 0.0) return std::nullopt;
  const double relative = search * std::abs(1.0 - lane2.v / v1);
  const double effective = relative + lane2.g_crit;
  return TwoLaneReduction{search, relative, effective,
                          {lane2.g_crit / effective, lane2.mu - std::log(effective), lane2.sigma}};
}

double p_two_lane(double d, double v1, const LaneProfile& lane2, const QTable& table) {
  const auto reduced = reduce_two_lane(d, v1, lane2);
  if (!reduced) return 0.0;
  return lookup(table, reduced->query);
}

double CompletionCurve::operator()(double d) const {
  if (d <= offset_) return 0.0;
  const double s = (d - offset_) / step_;
  const Eigen::Index last = values_.size() - 1;
  const auto lower = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(s)), last - 1);
  const double frac = std::min(s - static_cast<double>(lower), 1.0);
  const double v = values_[lower] * (1.0 - frac) + values_[lower + 1] * frac;
  return std::clamp(v, 0.0, 1.0);
}

namespace detail {

Eigen::ArrayXd stieltjes_convolve_fft(const Eigen::ArrayXd& cdf, const Eigen::ArrayXd& kernel) {
  const Eigen::Index n = cdf.size();
  Eigen::ArrayXd out = cdf[0] * kernel;
  if (n < 2) return out;

  // Cell masses (cells 1..n-1) against cell-averaged kernel values.
  const Eigen::Index m = n - 1;
  std::size_t len = 1;
  while (len < static_cast<std::size_t>(2 * m)) len <<= 1;
  std::vector<double> mass(len, 0.0);
  std::vector<double> avg(len, 0.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    mass[static_cast<std::size_t>(i)] = cdf[i + 1] - cdf[i];
    avg[static_cast<std::size_t>(i)] = 0.5 * (kernel[i] + kernel[i + 1]);
  }

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> fm;
  std::vector<std::complex<double>> fa;
  fft.fwd(fm, mass);
  fft.fwd(fa, avg);
  for (std::size_t i = 0; i < fm.size(); ++i) fm[i] *= fa[i];
  std::vector<double> conv;
  fft.inv(conv, fm);

  for (Eigen::Index k = 1; k < n; ++k) out[k] += conv[static_cast<std::size_t>(k - 1)];
  return out;
}

}  // namespace detail

CompletionCurve completion_curve(const Scenario& scenario, const QTable& table, double extent,
                                 double grid_step, ConvolutionMethod method) {
  scenario.validate();
  if (!(grid_step > 0.0)) throw ParameterError("grid step must be positive");
  const double offset = scenario.min_maneuver_distance();
  // At least the two-point grid {0, step}.
  const auto cells = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::ceil((extent - offset) / grid_step)));
  const Eigen::Index nodes = cells + 1;

  const auto& lanes = scenario.lanes;
  Eigen::ArrayXd cdf = lane_kernel(lanes[1], lanes[0].v, nodes, grid_step, table);
  for (std::size_t j = 2; j < lanes.size(); ++j) {
    const Eigen::ArrayXd kernel = lane_kernel(lanes[j], lanes[j - 1].v, nodes, grid_step, table);
    cdf = method == ConvolutionMethod::fft ? detail::stieltjes_convolve_fft(cdf, kernel)
                                           : detail::stieltjes_convolve_direct(cdf, kernel);
  }
  return CompletionCurve(offset, grid_step, cdf.cwiseMax(0.0).cwiseMin(1.0));
}

double p_multilane(const Scenario& scenario, const QTable& table, double grid_step) {
  scenario.validate();
  if (scenario.lanes.size() == 2)
    return p_two_lane(scenario.goal_distance, scenario.lanes[0].v, scenario.lanes[1], table);
  const CompletionCurve curve =
      completion_curve(scenario, table, scenario.goal_distance, grid_step, ConvolutionMethod::direct);
  return curve(scenario.goal_distance);
}

Eigen::ArrayXd evaluate_at(const Scenario& scenario, const QTable& table,
                           std::span<const double> distances, double grid_step) {
  scenario.validate();
  Eigen::ArrayXd out(static_cast<Eigen::Index>(distances.size()));
  if (scenario.lanes.size() == 2) {
    for (std::size_t i = 0; i < distances.size(); ++i) {
      const double d = distances[i];
      out[static_cast<Eigen::Index>(i)] =
          d > 0.0 ? p_two_lane(d, scenario.lanes[0].v, scenario.lanes[1], table) : 0.0;
    }
    return out;
  }
  double extent = 0.0;
  for (double d : distances) extent = std::max(extent, d);
  const CompletionCurve curve =
      completion_curve(scenario, table, extent, grid_step, ConvolutionMethod::fft);
  for (std::size_t i = 0; i < distances.size(); ++i) out[static_cast<Eigen::Index>(i)] = curve(distances[i]);
  return out;
}

ProbabilityProfile profile(const Scenario& scenario, const QTable& table, double sample_step,
                           double grid_step) {
  scenario.validate();
  if (!(sample_step > 0.0)) throw ParameterError("sample step must be positive");
  std::vector<double> distances;
  for (std::size_t k = 0;; ++k) {
    const double d = static_cast<double>(k) * sample_step;
    if (d > scenario.goal_distance * (1.0 + 1e-12)) break;
    distances.push_back(d);
  }
  if (scenario.goal_distance - distances.back() > 1e-9 * scenario.goal_distance)
    distances.push_back(scenario.goal_distance);

  ProbabilityProfile out;
  out.distances = Eigen::Map<const Eigen::ArrayXd>(distances.data(), static_cast<Eigen::Index>(distances.size()));
  out.probabilities = evaluate_at(scenario, table, distances, grid_step);
  out.scenario = scenario;
  return out;
}

}  // namespace lanewise
