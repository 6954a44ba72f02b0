#include "lanewise/estimation.hpp"

#include <cmath>
#include <istream>
#include <string>

#include <fmt/format.h>

#include "lanewise/errors.hpp"

namespace lanewise {

LognormalFit fit_lognormal(const HeadwaySample& sample) {
  const auto& x = sample.values;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] > 0.0) || !std::isfinite(x[i]))
      throw ParameterError(fmt::format("headway #{} is not a positive number: {}", i + 1, x[i]));
  if (x.size() < kMinFitSamples)
    throw SampleSizeError(fmt::format("need at least {} headways to fit, got {}", kMinFitSamples, x.size()));

  const Eigen::ArrayXd logs =
      Eigen::Map<const Eigen::ArrayXd>(x.data(), static_cast<Eigen::Index>(x.size())).log();
  const double mu = logs.mean();
  const double ss = (logs - mu).square().sum();
  return {mu, std::sqrt(ss / static_cast<double>(x.size() - 1))};
}

void TrafficSpec::validate() const {
  if (!(rho_l > 0.0)) throw ParameterError(fmt::format("rho_l must be positive, got {}", rho_l));
  if (!(delta > 0.0)) throw ParameterError(fmt::format("delta must be positive, got {}", delta));
  if (!(s0 >= 0.0)) throw ParameterError(fmt::format("s0 must be >= 0, got {}", s0));
  if (!(sigma_default >= 0.0)) throw ParameterError("sigma_default must be >= 0");
  if (!(t_lc >= 0.0)) throw ParameterError("t_lc must be >= 0");
  if (speeds_kmh.size() < 2) throw ParameterError("at least two lane speeds are required");
  for (double s : speeds_kmh)
    if (!(s > 0.0)) throw ParameterError(fmt::format("lane speed must be positive, got {} km/h", s));
}

std::vector<LaneProfile> profiles_from_spec(const TrafficSpec& spec) {
  spec.validate();
  std::vector<LaneProfile> out;
  out.reserve(spec.speeds_kmh.size());
  const double sigma = spec.sigma_default;
  for (double kmh : spec.speeds_kmh) {
    const double v = kmh / 3.6;
    const double mean_headway = v * 3600.0 / spec.rho_l;
    out.push_back({v, std::log(mean_headway) - 0.5 * sigma * sigma, sigma, spec.s0 + spec.delta * v, spec.t_lc});
  }
  return out;
}

namespace {

bool parse_number(const std::string& text, double& value) {
  std::size_t used = 0;
  try {
    value = std::stod(text, &used);
  } catch (const std::logic_error&) {
    return false;
  }
  return used == text.size();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

HeadwaySample read_headway_sample(std::istream& in, int lane_id) {
  HeadwaySample sample;
  sample.lane_id = lane_id;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    std::string field = trim(line);
    if (field.empty()) continue;
    if (const auto comma = field.find_first_of(",;\t"); comma != std::string::npos) field = trim(field.substr(0, comma));
    double value = 0.0;
    const bool numeric = parse_number(field, value);
    if (!numeric && first_content) {
      first_content = false;
      continue;
    }
    first_content = false;
    if (!numeric) throw ParameterError(fmt::format("line {}: not a number: '{}'", line_no, field));
    if (!(value > 0.0) || !std::isfinite(value))
      throw ParameterError(fmt::format("line {}: headway must be positive, got {}", line_no, field));
    sample.values.push_back(value);
  }
  return sample;
}

}  // namespace lanewise
