#include "lanewise/qtable.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "lanewise/errors.hpp"
#include "lanewise/random.hpp"

namespace lanewise {

Eigen::ArrayXd Axis::values() const {
  Eigen::ArrayXd out(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) out[static_cast<Eigen::Index>(i)] = (*this)[i];
  return out;
}

GridAxes GridAxes::defaults() {
  return {Axis{0.0, 0.01, 101}, Axis{-5.0, 0.05, 121}, Axis{0.0, 0.05, 41}};
}

GridAxes GridAxes::mini() {
  return {Axis{0.0, 0.5, 3}, Axis{-2.0, 1.0, 3}, Axis{0.0, 0.4, 3}};
}

void GridAxes::validate() const {
  auto check = [](const Axis& a, const char* name) {
    if (a.count < 2 || !(a.step > 0.0) || !std::isfinite(a.start) || !std::isfinite(a.step))
      throw ParameterError(fmt::format("axis {} must be ascending with at least 2 values", name));
  };
  check(g, "g");
  check(mu, "mu");
  check(sigma, "sigma");
  if (g.start < 0.0) throw ParameterError("g axis must start at or above 0");
  if (sigma.start < 0.0) throw ParameterError("sigma axis must start at or above 0");
}

void AbstractGapQuery::validate() const {
  if (!(g > 0.0)) throw ParameterError(fmt::format("gap fraction must be positive, got {}", g));
  if (!(sigma >= 0.0)) throw ParameterError(fmt::format("sigma must be >= 0, got {}", sigma));
  if (!std::isfinite(mu)) throw ParameterError("mu must be finite");
}

QTable::QTable(GridAxes axes, Eigen::ArrayXf values, std::uint64_t trials_per_cell,
               std::uint64_t seed, int version)
    : axes_(axes), values_(std::move(values)), trials_(trials_per_cell), seed_(seed),
      version_(version) {}

void QTable::check_shape() const {
  if (static_cast<std::size_t>(values_.size()) != axes_.cell_count())
    throw IntegrityError(fmt::format("table holds {} values but axes describe {} cells",
                                     values_.size(), axes_.cell_count()));
}

namespace detail {

UnitWindowSampler::UnitWindowSampler(double mu, double sigma, std::uint64_t seed,
                                     std::uint64_t stream)
    : mu_(mu), sigma_(sigma), rng_(make_stream(seed, stream)) {}

double UnitWindowSampler::spacing() {
  if (sigma_ == 0.0) return std::exp(mu_);
  return std::exp(mu_ + sigma_ * normal_(rng_));
}

double UnitWindowSampler::straddling_spacing() {
  if (sigma_ == 0.0) return std::exp(mu_);
  return std::exp(mu_ + sigma_ * sigma_ + sigma_ * normal_(rng_));
}

double UnitWindowSampler::next_max_gap() {
  const double first = straddling_spacing();
  // Forward part of the straddling spacing, measured from the window start.
  double pos = (1.0 - unit_(rng_)) * first;
  double best = std::min(pos, 1.0);
  // Once the room left in the window is no larger than the best gap, no
  // later spacing can beat it.
  while (pos < 1.0 && 1.0 - pos > best) {
    const double s = spacing();
    best = std::max(best, std::min(s, 1.0 - pos));
    pos += s;
  }
  return best;
}

}  // namespace detail

double estimate_q(const AbstractGapQuery& query, std::uint64_t trials, std::uint64_t seed,
                  std::uint64_t stream) {
  query.validate();
  if (trials == 0) throw ParameterError("trials must be positive");
  detail::UnitWindowSampler sampler(query.mu, query.sigma, seed, stream);
  std::uint64_t hits = 0;
  for (std::uint64_t t = 0; t < trials; ++t)
    if (sampler.next_max_gap() >= query.g) ++hits;
  return static_cast<double>(hits) / static_cast<double>(trials);
}

namespace {

void fill_column(const GridAxes& axes, std::size_t imu, std::size_t isigma, std::uint64_t trials,
                 std::uint64_t seed, std::vector<double>& scratch, Eigen::ArrayXf& values) {
  const std::size_t column = imu * axes.sigma.count + isigma;
  detail::UnitWindowSampler sampler(axes.mu[imu], axes.sigma[isigma], seed, column);
  scratch.resize(trials);
  for (auto& s : scratch) s = sampler.next_max_gap();
  std::sort(scratch.begin(), scratch.end());

  for (std::size_t ig = 0; ig < axes.g.count; ++ig) {
    const double g = axes.g[ig];
    float q = 1.0f;
    if (g > 0.0) {
      const auto first_hit = std::lower_bound(scratch.begin(), scratch.end(), g);
      const auto hits = static_cast<double>(scratch.end() - first_hit);
      q = static_cast<float>(hits / static_cast<double>(trials));
    }
    values[static_cast<Eigen::Index>((ig * axes.mu.count + imu) * axes.sigma.count + isigma)] = q;
  }
}

}  // namespace

QTable precompute_table(const GridAxes& axes, std::uint64_t trials_per_cell, std::uint64_t seed,
                        const ProgressFn& progress, unsigned threads) {
  axes.validate();
  if (trials_per_cell == 0) throw ParameterError("trials per cell must be positive");

  Eigen::ArrayXf values(static_cast<Eigen::Index>(axes.cell_count()));
  const std::size_t columns = axes.column_count();
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, columns));

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  auto worker = [&] {
    std::vector<double> scratch;
    for (std::size_t c = next++; c < columns; c = next++) {
      fill_column(axes, c / axes.sigma.count, c % axes.sigma.count, trials_per_cell, seed,
                  scratch, values);
      const std::size_t finished = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(finished, columns);
      }
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return QTable(axes, std::move(values), trials_per_cell, seed);
}

namespace {

struct AxisPosition {
  std::size_t lower;
  double frac;  // may fall outside [0, 1] when extrapolating
};

AxisPosition locate(const Axis& axis, double x) {
  const double t = (x - axis.start) / axis.step;
  const double nearest = std::round(t);
  const auto last = static_cast<double>(axis.count - 1);
  if (nearest >= 0.0 && nearest <= last) {
    const auto i = static_cast<std::size_t>(nearest);
    if (std::abs(x - axis[i]) <= 1e-9 * axis.step) {
      if (i == axis.count - 1) return {i - 1, 1.0};
      return {i, 0.0};
    }
  }
  const double lower = std::clamp(std::floor(t), 0.0, last - 1.0);
  return {static_cast<std::size_t>(lower), t - lower};
}

template <typename Scalar>
Scalar lerp(Scalar a, Scalar b, Scalar f) {
  return a * (Scalar(1) - f) + b * f;
}

}  // namespace

double lookup(const QTable& table, const AbstractGapQuery& query) {
  table.check_shape();
  query.validate();
  if (query.g > 1.0) return 0.0;

  const GridAxes& axes = table.axes();
  const AxisPosition pg = locate(axes.g, query.g);
  const AxisPosition pm = locate(axes.mu, query.mu);
  const AxisPosition ps = locate(axes.sigma, query.sigma);

  auto v = [&](std::size_t dg, std::size_t dm, std::size_t ds) {
    return static_cast<double>(table.at(pg.lower + dg, pm.lower + dm, ps.lower + ds));
  };
  const double c00 = lerp(v(0, 0, 0), v(0, 0, 1), ps.frac);
  const double c01 = lerp(v(0, 1, 0), v(0, 1, 1), ps.frac);
  const double c10 = lerp(v(1, 0, 0), v(1, 0, 1), ps.frac);
  const double c11 = lerp(v(1, 1, 0), v(1, 1, 1), ps.frac);
  const double c0 = lerp(c00, c01, pm.frac);
  const double c1 = lerp(c10, c11, pm.frac);
  return std::clamp(lerp(c0, c1, pg.frac), 0.0, 1.0);
}

std::vector<IsoPoint> export_isosurface_slice(const QTable& table, double level,
                                              double tolerance) {
  if (!(level > 0.0 && level < 1.0)) throw ParameterError("isosurface level must be in (0, 1)");
  if (!(tolerance >= 0.0)) throw ParameterError("tolerance must be >= 0");
  table.check_shape();
  const GridAxes& axes = table.axes();
  std::vector<IsoPoint> out;
  for (std::size_t ig = 0; ig < axes.g.count; ++ig)
    for (std::size_t im = 0; im < axes.mu.count; ++im)
      for (std::size_t is = 0; is < axes.sigma.count; ++is) {
        const double q = table.at(ig, im, is);
        if (std::abs(q - level) <= tolerance) out.push_back({axes.g[ig], axes.mu[im], axes.sigma[is], q});
      }
  return out;
}

void write_isosurface_csv(std::ostream& out, const std::vector<IsoPoint>& points) {
  out << "g,mu,sigma,q\n";
  for (const auto& p : points) out << fmt::format("{:.6g},{:.6g},{:.6g},{:.6g}\n", p.g, p.mu, p.sigma, p.q);
}

}  // namespace lanewise
