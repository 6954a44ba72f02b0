#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace lanewise {

// Uniform grid axis: values start + i * step for i in [0, count).
struct Axis {
  double start = 0.0;
  double step = 0.0;
  std::size_t count = 0;

  double operator[](std::size_t i) const { return start + static_cast<double>(i) * step; }
  double back() const { return (*this)[count - 1]; }
  Eigen::ArrayXd values() const;

  friend bool operator==(const Axis&, const Axis&) = default;
};

struct GridAxes {
  Axis g;
  Axis mu;
  Axis sigma;

  // g in [0, 1] step 0.01, mu in [-5, 1] step 0.05, sigma in [0, 2] step 0.05.
  static GridAxes defaults();
  // 3x3x3 smoke grid.
  static GridAxes mini();

  std::size_t cell_count() const { return g.count * mu.count * sigma.count; }
  std::size_t column_count() const { return mu.count * sigma.count; }
  void validate() const;

  friend bool operator==(const GridAxes&, const GridAxes&) = default;
};

// Probability that a unit window over a point process with i.i.d.
// log-normal(mu, sigma) spacings contains a gap of at least g.
struct AbstractGapQuery {
  double g = 0.0;
  double mu = 0.0;
  double sigma = 0.0;

  void validate() const;
};

class QTable {
 public:
  static constexpr int kFormatVersion = 1;

  QTable() = default;
  // Values are g-major: index = (ig * mu.count + imu) * sigma.count + isigma.
  QTable(GridAxes axes, Eigen::ArrayXf values, std::uint64_t trials_per_cell, std::uint64_t seed,
         int version = kFormatVersion);

  const GridAxes& axes() const { return axes_; }
  const Eigen::ArrayXf& values() const { return values_; }
  std::uint64_t trials_per_cell() const { return trials_; }
  std::uint64_t seed() const { return seed_; }
  int version() const { return version_; }

  std::size_t index(std::size_t ig, std::size_t imu, std::size_t isigma) const {
    return (ig * axes_.mu.count + imu) * axes_.sigma.count + isigma;
  }
  float at(std::size_t ig, std::size_t imu, std::size_t isigma) const {
    return values_[static_cast<Eigen::Index>(index(ig, imu, isigma))];
  }

  // Throws IntegrityError when the value array does not match the axes.
  void check_shape() const;

 private:
  GridAxes axes_;
  Eigen::ArrayXf values_;
  std::uint64_t trials_ = 0;
  std::uint64_t seed_ = 0;
  int version_ = kFormatVersion;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

namespace detail {

// Draws one randomly placed unit window per call and returns the longest
// portion of any spacing that lies inside it. The window start is a uniform
// point of the stationary process: the spacing that straddles it is
// length-biased, which for log-normal(mu, sigma) is log-normal(mu + sigma^2, sigma).
class UnitWindowSampler {
 public:
  UnitWindowSampler(double mu, double sigma, std::uint64_t seed, std::uint64_t stream);

  double next_max_gap();

 private:
  double spacing();
  double straddling_spacing();

  double mu_;
  double sigma_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> unit_;
};

}  // namespace detail

// Monte Carlo estimate of q(g, mu, sigma) from `trials` windows drawn on
// stream `stream` of `seed`. Table column c is computed on stream c, so a cell
// equals estimate_q on its column stream.
double estimate_q(const AbstractGapQuery& query, std::uint64_t trials, std::uint64_t seed,
                  std::uint64_t stream = 0);

// Fills every cell. Each (mu, sigma) column uses its own stream and shares its
// windows across the g axis; results do not depend on `threads`.
QTable precompute_table(const GridAxes& axes, std::uint64_t trials_per_cell, std::uint64_t seed,
                        const ProgressFn& progress = {}, unsigned threads = 0);

// Trilinear interpolation, linear extrapolation outside the grid, clamped to [0, 1].
double lookup(const QTable& table, const AbstractGapQuery& query);

void save_table(const QTable& table, const std::filesystem::path& path);
QTable load_table(const std::filesystem::path& path);

struct IsoPoint {
  double g;
  double mu;
  double sigma;
  double q;
};

std::vector<IsoPoint> export_isosurface_slice(const QTable& table, double level, double tolerance);
void write_isosurface_csv(std::ostream& out, const std::vector<IsoPoint>& points);

}  // namespace lanewise
