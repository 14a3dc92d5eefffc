#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kslab/core.hpp"
#include "kslab/integrator.hpp"

namespace kslab {

// ---------------------------------------------------------------------------
// Subset variances and Bessel dimensions

/// R^I = 1/2 sum_{i in I} |x_i - xbar_I|^2. Throws std::domain_error for |I| < 2.
double subset_variance(std::span<const Vec2> positions, std::span<const std::size_t> subset);
/// Same with I = every particle.
double subset_variance(std::span<const Vec2> positions);

/// delta_{N,chi}(k) = (k - 1)(2 - chi k / (4 pi N)); k may be real.
double bessel_dimension(int n, double chi, double k);

struct CollisionRoots {
  double x_minus = 0.0;
  double x_plus = 0.0;
};

/// Roots of delta_{N,chi}(x) = 2, or nullopt when the discriminant is negative.
std::optional<CollisionRoots> collision_roots(int n, double chi);

enum class Regime { no_collision, reflecting, sticky };
const char* to_string(Regime r);

struct RegimeTable {
  int n = 0;
  double chi = 0.0;
  /// regimes[k - 2] for k = 2..n
  std::vector<Regime> regimes;
  std::optional<CollisionRoots> roots;

  Regime at(int k) const { return regimes.at(static_cast<std::size_t>(k - 2)); }
};

/// Per-k sign tests on delta: >= 2 no collision, <= 0 sticky, else reflecting.
/// Comparisons carry a 1e-12 relative tolerance so that the table boundaries
/// (e.g. chi = 6 pi for N = 5) land on the inclusive side.
RegimeTable classify_regimes(int n, double chi);

/// 8 pi (N - 2) / (N - 1): below or at it, no triple ever collides.
double triple_collision_threshold(int n);

/// Smallest k with k >= 8 pi N / chi (boundary-tolerant), i.e. the smallest
/// sticky cluster size.
int sticky_cluster_size(int n, double chi);

// ---------------------------------------------------------------------------
// Moment bounds

/// (2 sqrt2 m + 4 sqrt2 T)^alpha / (alpha (2 alpha - (N-1) chi / (pi N))).
/// Throws std::domain_error unless (N-1) chi / (2 pi N) < alpha < 1 and m >= 1.
double fund_bound(double first_moment, double horizon, double alpha, int n, double chi);

/// Lower end of the admissible alpha interval, (N-1) chi / (2 pi N).
double fund_alpha_min(int n, double chi);

/// m + 2t
double first_moment_bound(double first_moment, double t);

// ---------------------------------------------------------------------------
// Separations and path functionals

struct Separations {
  double min_pair = 0.0;
  double min_triple_sum = 0.0;  // +inf when N < 3
};

Separations min_separations(std::span<const Vec2> positions);
/// The pair part alone, +inf for fewer than 2 points.
double min_pair_distance(std::span<const Vec2> positions);

/// max(10 eps, 10 sqrt(dt))
double default_triple_threshold(double eps, double dt);
/// eps, or sqrt(dt) when eps = 0.
double default_distance_floor(double eps, double dt);

/// Left-point Riemann sum of |X^i - X^j|^{alpha-2} over the recorded grid.
/// Distances below `distance_floor` are replaced by the floor.
double path_moment(const TrajectoryRecord& trajectory, double alpha, std::size_t i, std::size_t j,
                   double distance_floor);

/// Streaming version of path_moment for use inside a simulation loop.
class PathMomentAccumulator {
 public:
  PathMomentAccumulator(double alpha, std::size_t i, std::size_t j, double distance_floor);
  /// Adds the left-point contribution of positions held over [t, t + h).
  void add(std::span<const Vec2> positions, double h);
  double value() const { return sum_; }

 private:
  double exponent_;
  std::size_t i_, j_;
  double floor_;
  double sum_ = 0.0;
};

struct SlopeFit {
  double slope = 0.0;
  double half_width = 0.0;  // 95% Student-t
  double intercept = 0.0;
};

/// Ordinary least squares. Throws std::domain_error for < 3 points or a
/// degenerate time grid.
SlopeFit slope_fit(std::span<const TimedValue> series);

struct Histogram2D {
  double extent = 1.0;  // grid covers [-extent, extent]^2
  int bins = 1;
  std::vector<double> cells;  // row-major, cells[iy * bins + ix]
  double at(int ix, int iy) const { return cells[static_cast<std::size_t>(iy * bins + ix)]; }
};

/// Empirical measure on a bins x bins grid; each in-grid particle adds 1/N.
Histogram2D density_histogram(std::span<const Vec2> positions, double extent, int bins);

// ---------------------------------------------------------------------------
// Ensemble statistics

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

MeanEstimate mean_estimate(std::span<const double> values);
double median(std::vector<double> values);
double pearson_correlation(std::span<const double> a, std::span<const double> b);
/// Two-sided Student-t quantile at confidence `level` with `dof` degrees of freedom.
double student_t_quantile(double level, double dof);

// ---------------------------------------------------------------------------
// Report

struct DiagnosticEntry {
  std::string name;
  std::optional<double> sweep_value;
  double estimate = 0.0;
  std::optional<double> half_width;
  std::optional<double> confidence;
  std::size_t n = 0;
  std::optional<double> bound;
  std::optional<double> p_value;
};

struct DiagnosticsReport {
  SimParams params;
  std::vector<DiagnosticEntry> scalars;
  std::map<std::string, std::vector<TimedValue>> series;

  DiagnosticEntry& add(DiagnosticEntry e) {
    scalars.push_back(std::move(e));
    return scalars.back();
  }
  /// First entry with this name (and sweep value, when given).
  const DiagnosticEntry* find(const std::string& name, std::optional<double> sweep_value = std::nullopt) const;
};

/// Header: name,sweep_value,estimate,half_width,confidence,n,bound,p_value
void write_diagnostics_csv(std::ostream& os, const DiagnosticsReport& report);
DiagnosticsReport read_diagnostics_csv(std::istream& is);
void write_series_csv(std::ostream& os, const std::vector<TimedValue>& series);

}  // namespace kslab
