#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kslab/core.hpp"

namespace kslab {

/// Squared Bessel process dR = 2 sqrt(R) dbeta + dimension dt, R_0 = start.
struct BesqSpec {
  double dimension = 2.0;
  double start = 0.0;
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_samples = 0;
};

/// Series evaluation ran past its term budget.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Variate generators driven by a NoiseStream (rejection-based, so the number
// of blocks consumed varies).
double sample_gamma(double shape, NoiseStream& noise);
std::uint64_t sample_poisson(double mean, NoiseStream& noise);

/// Exact draw of R_t: R_t = 2t Gamma(dimension/2 + P), P ~ Poisson(start/(2t)).
double besq_sample(const BesqSpec& spec, double t, NoiseStream& noise);

/// P(R_t <= y) as the Poisson-weighted series of regularized incomplete gamma
/// functions.
double besq_cdf(const BesqSpec& spec, double t, double y);

/// theta - 2 pi floor(theta / 2 pi), always in [0, 2 pi).
double wrap_angle(double theta);

/// Angular process driven by a positive radial path r: a uniform starting
/// angle, Gaussian increments of variance (t_{k+1}-t_k)/r_k (left point), and
/// wrapping onto [0, 2 pi).
///
/// With positivity_floor = 0 the radius must be strictly positive at every
/// interior time; only the first point may be 0, in which case the angle is
/// drawn uniformly at the first positive time. With a positive floor, any
/// stretch where r <= floor stops the angle, and a fresh uniform angle is drawn
/// at the next time the radius is back above the floor.
std::vector<TimedValue> angular_path_sample(std::span<const TimedValue> radial, NoiseStream& noise,
                                            double positivity_floor = 0.0);

/// Radial/angular construction of the pair difference D on the grid k dt,
/// k = 0..steps: R = |D|^2/4 is sampled with exact BESQ(2 - chi/(4 pi))
/// transitions (frozen at 0 once hit when the dimension is <= 0) and the angle
/// with angular_path_sample.
std::vector<Vec2> sample_pair_path(double chi, Vec2 d0, double dt, std::int64_t steps, NoiseStream& noise);

/// Two-sided Kolmogorov-Smirnov statistic against `cdf` with the asymptotic
/// p-value (Stephens' finite-n correction).
TestResult ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);

/// Kolmogorov survival function Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_survival(double lambda);

/// Pearson chi-square against equal cell probabilities.
TestResult chi_square_uniformity(std::span<const std::uint64_t> counts);

}  // namespace kslab
