#include "kslab/bessel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

namespace kslab {

double sample_gamma(double shape, NoiseStream& noise) {
  if (!(shape > 0.0)) throw std::domain_error("sample_gamma: shape must be positive");
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) U^{1/a}
    const double g = sample_gamma(shape + 1.0, noise);
    return g * std::pow(noise.uniform(), 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = noise.gaussian_pair().x;
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = noise.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::uint64_t sample_poisson(double mean, NoiseStream& noise) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw std::domain_error("sample_poisson: mean must be finite and >= 0");
  if (mean == 0.0) return 0;
  if (mean < 10.0) {
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double prod = noise.uniform();
    while (prod > limit) {
      ++k;
      prod *= noise.uniform();
    }
    return k;
  }
  // Hormann's transformed rejection with squeeze (PTRS).
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = noise.uniform() - 0.5;
    const double v = noise.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        -mean + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

double besq_sample(const BesqSpec& spec, double t, NoiseStream& noise) {
  if (!(spec.dimension > 0.0)) {
    throw std::domain_error("besq_sample: dimension must be > 0 (use frozen semantics for dimension <= 0)");
  }
  if (!(t > 0.0)) throw std::domain_error("besq_sample: t must be > 0");
  if (!(spec.start >= 0.0)) throw std::domain_error("besq_sample: start must be >= 0");
  const auto extra = sample_poisson(spec.start / (2.0 * t), noise);
  return 2.0 * t * sample_gamma(0.5 * spec.dimension + static_cast<double>(extra), noise);
}

double besq_cdf(const BesqSpec& spec, double t, double y) {
  if (!(spec.dimension > 0.0)) throw std::domain_error("besq_cdf: dimension must be > 0");
  if (!(t > 0.0)) throw std::domain_error("besq_cdf: t must be > 0");
  if (!(y > 0.0)) return 0.0;
  if (std::isinf(y)) return 1.0;
  const double shape = 0.5 * spec.dimension;
  const double u = y / (2.0 * t);
  const double lambda = spec.start / (2.0 * t);
  if (lambda == 0.0) return boost::math::gamma_p(shape, u);

  constexpr int kBudget = 200000;
  constexpr double kTail = 1e-17;
  const double j0 = std::floor(lambda);
  const double w0 = std::exp(-lambda + j0 * std::log(lambda) - std::lgamma(j0 + 1.0));
  double sum = w0 * boost::math::gamma_p(shape + j0, u);
  int terms = 1;
  // Upward from the Poisson mode.
  double w = w0;
  for (double j = j0 + 1.0;; j += 1.0) {
    w *= lambda / j;
    const double p = boost::math::gamma_p(shape + j, u);
    sum += w * p;
    // Incomplete gamma terms decrease in j, so the tail is bounded by w-sums.
    if (w < kTail && (p < kTail || j > lambda + 10.0 * std::sqrt(lambda) + 20.0)) break;
    if (++terms > kBudget) throw NumericError("besq_cdf: series exceeded its term budget");
  }
  // Downward.
  w = w0;
  for (double j = j0 - 1.0; j >= 0.0; j -= 1.0) {
    w *= (j + 1.0) / lambda;
    sum += w * boost::math::gamma_p(shape + j, u);
    if (w < kTail) break;
    if (++terms > kBudget) throw NumericError("besq_cdf: series exceeded its term budget");
  }
  return std::clamp(sum, 0.0, 1.0);
}

double wrap_angle(double theta) {
  double r = theta - kTwoPi * std::floor(theta / kTwoPi);
  // floor can leave r == 2 pi for tiny negative theta.
  if (r >= kTwoPi) r -= kTwoPi;
  if (r < 0.0) r = 0.0;
  return r;
}

std::vector<TimedValue> angular_path_sample(std::span<const TimedValue> radial, NoiseStream& noise,
                                            double positivity_floor) {
  std::vector<TimedValue> out;
  if (radial.empty()) return out;
  out.reserve(radial.size());
  for (std::size_t k = 0; k < radial.size(); ++k) {
    if (!(radial[k].value >= 0.0)) {
      throw std::domain_error("angular_path_sample: negative radius at index " + std::to_string(k));
    }
    if (positivity_floor == 0.0 && k > 0 && k + 1 < radial.size() && radial[k].value == 0.0) {
      throw std::domain_error("angular_path_sample: radius vanishes at interior index " + std::to_string(k));
    }
  }
  auto positive = [&](double r) { return r > positivity_floor; };

  double theta = kTwoPi * noise.uniform();
  bool pending = !positive(radial[0].value);
  out.push_back({radial[0].time, wrap_angle(theta)});
  for (std::size_t k = 0; k + 1 < radial.size(); ++k) {
    const double h = radial[k + 1].time - radial[k].time;
    const double xi = noise.gaussian_pair().x;
    if (positive(radial[k].value)) {
      theta += std::sqrt(h / radial[k].value) * xi;
      // Keep the accumulator bounded; wrapping commutes with the increments.
      theta = wrap_angle(theta);
    } else {
      pending = true;
    }
    if (pending && positive(radial[k + 1].value)) {
      theta = kTwoPi * noise.uniform();
      pending = false;
    }
    out.push_back({radial[k + 1].time, wrap_angle(theta)});
  }
  return out;
}

std::vector<Vec2> sample_pair_path(double chi, Vec2 d0, double dt, std::int64_t steps, NoiseStream& noise) {
  const double dim = 2.0 - chi / (4.0 * kPi);
  if (!(dim > 0.0)) throw std::domain_error("sample_pair_path: needs chi < 8 pi (positive Bessel dimension)");
  std::vector<TimedValue> radial;
  radial.reserve(static_cast<std::size_t>(steps) + 1);
  double r = 0.25 * norm2(d0);
  radial.push_back({0.0, r});
  for (std::int64_t k = 0; k < steps; ++k) {
    r = besq_sample({dim, r}, dt, noise);
    radial.push_back({static_cast<double>(k + 1) * dt, r});
  }
  auto angle = angular_path_sample(radial, noise, std::numeric_limits<double>::min());
  if (norm2(d0) > 0.0) {
    // Rotate so the path starts along d0 instead of a uniform direction.
    const double shift = std::atan2(d0.y, d0.x) - angle[0].value;
    for (auto& a : angle) a.value = wrap_angle(a.value + shift);
  }
  std::vector<Vec2> d(radial.size());
  for (std::size_t k = 0; k < radial.size(); ++k) {
    const double len = 2.0 * std::sqrt(radial[k].value);
    d[k] = {len * std::cos(angle[k].value), len * std::sin(angle[k].value)};
  }
  return d;
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    // Jacobi-theta form, fast for small lambda.
    const double c = -kPi * kPi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double term = std::exp(c * (2.0 * k - 1.0) * (2.0 * k - 1.0));
      s += term;
      if (term < 1e-18) break;
    }
    return std::clamp(1.0 - std::sqrt(kTwoPi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

TestResult ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw std::domain_error("ks_statistic: need at least one sample");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d), x.size()};
}

TestResult chi_square_uniformity(std::span<const std::uint64_t> counts) {
  if (counts.size() < 2) throw std::domain_error("chi_square_uniformity: need at least two bins");
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  if (!(total > 0.0)) throw std::domain_error("chi_square_uniformity: total count must be positive");
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) {
    const double diff = static_cast<double>(c) - expected;
    stat += diff * diff / expected;
  }
  const double dof = static_cast<double>(counts.size() - 1);
  return {stat, boost::math::gamma_q(0.5 * dof, 0.5 * stat), static_cast<std::size_t>(total)};
}

}  // namespace kslab
