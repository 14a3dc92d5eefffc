#include "kslab/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <utility>

#include <boost/math/quadrature/exp_sinh.hpp>

namespace kslab {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

void check_point_cloud_atoms(const std::vector<Vec2>& pts) {
  std::set<std::pair<double, double>> seen;
  for (const auto& p : pts) {
    if (!seen.emplace(p.x, p.y).second) {
      throw ConfigError("initial_law: point_cloud contains the repeated point (" +
                        std::to_string(p.x) + ", " + std::to_string(p.y) +
                        "); an atomic initial law is not admissible here");
    }
  }
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kPhiloxM0, ctr[0], lo0, hi0);
    mulhilo(kPhiloxM1, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

std::array<std::uint64_t, 2> NoiseStream::next_block() {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
      static_cast<std::uint32_t>(replica_), static_cast<std::uint32_t>(replica_ >> 32)};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
  ++counter_;
  const auto r = philox4x32(ctr, key);
  return {(static_cast<std::uint64_t>(r[1]) << 32) | r[0],
          (static_cast<std::uint64_t>(r[3]) << 32) | r[2]};
}

double NoiseStream::uniform() {
  const auto b = next_block();
  return static_cast<double>(b[0] >> 11) * 0x1.0p-53;
}

Vec2 NoiseStream::gaussian_pair() {
  const auto b = next_block();
  // u1 in (0, 1] keeps the logarithm finite.
  const double u1 = static_cast<double>((b[0] >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(b[1] >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = kTwoPi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

namespace {

Vec2 draw_one(const InitialLaw& law, NoiseStream& noise) {
  return std::visit(
      [&](const auto& l) -> Vec2 {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, StandardGaussian>) {
          return noise.gaussian_pair();
        } else if constexpr (std::is_same_v<L, UniformDisk>) {
          const double r = l.radius * std::sqrt(noise.uniform());
          const double a = kTwoPi * noise.uniform();
          return {r * std::cos(a), r * std::sin(a)};
        } else {
          throw ConfigError("initial_law: nested deterministic or product laws cannot be drawn singly");
        }
      },
      law.law);
}

}  // namespace

std::vector<Vec2> sample_initial(const InitialLaw& law, std::size_t n, NoiseStream& noise) {
  if (n < 1) throw ConfigError("sample_initial: need at least one particle");
  if (const auto* cloud = std::get_if<PointCloud>(&law.law)) {
    if (cloud->points.size() != n) {
      throw ConfigError("initial_law: point_cloud has " + std::to_string(cloud->points.size()) +
                        " points but n_particles = " + std::to_string(n));
    }
    return cloud->points;
  }
  if (const auto* prod = std::get_if<ProductOf>(&law.law)) {
    if (prod->factors.size() != 2) throw ConfigError("initial_law: product_of needs exactly two factors");
    if (prod->split > n) throw ConfigError("initial_law: product_of split exceeds n_particles");
    auto first = sample_initial(prod->factors[0], prod->split, noise);
    if (prod->split == n) return first;
    auto second = sample_initial(prod->factors[1], n - prod->split, noise);
    first.insert(first.end(), second.begin(), second.end());
    return first;
  }
  std::vector<Vec2> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(draw_one(law, noise));
  return out;
}

void require_non_atomic(const InitialLaw& law) {
  if (const auto* cloud = std::get_if<PointCloud>(&law.law)) {
    check_point_cloud_atoms(cloud->points);
  } else if (const auto* prod = std::get_if<ProductOf>(&law.law)) {
    std::vector<Vec2> pts;
    for (const auto& f : prod->factors) {
      require_non_atomic(f);
      if (const auto* c = std::get_if<PointCloud>(&f.law)) pts.insert(pts.end(), c->points.begin(), c->points.end());
    }
    check_point_cloud_atoms(pts);
  }
}

double first_moment(const InitialLaw& law) {
  return std::visit(
      [](const auto& l) -> double {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, StandardGaussian>) {
          // |X| has the Rayleigh density r exp(-r^2/2).
          boost::math::quadrature::exp_sinh<double> integrator;
          return integrator.integrate(
              [](double r) { return std::sqrt(1.0 + r * r) * r * std::exp(-0.5 * r * r); }, 0.0,
              std::numeric_limits<double>::infinity());
        } else if constexpr (std::is_same_v<L, UniformDisk>) {
          const double r2 = l.radius * l.radius;
          return 2.0 / (3.0 * r2) * (std::pow(1.0 + r2, 1.5) - 1.0);
        } else if constexpr (std::is_same_v<L, PointCloud>) {
          double s = 0.0;
          for (const auto& p : l.points) s += std::sqrt(1.0 + norm2(p));
          return s / static_cast<double>(l.points.size());
        } else {
          throw ConfigError("first_moment: product laws are not identically distributed");
        }
      },
      law.law);
}

void validate(const SimParams& p) {
  auto fail = [](const std::string& field, const std::string& what) {
    throw ConfigError("field '" + field + "': " + what);
  };
  if (p.n_particles < 2) fail("n_particles", "must be an integer >= 2");
  if (!(p.chi > 0.0) || !std::isfinite(p.chi)) fail("chi", "must be a positive finite real");
  if (!(p.epsilon >= 0.0 && p.epsilon <= 1.0)) fail("epsilon", "must lie in [0, 1]");
  if (p.ell && !(*p.ell > 0.0 && std::isfinite(*p.ell))) fail("ell", "must be a positive finite real");
  if (!(p.dt > 0.0) || !std::isfinite(p.dt)) fail("dt", "must be a positive finite real");
  if (!(p.horizon > 0.0) || !std::isfinite(p.horizon)) fail("horizon", "must be a positive finite real");
  if (p.dt > p.horizon) fail("dt", "must not exceed horizon");
  if (p.replicas < 1) fail("replicas", "must be an integer >= 1");
  if (const auto* cloud = std::get_if<PointCloud>(&p.initial_law.law)) {
    if (cloud->points.size() != static_cast<std::size_t>(p.n_particles)) {
      fail("initial_law", "point_cloud has " + std::to_string(cloud->points.size()) +
                              " points but n_particles = " + std::to_string(p.n_particles));
    }
  }
}

std::int64_t step_count(double horizon, double dt) {
  const double ratio = horizon / dt;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, nearest)) return static_cast<std::int64_t>(nearest);
  return static_cast<std::int64_t>(std::ceil(ratio));
}

}  // namespace kslab
