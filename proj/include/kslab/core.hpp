#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace kslab {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double norm2(Vec2 a) { return dot(a, a); }
inline double norm(Vec2 a) { return std::sqrt(norm2(a)); }
inline bool is_finite(Vec2 a) { return std::isfinite(a.x) && std::isfinite(a.y); }

/// One point of a scalar time series.
struct TimedValue {
  double time = 0.0;
  double value = 0.0;
};

/// Raised for invalid run configuration (bad field, wrong cardinality, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Initial laws

struct StandardGaussian {};

struct UniformDisk {
  double radius = 1.0;
};

struct PointCloud {
  std::vector<Vec2> points;
};

struct InitialLaw;

/// The first `split` particles are drawn from factors[0], the rest from
/// factors[1].
struct ProductOf {
  std::vector<InitialLaw> factors;
  std::size_t split = 1;
};

struct InitialLaw {
  std::variant<StandardGaussian, UniformDisk, PointCloud, ProductOf> law;
};

/// Throws ConfigError when a point cloud (possibly nested in a product)
/// contains an atom, i.e. two identical points.
void require_non_atomic(const InitialLaw& law);

/// <f0, sqrt(1+|x|^2)>, the first-moment functional of the initial law.
double first_moment(const InitialLaw& law);

// ---------------------------------------------------------------------------
// Randomness

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Counter-based Gaussian/uniform source.
///
/// Every draw is a pure function of (seed, replica_index, counter): the seed is
/// the Philox key, the replica index occupies the upper half of the Philox
/// counter and the stream counter the lower half. Each draw consumes exactly
/// one 128-bit block. Gaussians come from Box-Muller on the two 64-bit halves
/// of the block, so the method is fixed and the counter advance is constant.
class NoiseStream {
 public:
  NoiseStream() = default;
  NoiseStream(std::uint64_t seed, std::uint64_t replica_index, std::uint64_t counter = 0)
      : seed_(seed), replica_(replica_index), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t replica_index() const { return replica_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

  /// Raw 128-bit block, advances the counter by one.
  std::array<std::uint64_t, 2> next_block();
  /// Uniform on [0, 1), 53-bit resolution.
  double uniform();
  /// Standard 2D Gaussian.
  Vec2 gaussian_pair();

  static constexpr const char* kMethod = "philox4x32-10/box-muller-53bit";

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t replica_ = 0;
  std::uint64_t counter_ = 0;
};

inline Vec2 gaussian_pair(NoiseStream& noise) { return noise.gaussian_pair(); }

/// n i.i.d. draws from the law (point clouds are returned verbatim).
std::vector<Vec2> sample_initial(const InitialLaw& law, std::size_t n, NoiseStream& noise);

// ---------------------------------------------------------------------------
// Run parameters

struct SimParams {
  int n_particles = 2;
  double chi = 1.0;
  double epsilon = 0.0;
  std::optional<double> ell;
  double dt = 1e-3;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  InitialLaw initial_law{StandardGaussian{}};
  int replicas = 1;
};

/// Checks the scalar invariants of SimParams; throws ConfigError naming the
/// offending field.
void validate(const SimParams& params);

/// Number of Euler steps covering [0, horizon]: ceil(horizon/dt), tolerant of
/// the roundoff in horizon/dt.
std::int64_t step_count(double horizon, double dt);

}  // namespace kslab
