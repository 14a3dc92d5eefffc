#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "kslab/core.hpp"
#include "kslab/kernels.hpp"

namespace kslab {

struct ParticleSystemState {
  double time = 0.0;
  std::vector<Vec2> positions;
};

/// Cubed pair process Z = |D|^2 D. `frozen` is only ever set for chi >= 8 pi.
struct PairState {
  double time = 0.0;
  Vec2 z;
  bool frozen = false;
};

/// Non-finite state produced by an Euler step.
class IntegrationBlowUp : public std::runtime_error {
 public:
  IntegrationBlowUp(std::int64_t step, double time);
  std::int64_t step() const { return step_; }
  double time() const { return time_; }

 private:
  std::int64_t step_;
  double time_;
};

/// Snapshots of one replica. Snapshot k sits at time k * record_every * dt.
struct TrajectoryRecord {
  SimParams params;
  std::int64_t record_every = 1;
  std::vector<double> times;
  std::vector<ParticleSystemState> states;
  std::uint64_t noise_checksum = 0;
  /// Every Gaussian injected, step-major (N per step); filled on request.
  std::vector<Vec2> noise;
};

/// Folds one Gaussian draw into a running checksum (bit patterns, FNV-1a style).
std::uint64_t fold_noise_checksum(std::uint64_t checksum, Vec2 xi);
inline constexpr std::uint64_t kNoiseChecksumSeed = 0xcbf29ce484222325ull;

// ---------------------------------------------------------------------------
// N-particle system

/// In place x_i += sqrt(2 dt) xi_i + dt b_i with b the drift at the pre-step
/// positions. `scratch` receives the drift and must have N entries. Throws
/// IntegrationBlowUp when a coordinate becomes non-finite.
void advance_system(ParticleSystemState& state, const SimParams& params, std::span<const Vec2> xi,
                    std::span<Vec2> scratch);

ParticleSystemState step_system(const ParticleSystemState& state, const SimParams& params,
                                std::span<const Vec2> xi);
ParticleSystemState step_system(const ParticleSystemState& state, const SimParams& params,
                                NoiseStream& noise);

/// Called once with step 0 and the initial state (empty xi), then after every
/// step with the new state and the Gaussians just used.
using StepObserver = std::function<void(std::int64_t step, const ParticleSystemState&, std::span<const Vec2> xi)>;

struct SimulateOptions {
  std::int64_t record_every = 1;
  bool keep_noise = false;
  StepObserver observer;
};

/// Draws the initial positions from params.initial_law and then runs
/// step_count(horizon, dt) Euler steps, all from `noise`.
TrajectoryRecord simulate_system(const SimParams& params, NoiseStream& noise, const SimulateOptions& options);
TrajectoryRecord simulate_system(const SimParams& params, NoiseStream& noise, std::int64_t record_every);

/// Same, but from given initial positions and with explicit per-step noise
/// (steps x N Gaussians, step-major). Used for replays.
TrajectoryRecord replay_system(const SimParams& params, std::span<const Vec2> initial,
                               std::span<const Vec2> noise, std::int64_t record_every);

// ---------------------------------------------------------------------------
// Two-particle difference process

/// d += 2 sqrt(dt) xi + dt chi K_eps(d)
Vec2 step_pair_regularized(Vec2 d, double chi, double eps, double dt, Vec2 xi);
Vec2 step_pair_regularized(Vec2 d, double chi, double eps, double dt, NoiseStream& noise);

using Mat2 = std::array<double, 4>;  // row-major

/// sigma(z) = 2 |z|^{-4/3} (|z|^2 I + 2 z z^T), sigma(0) = 0.
Mat2 cubed_diffusion(Vec2 z);
/// b(z) = (16 - 3 chi / (2 pi)) |z|^{-2/3} z, b(0) = 0.
Vec2 cubed_drift(Vec2 z, double chi);

/// 10 dt^{3/4}
double default_freeze_radius(double dt);

/// One Euler step of the cubed process. A frozen state only advances its
/// time. For chi >= 8 pi a step ending within freeze_radius of the origin
/// freezes at z = 0.
PairState step_cubed(const PairState& state, double chi, double dt, Vec2 xi, double freeze_radius);
PairState step_cubed(const PairState& state, double chi, double dt, NoiseStream& noise, double freeze_radius);

/// |d|^2 d
Vec2 lift_pair(Vec2 d);
/// |z|^{-2/3} z for z != 0, else 0.
Vec2 project_pair(Vec2 z);
inline Vec2 project_pair(const PairState& s) { return project_pair(s.z); }

// ---------------------------------------------------------------------------
// Serialization

/// Header "replica,time,particle_index,x,y".
void write_snapshot_header(std::ostream& os, bool with_mass = false);
/// One row per particle per snapshot, floats with 17 significant digits.
void write_snapshots(std::ostream& os, std::uint64_t replica, const TrajectoryRecord& record);

/// 17-significant-digit rendering shared by all CSV writers.
std::string format_real(double v);

}  // namespace kslab
