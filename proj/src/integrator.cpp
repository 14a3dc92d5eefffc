#include "kslab/integrator.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace kslab {

IntegrationBlowUp::IntegrationBlowUp(std::int64_t step, double time)
    : std::runtime_error("integration blow-up: non-finite state at step " + std::to_string(step) +
                         " (t = " + std::to_string(time) + ")"),
      step_(step),
      time_(time) {}

std::uint64_t fold_noise_checksum(std::uint64_t h, Vec2 xi) {
  constexpr std::uint64_t kPrime = 0x100000001b3ull;
  h = (h ^ std::bit_cast<std::uint64_t>(xi.x)) * kPrime;
  h = (h ^ std::bit_cast<std::uint64_t>(xi.y)) * kPrime;
  return h;
}

void advance_system(ParticleSystemState& state, const SimParams& params, std::span<const Vec2> xi,
                    std::span<Vec2> scratch) {
  auto& x = state.positions;
  drift_field_into(x, params.chi, params.epsilon, params.ell, scratch);
  const double noise_scale = std::sqrt(2.0 * params.dt);
  const double dt = params.dt;
  bool finite = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i].x += noise_scale * xi[i].x + dt * scratch[i].x;
    x[i].y += noise_scale * xi[i].y + dt * scratch[i].y;
    finite = finite && is_finite(x[i]);
  }
  const auto step = static_cast<std::int64_t>(std::llround(state.time / dt));
  state.time = static_cast<double>(step + 1) * dt;
  if (!finite) throw IntegrationBlowUp(step, state.time);
}

ParticleSystemState step_system(const ParticleSystemState& state, const SimParams& params,
                                std::span<const Vec2> xi) {
  ParticleSystemState next = state;
  std::vector<Vec2> scratch(state.positions.size());
  advance_system(next, params, xi, scratch);
  return next;
}

ParticleSystemState step_system(const ParticleSystemState& state, const SimParams& params,
                                NoiseStream& noise) {
  std::vector<Vec2> xi(state.positions.size());
  for (auto& g : xi) g = noise.gaussian_pair();
  return step_system(state, params, xi);
}

namespace {

// Shared driver: `next_noise(step, xi)` fills the Gaussians for one step.
template <class NoiseSource>
TrajectoryRecord run_system(const SimParams& params, std::vector<Vec2> initial, NoiseSource&& next_noise,
                            const SimulateOptions& options) {
  if (options.record_every < 1) throw ConfigError("record_every must be >= 1");
  const std::size_t n = initial.size();
  const std::int64_t steps = step_count(params.horizon, params.dt);

  TrajectoryRecord rec;
  rec.params = params;
  rec.record_every = options.record_every;
  rec.noise_checksum = kNoiseChecksumSeed;
  if (options.keep_noise) rec.noise.reserve(static_cast<std::size_t>(steps) * n);

  ParticleSystemState state{0.0, std::move(initial)};
  rec.times.push_back(0.0);
  rec.states.push_back(state);

  if (options.observer) options.observer(0, state, {});
  std::vector<Vec2> xi(n), scratch(n);
  for (std::int64_t k = 0; k < steps; ++k) {
    next_noise(k, std::span<Vec2>(xi));
    for (const auto& g : xi) rec.noise_checksum = fold_noise_checksum(rec.noise_checksum, g);
    if (options.keep_noise) rec.noise.insert(rec.noise.end(), xi.begin(), xi.end());
    state.time = static_cast<double>(k) * params.dt;
    advance_system(state, params, xi, scratch);
    if (options.observer) options.observer(k + 1, state, xi);
    if ((k + 1) % options.record_every == 0) {
      rec.times.push_back(state.time);
      rec.states.push_back(state);
    }
  }
  return rec;
}

}  // namespace

TrajectoryRecord simulate_system(const SimParams& params, NoiseStream& noise, const SimulateOptions& options) {
  auto initial = sample_initial(params.initial_law, static_cast<std::size_t>(params.n_particles), noise);
  return run_system(
      params, std::move(initial),
      [&noise](std::int64_t, std::span<Vec2> xi) {
        for (auto& g : xi) g = noise.gaussian_pair();
      },
      options);
}

TrajectoryRecord simulate_system(const SimParams& params, NoiseStream& noise, std::int64_t record_every) {
  SimulateOptions opts;
  opts.record_every = record_every;
  return simulate_system(params, noise, opts);
}

TrajectoryRecord replay_system(const SimParams& params, std::span<const Vec2> initial,
                               std::span<const Vec2> noise, std::int64_t record_every) {
  const std::size_t n = initial.size();
  const std::int64_t steps = step_count(params.horizon, params.dt);
  if (noise.size() != static_cast<std::size_t>(steps) * n) {
    throw ConfigError("replay_system: recorded noise has " + std::to_string(noise.size()) +
                      " draws, expected " + std::to_string(static_cast<std::size_t>(steps) * n));
  }
  SimulateOptions opts;
  opts.record_every = record_every;
  opts.keep_noise = true;
  return run_system(
      params, std::vector<Vec2>(initial.begin(), initial.end()),
      [noise, n](std::int64_t k, std::span<Vec2> xi) {
        const auto block = noise.subspan(static_cast<std::size_t>(k) * n, n);
        std::copy(block.begin(), block.end(), xi.begin());
      },
      opts);
}

// ---------------------------------------------------------------------------

Vec2 step_pair_regularized(Vec2 d, double chi, double eps, double dt, Vec2 xi) {
  const Vec2 k = kernel_regularized(d, eps);
  const double s = 2.0 * std::sqrt(dt);
  return {d.x + s * xi.x + dt * chi * k.x, d.y + s * xi.y + dt * chi * k.y};
}

Vec2 step_pair_regularized(Vec2 d, double chi, double eps, double dt, NoiseStream& noise) {
  return step_pair_regularized(d, chi, eps, dt, noise.gaussian_pair());
}

Mat2 cubed_diffusion(Vec2 z) {
  const double r2 = norm2(z);
  if (r2 == 0.0) return {0.0, 0.0, 0.0, 0.0};
  const double c = 2.0 * std::pow(r2, -2.0 / 3.0);  // 2 |z|^{-4/3}
  return {c * (r2 + 2.0 * z.x * z.x), c * 2.0 * z.x * z.y, c * 2.0 * z.y * z.x, c * (r2 + 2.0 * z.y * z.y)};
}

Vec2 cubed_drift(Vec2 z, double chi) {
  const double r2 = norm2(z);
  if (r2 == 0.0) return {};
  const double c = (16.0 - 3.0 * chi / kTwoPi) * std::pow(r2, -1.0 / 3.0);  // |z|^{-2/3}
  return c * z;
}

double default_freeze_radius(double dt) { return 10.0 * std::pow(dt, 0.75); }

PairState step_cubed(const PairState& s, double chi, double dt, Vec2 xi, double freeze_radius) {
  PairState next = s;
  next.time = s.time + dt;
  if (s.frozen) return next;
  const Mat2 sig = cubed_diffusion(s.z);
  const Vec2 b = cubed_drift(s.z, chi);
  const double sq = std::sqrt(dt);
  next.z.x = s.z.x + sq * (sig[0] * xi.x + sig[1] * xi.y) + dt * b.x;
  next.z.y = s.z.y + sq * (sig[2] * xi.x + sig[3] * xi.y) + dt * b.y;
  if (chi >= 8.0 * kPi && norm(next.z) <= freeze_radius) {
    next.z = {};
    next.frozen = true;
  }
  return next;
}

PairState step_cubed(const PairState& s, double chi, double dt, NoiseStream& noise, double freeze_radius) {
  return step_cubed(s, chi, dt, noise.gaussian_pair(), freeze_radius);
}

Vec2 lift_pair(Vec2 d) { return norm2(d) * d; }

Vec2 project_pair(Vec2 z) {
  const double r2 = norm2(z);
  if (r2 == 0.0) return {};
  return std::pow(r2, -1.0 / 3.0) * z;
}

// ---------------------------------------------------------------------------

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_snapshot_header(std::ostream& os, bool with_mass) {
  os << "replica,time,particle_index,x,y" << (with_mass ? ",mass" : "") << '\n';
}

void write_snapshots(std::ostream& os, std::uint64_t replica, const TrajectoryRecord& record) {
  for (std::size_t s = 0; s < record.states.size(); ++s) {
    const auto& st = record.states[s];
    const std::string t = format_real(record.times[s]);
    for (std::size_t i = 0; i < st.positions.size(); ++i) {
      os << replica << ',' << t << ',' << i << ',' << format_real(st.positions[i].x) << ','
         << format_real(st.positions[i].y) << '\n';
    }
  }
}

}  // namespace kslab
