#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <vector>

#include "kslab/core.hpp"

namespace kslab {

/// A particle of mass mass_units / N.
struct ClusterParticle {
  Vec2 position;
  int mass_units = 1;
};

/// Masses are kept as integer multiples of 1/N so that the total stays exactly 1.
struct ClusterState {
  double time = 0.0;
  int n_total = 0;
  std::vector<ClusterParticle> particles;

  double mass(std::size_t i) const { return static_cast<double>(particles[i].mass_units) / n_total; }
  int total_units() const;
  /// Mass-weighted barycenter.
  Vec2 barycenter() const;
};

/// N unit-mass particles at the given positions.
ClusterState make_cluster_state(std::span<const Vec2> positions);

/// b_i = chi sum_j nu_j K_eps(x_i - x_j)
std::vector<Vec2> cluster_drift(const ClusterState& state, double chi, double eps);

/// x_i += sqrt(2 / (N nu_i)) sqrt(dt) xi_i + dt b_i; masses untouched.
ClusterState step_cluster(const ClusterState& state, double chi, double eps, double dt, std::span<const Vec2> xi);
ClusterState step_cluster(const ClusterState& state, double chi, double eps, double dt, NoiseStream& noise);

struct MergeOutcome {
  ClusterState state;
  int merges = 0;
  /// Components whose mass sat exactly on 8 pi / chi (merged under the inclusive rule).
  int boundary_cases = 0;
};

/// Connected components of the graph with edges at distance <= threshold;
/// each component of >= 2 particles with total mass >= 8 pi / chi becomes one
/// particle at its mass-weighted centroid. Survivors keep ascending order of
/// their smallest original index.
MergeOutcome merge_components_detailed(const ClusterState& state, double chi, double threshold);
ClusterState merge_components(const ClusterState& state, double chi, double threshold);

/// Numerators k of the admissible masses k/N: {1} u {ceil(8 pi N / chi) .. N}.
std::set<int> allowed_mass_set(int n, double chi);

/// max(eps, 10 sqrt(dt))
double default_merge_threshold(double eps, double dt);

/// Header "replica,time,particle_index,x,y,mass".
void write_cluster_snapshot(std::ostream& os, std::uint64_t replica, const ClusterState& state);

}  // namespace kslab
