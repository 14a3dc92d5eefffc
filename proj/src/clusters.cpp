#include "kslab/clusters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "kslab/diagnostics.hpp"
#include "kslab/integrator.hpp"
#include "kslab/kernels.hpp"

namespace kslab {

int ClusterState::total_units() const {
  int s = 0;
  for (const auto& p : particles) s += p.mass_units;
  return s;
}

Vec2 ClusterState::barycenter() const {
  Vec2 b{};
  for (std::size_t i = 0; i < particles.size(); ++i) b += mass(i) * particles[i].position;
  return b;
}

ClusterState make_cluster_state(std::span<const Vec2> positions) {
  ClusterState s;
  s.n_total = static_cast<int>(positions.size());
  for (const auto& p : positions) s.particles.push_back({p, 1});
  return s;
}

std::vector<Vec2> cluster_drift(const ClusterState& s, double chi, double eps) {
  const std::size_t m = s.particles.size();
  std::vector<Vec2> b(m);
  for (std::size_t i = 0; i < m; ++i) {
    Vec2 acc{};
    for (std::size_t j = 0; j < m; ++j) {
      acc += s.mass(j) * kernel_regularized(s.particles[i].position - s.particles[j].position, eps);
    }
    b[i] = chi * acc;
  }
  return b;
}

ClusterState step_cluster(const ClusterState& s, double chi, double eps, double dt, std::span<const Vec2> xi) {
  if (xi.size() < s.particles.size()) throw std::invalid_argument("step_cluster: one Gaussian per particle required");
  const auto b = cluster_drift(s, chi, eps);
  ClusterState next = s;
  next.time = s.time + dt;
  const double sq = std::sqrt(dt);
  for (std::size_t i = 0; i < s.particles.size(); ++i) {
    const double sigma = std::sqrt(2.0 / (static_cast<double>(s.n_total) * s.mass(i)));
    next.particles[i].position += sigma * sq * xi[i] + dt * b[i];
  }
  return next;
}

ClusterState step_cluster(const ClusterState& s, double chi, double eps, double dt, NoiseStream& noise) {
  std::vector<Vec2> xi(s.particles.size());
  for (auto& g : xi) g = noise.gaussian_pair();
  return step_cluster(s, chi, eps, dt, xi);
}

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

MergeOutcome merge_components_detailed(const ClusterState& s, double chi, double threshold) {
  if (!(threshold > 0.0)) throw std::domain_error("merge_components: threshold must be positive");
  const std::size_t m = s.particles.size();
  DisjointSets sets(m);
  const double t2 = threshold * threshold;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      if (norm2(s.particles[i].position - s.particles[j].position) <= t2) sets.unite(i, j);
    }
  }
  // S >= 8 pi / chi  <=>  units >= 8 pi N / chi
  const int sticky_units = sticky_cluster_size(s.n_total, chi);
  const double exact = 8.0 * kPi * s.n_total / chi;

  std::vector<std::vector<std::size_t>> groups(m);
  for (std::size_t i = 0; i < m; ++i) groups[sets.find(i)].push_back(i);

  MergeOutcome out;
  out.state.time = s.time;
  out.state.n_total = s.n_total;
  // (smallest original index, particle); survivors are ordered by the key.
  std::vector<std::pair<std::size_t, ClusterParticle>> keyed;
  for (std::size_t root = 0; root < m; ++root) {
    const auto& g = groups[root];
    if (g.empty()) continue;
    int units = 0;
    for (auto k : g) units += s.particles[k].mass_units;
    if (g.size() >= 2 && units >= sticky_units) {
      Vec2 c{};
      for (auto k : g) c += static_cast<double>(s.particles[k].mass_units) * s.particles[k].position;
      c *= 1.0 / static_cast<double>(units);
      keyed.push_back({g.front(), {c, units}});
      ++out.merges;
      if (std::abs(units - exact) <= 1e-9 * exact) ++out.boundary_cases;
    } else {
      for (auto k : g) keyed.push_back({k, s.particles[k]});
    }
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  out.state.particles.reserve(keyed.size());
  for (auto& kp : keyed) out.state.particles.push_back(kp.second);
  return out;
}

ClusterState merge_components(const ClusterState& s, double chi, double threshold) {
  return merge_components_detailed(s, chi, threshold).state;
}

std::set<int> allowed_mass_set(int n, double chi) {
  std::set<int> out{1};
  for (int k = std::max(1, sticky_cluster_size(n, chi)); k <= n; ++k) out.insert(k);
  return out;
}

double default_merge_threshold(double eps, double dt) { return std::max(eps, 10.0 * std::sqrt(dt)); }

void write_cluster_snapshot(std::ostream& os, std::uint64_t replica, const ClusterState& s) {
  const std::string t = format_real(s.time);
  for (std::size_t i = 0; i < s.particles.size(); ++i) {
    os << replica << ',' << t << ',' << i << ',' << format_real(s.particles[i].position.x) << ','
       << format_real(s.particles[i].position.y) << ',' << format_real(s.mass(i)) << '\n';
  }
}

}  // namespace kslab
