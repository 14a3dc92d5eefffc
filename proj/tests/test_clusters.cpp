#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "kslab/clusters.hpp"
#include "kslab/diagnostics.hpp"

using namespace kslab;
using doctest::Approx;

namespace {

ClusterState with_masses(int n_total, std::vector<std::pair<Vec2, int>> ps) {
  ClusterState s;
  s.n_total = n_total;
  for (auto& [p, u] : ps) s.particles.push_back({p, u});
  return s;
}

// Random clustered state of total mass n units.
ClusterState random_state(NoiseStream& st, int n) {
  ClusterState s;
  s.n_total = n;
  int left = n;
  while (left > 0) {
    const int u = std::min(left, 1 + static_cast<int>(st.uniform() * 4));
    s.particles.push_back({st.gaussian_pair(), u});
    left -= u;
  }
  return s;
}

}  // namespace

TEST_CASE("cluster_drift examples") {
  const auto one = with_masses(1, {{{0.4, -2.0}, 1}});
  const auto b1 = cluster_drift(one, 16.0 * kPi, 0.0);
  CHECK(b1[0] == Vec2{0.0, 0.0});

  const double d = 0.7, chi = 9.0;
  const auto two = with_masses(2, {{{d / 2, 0}, 1}, {{-d / 2, 0}, 1}});
  const auto b = cluster_drift(two, chi, 0.0);
  CHECK(b[0].x == Approx(-chi / (4.0 * kPi * d)).epsilon(1e-15));
  CHECK(b[0].y == 0.0);
  CHECK(b[1].x == Approx(chi / (4.0 * kPi * d)).epsilon(1e-15));

  NoiseStream st(12, 0);
  for (int i = 0; i < 500; ++i) {
    const auto s = random_state(st, 3 + i % 20);
    const auto drift = cluster_drift(s, 50.0, i % 2 ? 1e-3 : 0.0);
    Vec2 total{};
    double scale = 0.0;
    for (std::size_t k = 0; k < drift.size(); ++k) {
      total += s.mass(k) * drift[k];
      scale = std::max(scale, norm(drift[k]));
    }
    REQUIRE(norm(total) <= 1e-12 * std::max(1.0, scale));
  }
}

TEST_CASE("step_cluster noise scale") {
  // no drift for a single particle
  const std::vector<Vec2> xi{{1.0, -0.5}};
  const double dt = 0.04;
  const auto unit = step_cluster(with_masses(1, {{{0, 0}, 1}}), 5.0, 0.0, dt, xi);
  CHECK(unit.particles[0].position.x == Approx(std::sqrt(2.0) * std::sqrt(dt)).epsilon(1e-15));

  const int n = 10;
  const auto full = step_cluster(with_masses(n, {{{0, 0}, n}}), 5.0, 0.0, dt, xi);
  CHECK(full.particles[0].position.x == Approx(std::sqrt(2.0 / n) * std::sqrt(dt)).epsilon(1e-15));
  CHECK(full.particles[0].position.y == Approx(-0.5 * std::sqrt(2.0 / n) * std::sqrt(dt)).epsilon(1e-15));
  CHECK(full.particles[0].mass_units == n);
  CHECK(full.time == dt);

  // unit masses reproduce the system increment sqrt(2 dt) xi + dt b
  const std::vector<Vec2> pos{{0.3, 0.1}, {-0.2, 0.4}, {0.0, -0.6}};
  const std::vector<Vec2> noise{{0.1, 0.2}, {-1.0, 0.3}, {0.5, 0.5}};
  const auto s = step_cluster(make_cluster_state(pos), 3.0, 1e-2, dt, noise);
  const auto b = cluster_drift(make_cluster_state(pos), 3.0, 1e-2);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s.particles[i].position.x == Approx(pos[i].x + std::sqrt(2.0 * dt) * noise[i].x + dt * b[i].x));
    CHECK(s.particles[i].position.y == Approx(pos[i].y + std::sqrt(2.0 * dt) * noise[i].y + dt * b[i].y));
  }
  CHECK_THROWS(step_cluster(make_cluster_state(pos), 3.0, 1e-2, dt, std::span<const Vec2>(noise.data(), 2)));
}

TEST_CASE("symmetric pair moves together by equal amounts") {
  const std::vector<Vec2> zero{{0, 0}, {0, 0}};
  const auto s = with_masses(4, {{{1, 0}, 2}, {{-1, 0}, 2}});
  const auto next = step_cluster(s, 8.0 * kPi, 0.0, 0.01, zero);
  const double moved0 = 1.0 - next.particles[0].position.x;
  const double moved1 = next.particles[1].position.x + 1.0;
  CHECK(moved0 > 0.0);
  CHECK(moved0 == moved1);
  CHECK(next.particles[0].position.y == 0.0);
}

TEST_CASE("merge examples") {
  const auto light = with_masses(10, {{{0, 0}, 1}, {{0.001, 0}, 1}, {{5, 5}, 8}});
  const auto a = merge_components_detailed(light, 16.0 * kPi, 0.01);
  CHECK(a.merges == 0);
  CHECK(a.state.particles.size() == 3);

  const auto halves = with_masses(2, {{{0.2, 0.4}, 1}, {{0.204, 0.4}, 1}});
  const auto b = merge_components_detailed(halves, 8.0 * kPi, 0.01);
  REQUIRE(b.state.particles.size() == 1);
  CHECK(b.state.mass(0) == 1.0);
  CHECK(b.state.particles[0].position.x == Approx(0.202));
  CHECK(b.state.particles[0].position.y == Approx(0.4));
  CHECK(b.merges == 1);
  CHECK(b.boundary_cases == 1);

  const auto cluster = with_masses(10, {{{1, 1}, 1}, {{0, 0}, 5}, {{0.006, 0}, 1}, {{3, 0}, 3}});
  const auto c = merge_components_detailed(cluster, 16.0 * kPi, 0.01);
  REQUIRE(c.state.particles.size() == 3);
  CHECK(c.state.particles[0].mass_units == 1);
  CHECK(c.state.particles[1].mass_units == 6);
  CHECK(c.state.particles[1].position.x == Approx(0.001));
  CHECK(c.state.particles[2].mass_units == 3);
  CHECK(c.state.total_units() == 10);
  CHECK(c.boundary_cases == 0);

  CHECK_THROWS_AS(merge_components(cluster, 16.0 * kPi, 0.0), std::domain_error);
}

TEST_CASE("merge components are chained and relabeled stably") {
  // 0-2 and 2-4 are within threshold, 0-4 is not: one component via 2
  const auto s = with_masses(6, {{{0, 0}, 1}, {{9, 9}, 1}, {{0.008, 0}, 1}, {{-9, 2}, 1}, {{0.016, 0}, 1}, {{4, 4}, 1}});
  const auto m = merge_components(s, 16.0 * kPi, 0.01);  // sticky at 3 units
  REQUIRE(m.particles.size() == 4);
  CHECK(m.particles[0].mass_units == 3);
  CHECK(m.particles[0].position.x == Approx(0.008));
  CHECK(m.particles[1].position == Vec2{9, 9});
  CHECK(m.particles[2].position == Vec2{-9, 2});
  CHECK(m.particles[3].position == Vec2{4, 4});
}

TEST_CASE("allowed_mass_set examples") {
  CHECK(allowed_mass_set(10, 8.0 * kPi) == std::set<int>{1, 10});
  CHECK(allowed_mass_set(10, 16.0 * kPi) == std::set<int>{1, 5, 6, 7, 8, 9, 10});
  CHECK(allowed_mass_set(10, 4.0 * kPi) == std::set<int>{1});
  CHECK(default_merge_threshold(1e-3, 1e-4) == Approx(0.1));
  CHECK(default_merge_threshold(0.5, 1e-4) == 0.5);
}

TEST_CASE("pair contacts are sticky for chi >= 4 pi N") {
  for (int n = 2; n <= 40; ++n) {
    for (double f : {1.0, 1.5, 7.0}) {
      const double chi = f * 4.0 * kPi * n;
      CHECK(bessel_dimension(n, chi, 2) <= 1e-12);
      CHECK(2.0 / n >= 8.0 * kPi / chi * (1.0 - 1e-12));
      CHECK(allowed_mass_set(n, chi).count(2) == 1);
      auto s = make_cluster_state(std::vector<Vec2>(static_cast<std::size_t>(n), Vec2{}));
      for (int i = 0; i < n; ++i) s.particles[static_cast<std::size_t>(i)].position = {10.0 * i, 0.0};
      s.particles[1].position = {0.001, 0.0};
      CHECK(merge_components(s, chi, 0.01).particles.size() == static_cast<std::size_t>(n - 1));
    }
  }
}

TEST_CASE("trajectory invariants") {
  for (double chi : {16.0 * kPi, 48.0 * kPi}) {
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      NoiseStream noise(13, rep);
      std::vector<Vec2> pos(10);
      for (auto& p : pos) p = 0.1 * noise.gaussian_pair();
      auto s = make_cluster_state(pos);
      const auto allowed = allowed_mass_set(10, chi);
      std::size_t count = s.particles.size();
      const double dt = 1e-4, threshold = default_merge_threshold(1e-3, dt);
      for (int k = 0; k < 2000; ++k) {
        std::vector<Vec2> xi(s.particles.size());
        for (auto& g : xi) g = noise.gaussian_pair();
        const Vec2 before = s.barycenter();
        Vec2 expected{};
        for (std::size_t i = 0; i < xi.size(); ++i) {
          expected += s.mass(i) * std::sqrt(2.0 / (10.0 * s.mass(i))) * std::sqrt(dt) * xi[i];
        }
        s = step_cluster(s, chi, 1e-3, dt, xi);
        const Vec2 inc = s.barycenter() - before;
        REQUIRE(norm(inc - expected) <= 1e-12);
        s = merge_components(s, chi, threshold);
        REQUIRE(s.total_units() == 10);
        REQUIRE(s.particles.size() <= count);
        count = s.particles.size();
        for (const auto& p : s.particles) REQUIRE(allowed.count(p.mass_units) == 1);
      }
    }
  }
}

TEST_CASE("cluster snapshot rows carry the mass") {
  const auto s = with_masses(4, {{{0.1, 0.2}, 3}, {{1, 1}, 1}});
  std::ostringstream os;
  write_cluster_snapshot(os, 7, s);
  CHECK(os.str() == "7,0,0,0.10000000000000001,0.20000000000000001,0.75\n7,0,1,1,1,0.25\n");
}
