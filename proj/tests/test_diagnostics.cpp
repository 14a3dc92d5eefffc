#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <sstream>

#include "kslab/diagnostics.hpp"

using namespace kslab;
using doctest::Approx;

namespace {

std::vector<Vec2> random_points(NoiseStream& s, std::size_t n) {
  std::vector<Vec2> x(n);
  for (auto& p : x) p = s.gaussian_pair();
  return x;
}

TrajectoryRecord constant_record(Vec2 a, Vec2 b, double horizon, int steps) {
  TrajectoryRecord r;
  for (int k = 0; k <= steps; ++k) {
    r.times.push_back(horizon * k / steps);
    r.states.push_back({r.times.back(), {a, b}});
  }
  return r;
}

}  // namespace

TEST_CASE("subset_variance examples") {
  const std::vector<Vec2> same{{1, 2}, {1, 2}, {1, 2}};
  CHECK(subset_variance(same) == 0.0);
  const std::vector<Vec2> two{{1, 0}, {-1, 0}, {5, 5}};
  const std::vector<std::size_t> first_two{0, 1};
  CHECK(subset_variance(two, first_two) == Approx(1.0).epsilon(1e-15));
  const std::vector<Vec2> tri{{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2}};
  CHECK(subset_variance(tri) == Approx(0.5).epsilon(1e-14));
  const std::vector<std::size_t> one{0};
  CHECK_THROWS_AS(subset_variance(two, one), std::domain_error);
}

TEST_CASE("bessel_dimension examples") {
  for (int n = 3; n <= 40; ++n) {
    const double chi = 8.0 * kPi * (n - 2) / (n - 1);
    CHECK(bessel_dimension(n, chi, n) == Approx(2.0).epsilon(1e-14));
  }
  CHECK(bessel_dimension(2, 4.0 * kPi, 2) == Approx(1.0).epsilon(1e-15));
  CHECK(bessel_dimension(10, 2.0 * kPi, 2) == Approx(1.9).epsilon(1e-15));
}

TEST_CASE("collision_roots") {
  for (int n : {3, 5, 10, 64}) {
    const auto r = collision_roots(n, 4.0 * kPi * n / 3.0);
    REQUIRE(r);
    CHECK(std::abs(r->x_minus - 3.0) <= 1e-12);
    CHECK(std::abs(r->x_plus - 4.0) <= 1e-12);
  }
  NoiseStream s(5, 0);
  int real_cases = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = 3 + static_cast<int>(s.uniform() * 60);
    const double chi = 40.0 * kPi * s.uniform() + 1e-3;
    const auto r = collision_roots(n, chi);
    if (!r) continue;
    ++real_cases;
    CHECK(std::abs(bessel_dimension(n, chi, r->x_minus) - 2.0) <= 1e-10);
    CHECK(std::abs(bessel_dimension(n, chi, r->x_plus) - 2.0) <= 1e-10);
  }
  CHECK(real_cases > 100);
  // N is a root at the triple threshold; the other root is 2(N-1)/(N-2), which
  // exceeds N only for N = 3
  for (int n = 3; n <= 50; ++n) {
    const auto r = collision_roots(n, triple_collision_threshold(n));
    REQUIRE(r);
    const double other = 2.0 * (n - 1) / (n - 2);
    CHECK(std::abs(r->x_plus - std::max<double>(n, other)) <= 1e-10);
    CHECK(std::abs(r->x_minus - std::min<double>(n, other)) <= 1e-10);
    if (n >= 4) CHECK(std::abs(r->x_plus - n) <= 1e-10);
  }
  // discriminant (1 + a)^2 - 8a with a = 8 pi N / chi is negative for a in (3 - 2 sqrt2, 3 + 2 sqrt2)
  CHECK_FALSE(collision_roots(5, 8.0 * kPi * 5 / 3.0).has_value());
}

TEST_CASE("classify_regimes examples") {
  const auto t = classify_regimes(5, 6.5 * kPi);
  CHECK(t.at(2) == Regime::reflecting);
  CHECK(t.at(3) == Regime::no_collision);
  CHECK(t.at(4) == Regime::no_collision);
  CHECK(t.at(5) == Regime::reflecting);

  const auto u = classify_regimes(10, 2.0 * kPi);
  CHECK(u.at(2) == Regime::reflecting);
  for (int k = 3; k <= 10; ++k) CHECK(u.at(k) == Regime::no_collision);

  const auto v = classify_regimes(10, 16.0 * kPi);
  for (int k = 5; k <= 10; ++k) CHECK(v.at(k) == Regime::sticky);
  for (int k = 2; k <= 4; ++k) CHECK(v.at(k) != Regime::sticky);
  CHECK(sticky_cluster_size(10, 16.0 * kPi) == 5);
}

TEST_CASE("regime table invariant against the sign tests") {
  NoiseStream s(6, 0);
  for (int i = 0; i < 500; ++i) {
    const int n = 3 + static_cast<int>(s.uniform() * 30);
    const double chi = 60.0 * kPi * s.uniform() + 1e-3;
    const auto t = classify_regimes(n, chi);
    REQUIRE(t.regimes.size() == static_cast<std::size_t>(n - 1));
    for (int k = 2; k <= n; ++k) {
      const double d = bessel_dimension(n, chi, k);
      // away from the boundaries the tolerance plays no role
      if (std::abs(d - 2.0) < 1e-9 || std::abs(d) < 1e-9) continue;
      const Regime want = d >= 2.0 ? Regime::no_collision : d <= 0.0 ? Regime::sticky : Regime::reflecting;
      REQUIRE(t.at(k) == want);
    }
    CHECK(t.roots.has_value() == collision_roots(n, chi).has_value());
  }
}

TEST_CASE("below the triple threshold only pairs collide") {
  for (int n = 3; n <= 60; ++n) {
    const double thr = triple_collision_threshold(n);
    for (double f : {0.1, 0.5, 0.9, 1.0}) {
      const auto t = classify_regimes(n, f * thr);
      CHECK(t.at(2) == Regime::reflecting);
      for (int k = 3; k <= n; ++k) REQUIRE(t.at(k) == Regime::no_collision);
    }
  }
}

TEST_CASE("triple threshold lies below 4 pi N / 3") {
  for (long n = 3; n <= 1000000; ++n) {
    const double lhs = 8.0 * kPi * static_cast<double>(n - 2) / static_cast<double>(n - 1);
    REQUIRE(lhs <= 4.0 * kPi * static_cast<double>(n) / 3.0);
  }
}

TEST_CASE("bessel_dimension is concave in k") {
  for (int n : {3, 5, 10, 30}) {
    for (double chi : {kPi, 8.0 * kPi, 30.0 * kPi}) {
      int argmax = 2;
      for (int k = 2; k <= n; ++k) {
        if (bessel_dimension(n, chi, k) > bessel_dimension(n, chi, argmax)) argmax = k;
        if (k >= 3 && k < n) {
          const double second =
              bessel_dimension(n, chi, k + 1) - 2.0 * bessel_dimension(n, chi, k) + bessel_dimension(n, chi, k - 1);
          REQUIRE(second <= 1e-12);
        }
      }
      // after the maximum the values only decrease
      for (int k = argmax; k < n; ++k) REQUIRE(bessel_dimension(n, chi, k + 1) <= bessel_dimension(n, chi, k));
    }
  }
}

TEST_CASE("fund_bound") {
  using boost::multiprecision::cpp_bin_float_50;
  const cpp_bin_float_50 hp = boost::multiprecision::pow(cpp_bin_float_50(2), cpp_bin_float_50(0.75)) / 0.25;
  CHECK(fund_bound(1.0, 0.0, 0.5, 2, kPi) == Approx(static_cast<double>(hp)).epsilon(1e-14));
  CHECK(fund_bound(1.0, 0.0, 0.5, 2, kPi) == Approx(6.72717).epsilon(1e-6));

  const double lo = fund_alpha_min(8, kPi);
  CHECK(lo == Approx(7.0 / 16.0));
  double prev = 0.0;
  for (double gap : {1e-1, 1e-2, 1e-3, 1e-4, 1e-6, 1e-8}) {
    const double b = fund_bound(1.5, 1.0, lo + gap, 8, kPi);
    REQUIRE(b > prev);
    prev = b;
  }
  CHECK(prev > 1e7);

  prev = 0.0;
  for (double t = 0.0; t <= 10.0; t += 0.25) {
    const double b = fund_bound(1.5, t, 0.75, 8, kPi);
    REQUIRE(b >= prev);
    prev = b;
  }

  CHECK_THROWS_AS(fund_bound(1.0, 1.0, lo, 8, kPi), std::domain_error);
  CHECK_THROWS_AS(fund_bound(1.0, 1.0, 0.4, 8, kPi), std::domain_error);
  CHECK_THROWS_AS(fund_bound(1.0, 1.0, 1.0, 8, kPi), std::domain_error);
  CHECK_THROWS_AS(fund_bound(0.5, 1.0, 0.75, 8, kPi), std::domain_error);
}

TEST_CASE("first_moment_bound") {
  CHECK(first_moment_bound(1.0, 0.0) == 1.0);
  CHECK(first_moment_bound(1.0, 3.0) == 7.0);
  for (double t = 0.0; t < 5.0; t += 0.5) CHECK(first_moment_bound(1.3, t + 0.5) - first_moment_bound(1.3, t) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("min_separations") {
  const std::vector<Vec2> line{{0, 0}, {1, 0}, {3, 0}};
  const auto s = min_separations(line);
  CHECK(s.min_pair == 1.0);
  CHECK(s.min_triple_sum == 6.0);
  const std::vector<Vec2> twin{{0.5, 0.5}, {0.5, 0.5}, {4, 4}};
  CHECK(min_separations(twin).min_pair == 0.0);
  const std::vector<Vec2> pair{{0, 0}, {3, 4}};
  CHECK(min_separations(pair).min_pair == 5.0);
  CHECK(std::isinf(min_separations(pair).min_triple_sum));

  NoiseStream st(8, 0);
  for (int i = 0; i < 300; ++i) {
    const auto x = random_points(st, 3 + i % 9);
    double best_pair = INFINITY, best_triple = INFINITY;
    for (std::size_t a = 0; a < x.size(); ++a) {
      for (std::size_t b = a + 1; b < x.size(); ++b) {
        best_pair = std::min(best_pair, norm(x[a] - x[b]));
        for (std::size_t c = b + 1; c < x.size(); ++c) {
          best_triple = std::min(best_triple, norm(x[a] - x[b]) + norm(x[b] - x[c]) + norm(x[c] - x[a]));
        }
      }
    }
    const auto got = min_separations(x);
    REQUIRE(got.min_pair == Approx(best_pair).epsilon(1e-15));
    REQUIRE(got.min_triple_sum == Approx(best_triple).epsilon(1e-15));
    REQUIRE(got.min_triple_sum >= 2.0 * got.min_pair);
  }
}

TEST_CASE("path_moment") {
  const double T = 1.7;
  const auto one = constant_record({0, 0}, {1, 0}, T, 100);
  CHECK(path_moment(one, 0.5, 0, 1, 1e-3) == Approx(T).epsilon(1e-13));
  const auto two = constant_record({0, 0}, {2, 0}, T, 100);
  CHECK(path_moment(two, 0.5, 0, 1, 1e-3) == Approx(T * std::pow(2.0, -1.5)).epsilon(1e-13));
  // a contact contributes the floor value
  const auto hit = constant_record({0, 0}, {0, 0}, 1.0, 10);
  CHECK(path_moment(hit, 0.5, 0, 1, 1e-2) == Approx(std::pow(1e-2, -1.5)).epsilon(1e-13));
  CHECK_THROWS_AS(path_moment(one, 0.5, 1, 1, 1e-3), std::domain_error);
  CHECK_THROWS_AS(path_moment(one, 1.5, 0, 1, 1e-3), std::domain_error);

  CHECK(default_distance_floor(1e-3, 1e-4) == 1e-3);
  CHECK(default_distance_floor(0.0, 1e-4) == Approx(1e-2));
  CHECK(default_triple_threshold(1e-3, 1e-4) == Approx(0.1));
  CHECK(default_triple_threshold(1e-1, 1e-4) == Approx(1.0));
}

TEST_CASE("slope_fit") {
  std::vector<TimedValue> line, flat;
  for (int k = 0; k < 50; ++k) {
    line.push_back({0.02 * k, 3.0 * 0.02 * k});
    flat.push_back({0.02 * k, 4.2});
  }
  const auto a = slope_fit(line);
  CHECK(a.slope == Approx(3.0).epsilon(1e-12));
  CHECK(a.half_width <= 1e-10);
  CHECK(slope_fit(flat).slope == Approx(0.0).epsilon(1e-12));

  const std::vector<TimedValue> same_time{{1, 0}, {1, 1}, {1, 2}};
  CHECK_THROWS_AS(slope_fit(same_time), std::domain_error);
  CHECK_THROWS_AS(slope_fit(std::span<const TimedValue>(line.data(), 2)), std::domain_error);

  int covered = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    NoiseStream s(9, trial);
    std::vector<TimedValue> noisy;
    for (int k = 0; k < 40; ++k) noisy.push_back({0.1 * k, 1.0 - 2.5 * 0.1 * k + 0.3 * s.gaussian_pair().x});
    const auto f = slope_fit(noisy);
    covered += std::abs(f.slope + 2.5) <= f.half_width ? 1 : 0;
  }
  CHECK(covered >= 90);
}

TEST_CASE("density_histogram") {
  NoiseStream s(10, 0);
  std::vector<Vec2> x;
  for (int i = 0; i < 333; ++i) x.push_back({2.0 * s.uniform() - 1.0, 2.0 * s.uniform() - 1.0});
  const auto h = density_histogram(x, 1.0, 17);
  double sum = 0.0;
  for (double c : h.cells) sum += c;
  CHECK(sum == Approx(1.0).epsilon(1e-12));

  const std::vector<Vec2> single{{0.3, -0.2}};
  const auto g = density_histogram(single, 1.0, 8);
  int nonzero = 0;
  for (double c : g.cells) {
    if (c != 0.0) {
      ++nonzero;
      CHECK(c == 1.0);
    }
  }
  CHECK(nonzero == 1);

  // reflection x -> -x maps bin ix to bins-1-ix
  std::vector<Vec2> sym;
  for (int i = 0; i < 200; ++i) {
    const Vec2 p{0.9 * (2.0 * s.uniform() - 1.0), 0.9 * (2.0 * s.uniform() - 1.0)};
    sym.push_back(p);
    sym.push_back({-p.x, p.y});
  }
  const auto hs = density_histogram(sym, 1.0, 10);
  for (int iy = 0; iy < 10; ++iy) {
    for (int ix = 0; ix < 10; ++ix) REQUIRE(hs.at(ix, iy) == hs.at(9 - ix, iy));
  }

  const std::vector<Vec2> outside{{5, 5}, {0, 0}};
  double in_grid = 0.0;
  for (double c : density_histogram(outside, 1.0, 4).cells) in_grid += c;
  CHECK(in_grid == Approx(0.5));
}

TEST_CASE("ensemble statistics") {
  const std::vector<double> v{1, 2, 3, 4};
  const auto m = mean_estimate(v);
  CHECK(m.mean == 2.5);
  CHECK(m.std_error == Approx(std::sqrt(5.0 / 3.0 / 4.0)));
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(pearson_correlation(v, std::vector<double>{2, 4, 6, 8}) == Approx(1.0));
  CHECK(student_t_quantile(0.95, 1e6) == Approx(1.959964).epsilon(1e-5));
  CHECK(student_t_quantile(0.95, 10) == Approx(2.228139).epsilon(1e-6));
}

TEST_CASE("diagnostics CSV round trip") {
  DiagnosticsReport r;
  r.add({"slope", std::nullopt, 1.0 / 3.0, 0.1, 0.95, 500, 31.0, std::nullopt});
  r.add({"frac", 7.0 * kPi, 0.125, std::nullopt, std::nullopt, 200, std::nullopt, 0.5});
  r.add({"tiny", 1e-300, -2.5e-17, std::nullopt, std::nullopt, 0, std::nullopt, std::nullopt});
  std::stringstream ss;
  write_diagnostics_csv(ss, r);
  CHECK(ss.str().rfind("name,sweep_value,estimate,half_width,confidence,n,bound,p_value\n", 0) == 0);
  const auto back = read_diagnostics_csv(ss);
  REQUIRE(back.scalars.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto &a = r.scalars[i], &b = back.scalars[i];
    CHECK(a.name == b.name);
    CHECK(a.sweep_value == b.sweep_value);
    CHECK(a.estimate == b.estimate);
    CHECK(a.half_width == b.half_width);
    CHECK(a.confidence == b.confidence);
    CHECK(a.n == b.n);
    CHECK(a.bound == b.bound);
    CHECK(a.p_value == b.p_value);
  }
  CHECK(back.find("frac", 7.0 * kPi) != nullptr);
  CHECK(back.find("frac", 7.0) == nullptr);
}
