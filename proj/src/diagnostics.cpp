#include "kslab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace kslab {

namespace {

constexpr double kRelTol = 1e-12;

}  // namespace

double subset_variance(std::span<const Vec2> x, std::span<const std::size_t> subset) {
  if (subset.size() < 2) throw std::domain_error("subset_variance: the subset needs at least 2 indices");
  Vec2 bar{};
  for (auto i : subset) bar += x[i];
  bar *= 1.0 / static_cast<double>(subset.size());
  double s = 0.0;
  for (auto i : subset) s += norm2(x[i] - bar);
  return 0.5 * s;
}

double subset_variance(std::span<const Vec2> x) {
  if (x.size() < 2) throw std::domain_error("subset_variance: the subset needs at least 2 indices");
  Vec2 bar{};
  for (const auto& p : x) bar += p;
  bar *= 1.0 / static_cast<double>(x.size());
  double s = 0.0;
  for (const auto& p : x) s += norm2(p - bar);
  return 0.5 * s;
}

double bessel_dimension(int n, double chi, double k) {
  return (k - 1.0) * (2.0 - chi * k / (4.0 * kPi * static_cast<double>(n)));
}

std::optional<CollisionRoots> collision_roots(int n, double chi) {
  const double a = 8.0 * kPi * static_cast<double>(n) / chi;
  const double disc = (1.0 + a) * (1.0 + a) - 8.0 * a;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  return CollisionRoots{0.5 * (1.0 + a - s), 0.5 * (1.0 + a + s)};
}

const char* to_string(Regime r) {
  switch (r) {
    case Regime::no_collision: return "no_collision";
    case Regime::reflecting: return "reflecting";
    case Regime::sticky: return "sticky";
  }
  return "?";
}

RegimeTable classify_regimes(int n, double chi) {
  if (n < 3) throw std::domain_error("classify_regimes: needs n >= 3");
  RegimeTable table;
  table.n = n;
  table.chi = chi;
  for (int k = 2; k <= n; ++k) {
    const double delta = bessel_dimension(n, chi, k);
    const double tol = kRelTol * static_cast<double>(k);
    if (delta >= 2.0 - tol) {
      table.regimes.push_back(Regime::no_collision);
    } else if (delta <= tol) {
      table.regimes.push_back(Regime::sticky);
    } else {
      table.regimes.push_back(Regime::reflecting);
    }
  }
  table.roots = collision_roots(n, chi);
  return table;
}

double triple_collision_threshold(int n) {
  return 8.0 * kPi * static_cast<double>(n - 2) / static_cast<double>(n - 1);
}

int sticky_cluster_size(int n, double chi) {
  const double k = 8.0 * kPi * static_cast<double>(n) / chi;
  return static_cast<int>(std::min(std::ceil(k * (1.0 - kRelTol)), static_cast<double>(n) + 1.0));
}

double fund_alpha_min(int n, double chi) {
  return static_cast<double>(n - 1) * chi / (kTwoPi * static_cast<double>(n));
}

double fund_bound(double first_moment, double horizon, double alpha, int n, double chi) {
  const double lo = fund_alpha_min(n, chi);
  if (!(alpha > lo && alpha < 1.0)) {
    throw std::domain_error("fund_bound: alpha must lie in ((N-1) chi / (2 pi N), 1) = (" + std::to_string(lo) +
                            ", 1), got " + std::to_string(alpha));
  }
  if (!(first_moment >= 1.0)) throw std::domain_error("fund_bound: first moment must be >= 1");
  const double s2 = std::sqrt(2.0);
  const double num = std::pow(2.0 * s2 * first_moment + 4.0 * s2 * horizon, alpha);
  const double den = alpha * (2.0 * alpha - static_cast<double>(n - 1) * chi / (kPi * static_cast<double>(n)));
  return num / den;
}

double first_moment_bound(double first_moment, double t) { return first_moment + 2.0 * t; }

double min_pair_distance(std::span<const Vec2> x) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) best = std::min(best, norm2(x[i] - x[j]));
  }
  return std::sqrt(best);
}

Separations min_separations(std::span<const Vec2> x) { return {min_pair_distance(x), min_triple_perimeter(x)}; }

double default_triple_threshold(double eps, double dt) { return std::max(10.0 * eps, 10.0 * std::sqrt(dt)); }

double default_distance_floor(double eps, double dt) { return eps > 0.0 ? eps : std::sqrt(dt); }

PathMomentAccumulator::PathMomentAccumulator(double alpha, std::size_t i, std::size_t j, double distance_floor)
    : exponent_(alpha - 2.0), i_(i), j_(j), floor_(distance_floor) {
  if (i == j) throw std::domain_error("path_moment: needs two distinct particles");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("path_moment: alpha must lie in (0, 1)");
  if (!(distance_floor > 0.0)) throw std::domain_error("path_moment: distance floor must be positive");
}

void PathMomentAccumulator::add(std::span<const Vec2> x, double h) {
  const double r = std::max(norm(x[i_] - x[j_]), floor_);
  sum_ += h * std::pow(r, exponent_);
}

double path_moment(const TrajectoryRecord& tr, double alpha, std::size_t i, std::size_t j, double distance_floor) {
  PathMomentAccumulator acc(alpha, i, j, distance_floor);
  for (std::size_t s = 0; s + 1 < tr.states.size(); ++s) {
    acc.add(tr.states[s].positions, tr.times[s + 1] - tr.times[s]);
  }
  return acc.value();
}

double student_t_quantile(double level, double dof) {
  boost::math::students_t dist(dof);
  return boost::math::quantile(dist, 0.5 + 0.5 * level);
}

SlopeFit slope_fit(std::span<const TimedValue> s) {
  if (s.size() < 3) throw std::domain_error("slope_fit: needs at least 3 points");
  const double n = static_cast<double>(s.size());
  double tm = 0.0, vm = 0.0;
  for (const auto& p : s) {
    tm += p.time;
    vm += p.value;
  }
  tm /= n;
  vm /= n;
  double stt = 0.0, stv = 0.0;
  for (const auto& p : s) {
    stt += (p.time - tm) * (p.time - tm);
    stv += (p.time - tm) * (p.value - vm);
  }
  if (!(stt > 0.0)) throw std::domain_error("slope_fit: degenerate time grid");
  SlopeFit fit;
  fit.slope = stv / stt;
  fit.intercept = vm - fit.slope * tm;
  double sse = 0.0;
  for (const auto& p : s) {
    const double r = p.value - fit.intercept - fit.slope * p.time;
    sse += r * r;
  }
  const double se = std::sqrt(sse / (n - 2.0) / stt);
  fit.half_width = student_t_quantile(0.95, n - 2.0) * se;
  return fit;
}

Histogram2D density_histogram(std::span<const Vec2> x, double extent, int bins) {
  if (bins < 1) throw std::domain_error("density_histogram: bins must be >= 1");
  if (!(extent > 0.0)) throw std::domain_error("density_histogram: extent must be positive");
  Histogram2D h{extent, bins, std::vector<double>(static_cast<std::size_t>(bins) * bins, 0.0)};
  if (x.empty()) return h;
  const double w = 1.0 / static_cast<double>(x.size());
  const double scale = static_cast<double>(bins) / (2.0 * extent);
  auto cell = [&](double v) -> int {
    // Symmetric binning: index from the signed offset so v -> -v maps b -> bins-1-b.
    if (v < -extent || v > extent) return -1;
    const double a = std::abs(v) * scale;
    int k = static_cast<int>(std::floor(a));
    const int half = bins / 2;
    if (bins % 2 == 0) {
      k = std::min(k, half - 1);
      return v >= 0.0 ? half + k : half - 1 - k;
    }
    // Odd bin count: the centre cell straddles the origin.
    const double shifted = a - 0.5;
    if (shifted < 0.0) return half;
    k = std::min(static_cast<int>(std::floor(shifted)) + 1, half);
    return v >= 0.0 ? half + k : half - k;
  };
  for (const auto& p : x) {
    const int ix = cell(p.x);
    const int iy = cell(p.y);
    if (ix < 0 || iy < 0) continue;
    h.cells[static_cast<std::size_t>(iy * bins + ix)] += w;
  }
  return h;
}

MeanEstimate mean_estimate(std::span<const double> v) {
  MeanEstimate e;
  e.n = v.size();
  if (v.empty()) return e;
  const double n = static_cast<double>(v.size());
  e.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - e.mean) * (x - e.mean);
    e.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return e;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::domain_error("median of an empty sample");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::domain_error("pearson_correlation: mismatched or short samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------

const DiagnosticEntry* DiagnosticsReport::find(const std::string& name, std::optional<double> sweep_value) const {
  for (const auto& e : scalars) {
    if (e.name != name) continue;
    if (!sweep_value) return &e;
    if (e.sweep_value && std::abs(*e.sweep_value - *sweep_value) <= 1e-12 * std::max(1.0, std::abs(*sweep_value))) {
      return &e;
    }
  }
  return nullptr;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

void write_diagnostics_csv(std::ostream& os, const DiagnosticsReport& r) {
  os << "name,sweep_value,estimate,half_width,confidence,n,bound,p_value\n";
  for (const auto& e : r.scalars) {
    os << e.name << ',' << opt(e.sweep_value) << ',' << format_real(e.estimate) << ',' << opt(e.half_width) << ','
       << opt(e.confidence) << ',' << e.n << ',' << opt(e.bound) << ',' << opt(e.p_value) << '\n';
  }
}

DiagnosticsReport read_diagnostics_csv(std::istream& is) {
  DiagnosticsReport r;
  std::string line;
  if (!std::getline(is, line) || line.rfind("name,sweep_value,estimate", 0) != 0) {
    throw ConfigError("diagnostics.csv: missing or unexpected header");
  }
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 8) throw ConfigError("diagnostics.csv line " + std::to_string(lineno) + ": expected 8 columns");
    DiagnosticEntry e;
    e.name = f[0];
    e.sweep_value = parse_opt(f[1]);
    e.estimate = std::stod(f[2]);
    e.half_width = parse_opt(f[3]);
    e.confidence = parse_opt(f[4]);
    e.n = static_cast<std::size_t>(std::stoull(f[5]));
    e.bound = parse_opt(f[6]);
    e.p_value = parse_opt(f[7]);
    r.scalars.push_back(std::move(e));
  }
  return r;
}

void write_series_csv(std::ostream& os, const std::vector<TimedValue>& series) {
  os << "time,value\n";
  for (const auto& p : series) os << format_real(p.time) << ',' << format_real(p.value) << '\n';
}

}  // namespace kslab
