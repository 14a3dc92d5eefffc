#include "kslab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "kslab/bessel.hpp"
#include "kslab/clusters.hpp"
#include "kslab/integrator.hpp"

#ifndef KSLAB_VERSION
#define KSLAB_VERSION "0.0.0"
#endif

namespace kslab {

namespace {

RunConfig base(const std::string& name, Model model, std::uint64_t seed) {
  RunConfig c;
  c.experiment_name = name;
  c.model = model;
  c.params.seed = seed;
  return c;
}

std::map<std::string, RunConfig> build_presets() {
  std::map<std::string, RunConfig> out;
  {
    auto c = base("variance_slope", Model::system, 1001);
    c.params.n_particles = 32;
    c.params.chi = 4.0 * kPi;
    c.params.epsilon = 1e-3;
    c.params.dt = 1e-4;
    c.params.horizon = 1.0;
    c.params.replicas = 500;
    c.record_every = 100;
    c.observables = {"variance", "barycenter"};
    out[c.experiment_name] = c;
  }
  {
    auto c = base("pair_bessel", Model::pair_cubed, 1002);
    c.params.chi = 2.0 * kPi;
    c.params.dt = 1e-4;
    c.params.horizon = 1.0;
    c.params.replicas = 2000;
    c.pair_start = Vec2{1.0, 0.0};
    c.record_every = 100;
    out[c.experiment_name] = c;
  }
  {
    auto c = base("freezing", Model::pair_cubed, 1003);
    c.params.chi = 12.0 * kPi;
    c.params.dt = 1e-4;
    c.params.horizon = 5.0;
    c.params.replicas = 2000;
    c.pair_start = Vec2{1.0, 0.0};
    c.record_every = 500;
    out[c.experiment_name] = c;
  }
  {
    auto c = base("first_moment", Model::system, 1004);
    c.params.n_particles = 16;
    c.params.chi = 2.0 * kPi;
    c.params.epsilon = 1e-2;
    c.params.dt = 1e-3;
    c.params.horizon = 1.0;
    c.params.replicas = 1000;
    c.observables = {"first_moment"};
    c.observe_times = {0.25, 0.5, 1.0};
    out[c.experiment_name] = c;
  }
  {
    auto c = base("fund_bound", Model::system, 1005);
    c.params.n_particles = 8;
    c.params.chi = kPi;
    c.params.epsilon = 1e-3;
    c.params.dt = 1e-4;
    c.params.horizon = 1.0;
    c.params.replicas = 500;
    c.alpha = 0.75;
    c.observables = {"path_moment"};
    out[c.experiment_name] = c;
  }
  {
    auto c = base("triple_dichotomy", Model::system, 1006);
    c.params.n_particles = 8;
    c.params.chi = 7.0 * kPi;
    c.params.epsilon = 1e-3;
    c.params.dt = 1e-6;
    c.params.horizon = 1.0;
    c.params.replicas = 200;
    c.observables = {"min_pair", "min_triple"};
    c.record_every = 10000;
    c.sweep = Sweep{"chi", {7.0 * kPi, 23.0 * kPi}};
    out[c.experiment_name] = c;
  }
  {
    auto c = base("pair_collision", Model::system, 1007);
    c.params.n_particles = 4;
    c.params.chi = 4.0 * kPi;
    c.params.epsilon = 1e-2;
    c.params.dt = 1e-6;
    c.params.horizon = 1.0;
    c.params.replicas = 200;
    c.observables = {"min_pair"};
    c.record_every = 10000;
    c.sweep = Sweep{"epsilon", {1e-2, 1e-3, 1e-4}};
    out[c.experiment_name] = c;
  }
  {
    auto c = base("cluster_coalescence", Model::clusters, 1008);
    c.params.n_particles = 10;
    c.params.chi = 16.0 * kPi;
    c.params.epsilon = 1e-3;
    c.params.dt = 1e-4;
    c.params.horizon = 2.0;
    c.params.replicas = 200;
    c.record_every = 100;
    c.sweep = Sweep{"chi", {16.0 * kPi, 48.0 * kPi}};
    out[c.experiment_name] = c;
  }
  {
    auto c = base("angular_uniformity", Model::pair_angular, 1009);
    c.params.chi = 4.0 * kPi;
    c.params.dt = 1e-4;
    c.params.horizon = 0.5;
    c.params.replicas = 10000;
    c.pair_start = Vec2{0.0, 0.0};
    out[c.experiment_name] = c;
  }
  {
    auto c = base("regime_table", Model::regimes, 1010);
    c.params.n_particles = 5;
    c.params.chi = 6.5 * kPi;
    c.params.dt = 1.0;
    c.params.horizon = 1.0;
    c.sweep = Sweep{"chi", {5.0 * kPi, 6.5 * kPi, 7.5 * kPi, 10.0 * kPi, 25.0 * kPi}};
    c.roots_n_range = std::pair<int, int>{6, 50};
    c.inequality_n_max = 100;
    out[c.experiment_name] = c;
  }
  return out;
}

const std::map<std::string, RunConfig>& presets() {
  static const auto table = build_presets();
  return table;
}

std::string joined_names() {
  std::string s;
  for (const auto& n : preset_names()) s += (s.empty() ? "" : ", ") + n;
  return s;
}

// ---------------------------------------------------------------------------
// Per-replica work

struct ReplicaOutcome {
  std::uint64_t checksum = kNoiseChecksumSeed;
  std::map<std::string, double> values;
  std::map<std::string, std::vector<double>> series;  // on the record grid
  std::string snapshots;
  std::string failure;
};

bool snapshot_due(std::int64_t k, std::int64_t steps, std::int64_t every) {
  return k == 0 || k == steps || (every > 0 && k % every == 0);
}

std::int64_t nearest_step(double t, double dt) { return static_cast<std::int64_t>(std::llround(t / dt)); }

std::string time_key(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

ReplicaOutcome run_system_replica(const RunConfig& c, const SimParams& p, std::uint64_t replica,
                                  std::uint64_t label, bool keep_snapshots) {
  ReplicaOutcome out;
  NoiseStream noise(p.seed, replica);
  const std::int64_t steps = step_count(p.horizon, p.dt);
  const std::size_t n = static_cast<std::size_t>(p.n_particles);

  const bool want_var = c.observes("variance");
  const bool want_pair = c.observes("min_pair");
  const bool want_triple = c.observes("min_triple");
  const bool want_path = c.observes("path_moment");
  const bool want_bary = c.observes("barycenter");
  std::map<std::int64_t, double> observe;  // step -> requested time
  if (c.observes("first_moment")) {
    for (double t : c.observe_times) observe[nearest_step(t, p.dt)] = t;
  }

  const double floor = default_distance_floor(p.epsilon, p.dt);
  const double triple_thr = c.triple_threshold.value_or(default_triple_threshold(p.epsilon, p.dt));
  std::optional<PathMomentAccumulator> moment;
  if (want_path) moment.emplace(*c.alpha, 0, 1, floor);

  double min_pair = std::numeric_limits<double>::infinity();
  double min_triple = std::numeric_limits<double>::infinity();
  double first_hit = std::numeric_limits<double>::quiet_NaN();
  double bary_err = 0.0;
  Vec2 bary_prev;
  const double noise_scale = std::sqrt(2.0 * p.dt);
  std::ostringstream snaps;

  auto barycenter = [](std::span<const Vec2> x) {
    Vec2 s;
    for (const auto& v : x) s += v;
    return (1.0 / static_cast<double>(x.size())) * s;
  };

  SimulateOptions opts;
  opts.record_every = steps + 1;  // the observer does all the recording
  opts.observer = [&](std::int64_t k, const ParticleSystemState& st, std::span<const Vec2> xi) {
    const auto& x = st.positions;
    if (want_var && k % c.record_every == 0) out.series["variance"].push_back(subset_variance(x));
    if (want_pair || want_triple) {
      const Separations sep = want_triple ? min_separations(x) : Separations{min_pair_distance(x), 0.0};
      min_pair = std::min(min_pair, sep.min_pair);
      if (want_triple) {
        min_triple = std::min(min_triple, sep.min_triple_sum);
        if (std::isnan(first_hit) && sep.min_triple_sum <= triple_thr) first_hit = st.time;
      }
      if (k % c.record_every == 0) {
        out.series["min_pair"].push_back(sep.min_pair);
        if (want_triple) out.series["min_triple"].push_back(sep.min_triple_sum);
      }
    }
    if (auto it = observe.find(k); it != observe.end()) {
      out.values["first_moment[t=" + time_key(it->second) + "]"] = std::sqrt(1.0 + norm2(x[0]));
    }
    if (moment && k < steps) moment->add(x, p.dt);
    if (want_bary) {
      const Vec2 b = barycenter(x);
      if (k > 0) {
        Vec2 mean_xi;
        for (const auto& g : xi) mean_xi += g;
        mean_xi = (1.0 / static_cast<double>(n)) * mean_xi;
        bary_err = std::max(bary_err, norm(b - bary_prev - noise_scale * mean_xi));
      }
      bary_prev = b;
    }
    if (keep_snapshots && snapshot_due(k, steps, c.snapshot_every)) {
      const std::string t = format_real(st.time);
      for (std::size_t i = 0; i < n; ++i) {
        snaps << label << ',' << t << ',' << i << ',' << format_real(x[i].x) << ',' << format_real(x[i].y) << '\n';
      }
    }
  };

  try {
    const auto rec = simulate_system(p, noise, opts);
    out.checksum = rec.noise_checksum;
  } catch (const IntegrationBlowUp& e) {
    out.failure = "replica " + std::to_string(label) + ": " + e.what();
  }
  if (want_pair) out.values["min_pair"] = min_pair;
  if (want_triple) {
    out.values["min_triple"] = min_triple;
    out.values["triple_hit"] = std::isnan(first_hit) ? 0.0 : 1.0;
  }
  if (moment) out.values["path_moment"] = moment->value();
  if (want_bary) out.values["barycenter_error"] = bary_err;
  out.snapshots = snaps.str();
  return out;
}

ReplicaOutcome run_pair_cubed_replica(const RunConfig& c, const SimParams& p, std::uint64_t replica,
                                      std::uint64_t label, bool keep_snapshots) {
  ReplicaOutcome out;
  NoiseStream noise(p.seed, replica);
  const std::int64_t steps = step_count(p.horizon, p.dt);
  const double fr = c.freeze_radius.value_or(default_freeze_radius(p.dt));
  PairState s{0.0, lift_pair(*c.pair_start), false};
  std::ostringstream snaps;
  int unfreezes = 0;
  auto observe = [&](std::int64_t k) {
    if (k % c.record_every == 0) {
      out.series["frozen"].push_back(s.frozen ? 1.0 : 0.0);
      out.series["radial"].push_back(0.25 * norm2(project_pair(s.z)));
    }
    if (keep_snapshots && snapshot_due(k, steps, c.snapshot_every)) {
      const Vec2 d = project_pair(s.z);
      snaps << label << ',' << format_real(s.time) << ",0," << format_real(d.x) << ',' << format_real(d.y) << '\n';
    }
  };
  observe(0);
  for (std::int64_t k = 0; k < steps; ++k) {
    const Vec2 xi = noise.gaussian_pair();
    out.checksum = fold_noise_checksum(out.checksum, xi);
    const bool was_frozen = s.frozen;
    s = step_cubed(s, p.chi, p.dt, xi, fr);
    s.time = static_cast<double>(k + 1) * p.dt;
    if (was_frozen && !s.frozen) ++unfreezes;
    if (!is_finite(s.z)) {
      out.failure = "replica " + std::to_string(label) + ": " + IntegrationBlowUp(k, s.time).what();
      break;
    }
    observe(k + 1);
  }
  out.values["radial"] = 0.25 * norm2(project_pair(s.z));
  out.values["frozen"] = s.frozen ? 1.0 : 0.0;
  out.values["unfreezes"] = unfreezes;
  out.snapshots = snaps.str();
  return out;
}

ReplicaOutcome run_pair_angular_replica(const RunConfig& c, const SimParams& p, std::uint64_t replica,
                                        std::uint64_t label, bool keep_snapshots) {
  ReplicaOutcome out;
  NoiseStream noise(p.seed, replica);
  const std::int64_t steps = step_count(p.horizon, p.dt);
  const auto path = sample_pair_path(p.chi, *c.pair_start, p.dt, steps, noise);
  std::ostringstream snaps;
  for (std::int64_t k = 0; k <= steps; ++k) {
    const Vec2 d = path[static_cast<std::size_t>(k)];
    out.checksum = fold_noise_checksum(out.checksum, d);
    if (keep_snapshots && snapshot_due(k, steps, c.snapshot_every)) {
      snaps << label << ',' << format_real(static_cast<double>(k) * p.dt) << ",0," << format_real(d.x) << ','
            << format_real(d.y) << '\n';
    }
  }
  const Vec2 pz = project_pair(lift_pair(path.back()));
  out.values["angle"] = wrap_angle(std::atan2(pz.y, pz.x));
  out.values["radius"] = norm(pz);
  out.snapshots = snaps.str();
  return out;
}

ReplicaOutcome run_cluster_replica(const RunConfig& c, const SimParams& p, std::uint64_t replica,
                                   std::uint64_t label, bool keep_snapshots) {
  ReplicaOutcome out;
  NoiseStream noise(p.seed, replica);
  const std::int64_t steps = step_count(p.horizon, p.dt);
  const auto n = static_cast<std::size_t>(p.n_particles);
  const double thr = c.merge_threshold.value_or(default_merge_threshold(p.epsilon, p.dt));
  const auto allowed = allowed_mass_set(p.n_particles, p.chi);
  ClusterState s = make_cluster_state(sample_initial(p.initial_law, n, noise));
  std::ostringstream snaps;
  int violations = 0, boundary = 0, merges = 0, mass_error = 0;
  double bary_err = 0.0;
  double coalesced_at = std::numeric_limits<double>::quiet_NaN();
  std::vector<Vec2> xi;

  auto observe = [&](std::int64_t k) {
    for (const auto& q : s.particles) {
      if (!allowed.count(q.mass_units)) ++violations;
    }
    mass_error = std::max(mass_error, std::abs(s.total_units() - p.n_particles));
    if (std::isnan(coalesced_at) && s.particles.size() == 1) coalesced_at = s.time;
    if (k % c.record_every == 0) out.series["count"].push_back(static_cast<double>(s.particles.size()));
    if (keep_snapshots && snapshot_due(k, steps, c.snapshot_every)) write_cluster_snapshot(snaps, label, s);
  };
  observe(0);
  for (std::int64_t k = 0; k < steps; ++k) {
    xi.resize(s.particles.size());
    Vec2 increment;
    for (std::size_t i = 0; i < xi.size(); ++i) {
      xi[i] = noise.gaussian_pair();
      out.checksum = fold_noise_checksum(out.checksum, xi[i]);
      const double nu = s.mass(i);
      increment += (nu * std::sqrt(2.0 / (p.n_particles * nu)) * std::sqrt(p.dt)) * xi[i];
    }
    const Vec2 before = s.barycenter();
    s = step_cluster(s, p.chi, p.epsilon, p.dt, xi);
    s.time = static_cast<double>(k + 1) * p.dt;
    bool finite = true;
    for (const auto& q : s.particles) finite = finite && is_finite(q.position);
    if (!finite) {
      out.failure = "replica " + std::to_string(label) + ": " + IntegrationBlowUp(k, s.time).what();
      break;
    }
    const Vec2 moved = s.barycenter();
    const auto m = merge_components_detailed(s, p.chi, thr);
    s = m.state;
    merges += m.merges;
    boundary += m.boundary_cases;
    bary_err = std::max({bary_err, norm(moved - before - increment), norm(s.barycenter() - moved)});
    observe(k + 1);
  }
  out.values["violations"] = violations;
  out.values["mass_error"] = mass_error;
  out.values["boundary"] = boundary;
  out.values["merges"] = merges;
  out.values["barycenter_error"] = bary_err;
  out.values["coalesced"] = std::isnan(coalesced_at) ? 0.0 : 1.0;
  out.values["final_count"] = static_cast<double>(s.particles.size());
  out.snapshots = snaps.str();
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

DiagnosticEntry scalar(std::string name, std::optional<double> sv, double estimate, std::size_t n = 0) {
  DiagnosticEntry e;
  e.name = std::move(name);
  e.sweep_value = sv;
  e.estimate = estimate;
  e.n = n;
  return e;
}

std::vector<double> column(const std::vector<const ReplicaOutcome*>& rs, const std::string& key) {
  std::vector<double> v;
  v.reserve(rs.size());
  for (const auto* r : rs) {
    if (auto it = r->values.find(key); it != r->values.end()) v.push_back(it->second);
  }
  return v;
}

std::vector<TimedValue> mean_series(const std::vector<const ReplicaOutcome*>& rs, const std::string& key,
                                    double stride) {
  std::vector<TimedValue> out;
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto* r : rs) len = std::min(len, r->series.at(key).size());
  if (rs.empty()) return out;
  for (std::size_t k = 0; k < len; ++k) {
    double s = 0.0;
    for (const auto* r : rs) s += r->series.at(key)[k];
    out.push_back({static_cast<double>(k) * stride, s / static_cast<double>(rs.size())});
  }
  return out;
}

std::vector<TimedValue> second_half(std::span<const TimedValue> s, double horizon) {
  std::vector<TimedValue> out;
  for (const auto& p : s) {
    if (p.time >= 0.5 * horizon - 1e-12) out.push_back(p);
  }
  return out;
}

double sum_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double max_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  return m;
}

void aggregate_system(const RunConfig& c, const SimParams& p, std::optional<double> sv, const std::string& suffix,
                      const std::vector<const ReplicaOutcome*>& rs, DiagnosticsReport& rep) {
  const double stride = static_cast<double>(c.record_every) * p.dt;
  const std::size_t nr = rs.size();
  if (c.observes("variance") && nr > 0) {
    const auto mean = mean_series(rs, "variance", stride);
    rep.series["variance_mean" + suffix] = mean;
    const auto tail = second_half(mean, p.horizon);
    if (tail.size() >= 3) {
      auto e = scalar("variance_slope", sv, 0.0);
      e.estimate = slope_fit(tail).slope;
      e.n = nr;
      e.bound = (p.n_particles - 1) * (2.0 - p.chi / (4.0 * kPi));
      if (nr >= 2) {
        std::vector<double> slopes;
        for (const auto* r : rs) {
          std::vector<TimedValue> own;
          const auto& v = r->series.at("variance");
          for (std::size_t k = 0; k < v.size(); ++k) own.push_back({static_cast<double>(k) * stride, v[k]});
          slopes.push_back(slope_fit(second_half(own, p.horizon)).slope);
        }
        const auto m = mean_estimate(slopes);
        e.half_width = student_t_quantile(0.95, static_cast<double>(nr - 1)) * m.std_error;
        e.confidence = 0.95;
      }
      rep.add(e);
    }
  }
  if (c.observes("first_moment")) {
    std::optional<double> m;
    try {
      m = first_moment(p.initial_law);
    } catch (const ConfigError&) {
    }
    for (double t : c.observe_times) {
      const std::string key = "first_moment[t=" + time_key(t) + "]";
      const auto v = column(rs, key);
      if (v.empty()) continue;
      const auto est = mean_estimate(v);
      auto e = scalar(key, sv, est.mean);
      e.n = est.n;
      e.half_width = 3.0 * est.std_error;  // one-sided 3 standard errors
      e.confidence = 0.99865;
      if (m) e.bound = first_moment_bound(*m, t);
      rep.add(e);
    }
  }
  if (c.observes("path_moment")) {
    const auto v = column(rs, "path_moment");
    if (!v.empty()) {
      const auto est = mean_estimate(v);
      auto e = scalar("path_moment", sv, est.mean);
      e.n = est.n;
      e.half_width = 1.6448536269514722 * est.std_error;  // one-sided 95%
      e.confidence = 0.95;
      // no bound for product laws, whose particles have different first moments
      try {
        const double m = first_moment(p.initial_law);
        e.bound = fund_bound(m, p.horizon, *c.alpha, p.n_particles, p.chi);
      } catch (const ConfigError&) {
      }
      rep.add(e);
    }
  }
  if (c.observes("min_pair") || c.observes("min_triple")) {
    const auto v = column(rs, "min_pair");
    if (!v.empty()) {
      rep.add(scalar("min_pair_median", sv, median(v), v.size()));
      const double close = 10.0 * default_distance_floor(p.epsilon, p.dt);
      double hits = 0.0;
      for (double x : v) hits += x <= close ? 1.0 : 0.0;
      rep.add(scalar("min_pair_close_fraction", sv, hits / static_cast<double>(v.size()), v.size()));
      rep.add(scalar("min_pair_close_radius", sv, close));
      rep.series["min_pair_mean" + suffix] = mean_series(rs, "min_pair", stride);
    }
  }
  if (c.observes("min_triple")) {
    const auto v = column(rs, "min_triple");
    const auto hits = column(rs, "triple_hit");
    if (!v.empty()) {
      rep.add(scalar("min_triple_median", sv, median(v), v.size()));
      rep.add(scalar("triple_hit_fraction", sv, sum_of(hits) / static_cast<double>(hits.size()), hits.size()));
      rep.add(scalar("triple_threshold", sv, c.triple_threshold.value_or(default_triple_threshold(p.epsilon, p.dt))));
      rep.add(scalar("triple_collision_chi", sv, triple_collision_threshold(p.n_particles)));
      rep.series["min_triple_mean" + suffix] = mean_series(rs, "min_triple", stride);
    }
  }
  if (c.observes("barycenter")) {
    const auto v = column(rs, "barycenter_error");
    if (!v.empty()) rep.add(scalar("barycenter_max_error", sv, max_of(v), v.size()));
  }
}

void aggregate_pair_cubed(const RunConfig& c, const SimParams& p, std::optional<double> sv, const std::string& suffix,
                          const std::vector<const ReplicaOutcome*>& rs, DiagnosticsReport& rep) {
  if (rs.empty()) return;
  const double stride = static_cast<double>(c.record_every) * p.dt;
  const double dim = 2.0 - p.chi / (4.0 * kPi);
  const BesqSpec spec{dim, 0.25 * norm2(*c.pair_start)};
  const auto radial = column(rs, "radial");
  if (dim > 0.0) {
    const auto ks = ks_statistic(radial, [&](double y) { return besq_cdf(spec, p.horizon, y); });
    auto e = scalar("radial_ks", sv, ks.statistic);
    e.n = ks.n_samples;
    e.p_value = ks.p_value;
    rep.add(e);
    const auto m = mean_estimate(radial);
    auto mean = scalar("radial_mean", sv, m.mean);
    mean.n = m.n;
    mean.half_width = 1.959963984540054 * m.std_error;
    mean.confidence = 0.95;
    mean.bound = spec.start + dim * p.horizon;  // exact mean of BESQ
    rep.add(mean);
  }
  const auto frozen = column(rs, "frozen");
  rep.add(scalar("frozen_fraction", sv, sum_of(frozen) / static_cast<double>(frozen.size()), frozen.size()));
  const auto un = column(rs, "unfreezes");
  rep.add(scalar("unfreeze_events", sv, sum_of(un), un.size()));
  rep.add(scalar("freeze_radius", sv, c.freeze_radius.value_or(default_freeze_radius(p.dt))));
  rep.series["frozen_fraction" + suffix] = mean_series(rs, "frozen", stride);
  rep.series["radial_mean" + suffix] = mean_series(rs, "radial", stride);
}

void aggregate_pair_angular(const RunConfig&, const SimParams&, std::optional<double> sv, const std::string&,
                            const std::vector<const ReplicaOutcome*>& rs, DiagnosticsReport& rep) {
  if (rs.empty()) return;
  constexpr int kBins = 16;
  const auto angle = column(rs, "angle");
  const auto radius = column(rs, "radius");
  std::vector<std::uint64_t> counts(kBins, 0);
  for (double a : angle) {
    const int b = std::min(kBins - 1, static_cast<int>(a / kTwoPi * kBins));
    ++counts[static_cast<std::size_t>(b)];
  }
  const auto chi2 = chi_square_uniformity(counts);
  auto e = scalar("angle_uniformity", sv, chi2.statistic);
  e.n = chi2.n_samples;
  e.p_value = chi2.p_value;
  rep.add(e);
  rep.add(scalar("angle_radius_correlation", sv, pearson_correlation(angle, radius), angle.size()));
}

void aggregate_clusters(const RunConfig& c, const SimParams& p, std::optional<double> sv, const std::string& suffix,
                        const std::vector<const ReplicaOutcome*>& rs, DiagnosticsReport& rep) {
  if (rs.empty()) return;
  const double stride = static_cast<double>(c.record_every) * p.dt;
  const std::size_t n = rs.size();
  rep.add(scalar("mass_violations", sv, sum_of(column(rs, "violations")), n));
  rep.add(scalar("total_mass_error", sv, max_of(column(rs, "mass_error")), n));
  rep.add(scalar("coalescence_fraction", sv, sum_of(column(rs, "coalesced")) / static_cast<double>(n), n));
  rep.add(scalar("final_count_mean", sv, mean_estimate(column(rs, "final_count")).mean, n));
  rep.add(scalar("merge_events", sv, sum_of(column(rs, "merges")), n));
  rep.add(scalar("boundary_cases", sv, sum_of(column(rs, "boundary")), n));
  rep.add(scalar("barycenter_max_error", sv, max_of(column(rs, "barycenter_error")), n));
  rep.add(scalar("merge_threshold", sv, c.merge_threshold.value_or(default_merge_threshold(p.epsilon, p.dt))));
  rep.series["count_mean" + suffix] = mean_series(rs, "count", stride);
}

void regimes_report(const RunConfig& c, const std::vector<std::pair<std::optional<double>, SimParams>>& points,
                    DiagnosticsReport& rep) {
  for (const auto& [sv, p] : points) {
    const auto table = classify_regimes(p.n_particles, p.chi);
    for (int k = 2; k <= p.n_particles; ++k) {
      const std::string tag = "[k=" + std::to_string(k) + "]";
      rep.add(scalar("regime" + tag, sv, static_cast<double>(static_cast<int>(table.at(k))), 1));
      rep.add(scalar("bessel_dimension" + tag, sv, bessel_dimension(p.n_particles, p.chi, k)));
    }
    if (table.roots) {
      rep.add(scalar("x_minus", sv, table.roots->x_minus));
      rep.add(scalar("x_plus", sv, table.roots->x_plus));
    }
  }
  if (c.roots_n_range) {
    double worst = 0.0;
    std::size_t count = 0;
    for (int n = c.roots_n_range->first; n <= c.roots_n_range->second; ++n, ++count) {
      const auto r = collision_roots(n, 4.0 * kPi * n / 3.0);
      worst = r ? std::max({worst, std::abs(r->x_minus - 3.0), std::abs(r->x_plus - 4.0)})
                : std::numeric_limits<double>::infinity();
    }
    rep.add(scalar("roots_max_error", std::nullopt, worst, count));
  }
  if (c.inequality_n_max) {
    int bad = 0;
    std::size_t count = 0;
    for (int n = 3; n <= *c.inequality_n_max; ++n, ++count) {
      if (!(triple_collision_threshold(n) <= 4.0 * kPi * n / 3.0)) ++bad;
    }
    rep.add(scalar("threshold_inequality_violations", std::nullopt, static_cast<double>(bad), count));
  }
}

std::string csv_header(Model m) {
  return m == Model::clusters ? "replica,time,particle_index,x,y,mass\n" : "replica,time,particle_index,x,y\n";
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "variance_slope",   "pair_bessel",    "freezing",           "first_moment",        "fund_bound",
      "triple_dichotomy", "pair_collision", "cluster_coalescence", "angular_uniformity", "regime_table"};
  return names;
}

RunConfig preset(const std::string& name) {
  const auto& table = presets();
  auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown preset '" + name + "'; available: " + joined_names());
  return it->second;
}

RunResult run_experiment(const RunConfig& config, const RunOptions& options) {
  validate(config);
  RunResult result;
  result.config = config;
  result.report.params = config.params;

  std::vector<std::pair<std::optional<double>, SimParams>> points;
  if (config.sweep) {
    for (double v : config.sweep->values) {
      SimParams p = config.params;
      (config.sweep->parameter == "chi" ? p.chi : p.epsilon) = v;
      points.emplace_back(v, p);
    }
  } else {
    points.emplace_back(std::nullopt, config.params);
  }

  if (config.model == Model::regimes) {
    regimes_report(config, points, result.report);
    return result;
  }

  const auto replicas = static_cast<std::size_t>(config.params.replicas);
  const std::size_t tasks = points.size() * replicas;
  std::vector<ReplicaOutcome> outcomes(tasks);
  std::vector<std::exception_ptr> errors(tasks);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < tasks;) {
      const auto& p = points[t / replicas].second;
      const std::uint64_t r = t % replicas;
      try {
        switch (config.model) {
          case Model::system: outcomes[t] = run_system_replica(config, p, r, t, options.keep_snapshots); break;
          case Model::pair_cubed: outcomes[t] = run_pair_cubed_replica(config, p, r, t, options.keep_snapshots); break;
          case Model::pair_angular:
            outcomes[t] = run_pair_angular_replica(config, p, r, t, options.keep_snapshots);
            break;
          case Model::clusters: outcomes[t] = run_cluster_replica(config, p, r, t, options.keep_snapshots); break;
          case Model::regimes: break;
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(std::max<std::size_t>(tasks, 1))));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ostringstream snaps;
  snaps << csv_header(config.model);
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    const auto& [sv, p] = points[pi];
    std::string suffix;
    if (sv) suffix = "_" + config.sweep->parameter + "=" + time_key(*sv);
    std::vector<const ReplicaOutcome*> good;
    for (std::size_t r = 0; r < replicas; ++r) {
      const auto& o = outcomes[pi * replicas + r];
      result.noise_checksums.push_back(o.checksum);
      snaps << o.snapshots;
      if (o.failure.empty()) {
        good.push_back(&o);
      } else {
        result.failures.push_back(o.failure);
      }
    }
    switch (config.model) {
      case Model::system: aggregate_system(config, p, sv, suffix, good, result.report); break;
      case Model::pair_cubed: aggregate_pair_cubed(config, p, sv, suffix, good, result.report); break;
      case Model::pair_angular: aggregate_pair_angular(config, p, sv, suffix, good, result.report); break;
      case Model::clusters: aggregate_clusters(config, p, sv, suffix, good, result.report); break;
      case Model::regimes: break;
    }
  }
  if (options.keep_snapshots) result.snapshots_csv = snaps.str();
  return result;
}

// ---------------------------------------------------------------------------
// Suites

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

const DiagnosticEntry& need(const DiagnosticsReport& r, const std::string& name,
                            std::optional<double> sv = std::nullopt) {
  const auto* e = r.find(name, sv);
  if (!e) {
    throw ConfigError("diagnostics lack '" + name + "'" + (sv ? " at sweep value " + fmt(*sv) : std::string()));
  }
  return *e;
}

// Regime of k in the N = 5 table, transcribed interval by interval.
Regime reference_n5_regime(double chi, int k) {
  const double x = chi / kPi;
  if (x <= 6.0) return k == 2 ? Regime::reflecting : Regime::no_collision;
  if (x <= 20.0 / 3.0) return (k == 2 || k == 5) ? Regime::reflecting : Regime::no_collision;
  if (x < 8.0) return Regime::reflecting;
  if (x < 20.0) return k <= static_cast<int>(std::ceil(40.0 / x)) - 1 ? Regime::reflecting : Regime::sticky;
  return Regime::sticky;
}

std::vector<CriterionOutcome> suite_impl(const std::string& suite, const DiagnosticsReport& r) {
  std::vector<CriterionOutcome> out;
  const RunConfig c = preset(suite);
  auto check = [&](std::string name, bool pass, std::string detail) {
    out.push_back({std::move(name), pass, std::move(detail)});
  };

  if (suite == "variance_slope") {
    const auto& e = need(r, "variance_slope");
    const double target = *e.bound;
    const double tol = 0.03 * target;
    const double hw = e.half_width.value_or(0.0);
    check("slope within 3% of (N-1)(2 - chi/(4 pi))", std::abs(e.estimate - target) <= tol,
          "slope " + fmt(e.estimate) + ", target " + fmt(target) + ", tolerance " + fmt(tol));
    check("target inside the 95% CI of the slope", e.half_width && std::abs(e.estimate - target) <= hw,
          "CI " + fmt(e.estimate) + " +/- " + fmt(hw) + " over " + std::to_string(e.n) + " replicas");
    if (const auto* b = r.find("barycenter_max_error")) {
      check("barycenter identity", b->estimate <= 1e-12, "max error " + fmt(b->estimate));
    }
  } else if (suite == "pair_bessel") {
    const auto& e = need(r, "radial_ks");
    check("KS of R_T against the BESQ law", e.p_value.value_or(0.0) > 0.01,
          "D = " + fmt(e.estimate) + ", p = " + fmt(e.p_value.value_or(0.0)) + ", n = " + std::to_string(e.n));
  } else if (suite == "freezing") {
    const auto& f = need(r, "frozen_fraction");
    const auto& u = need(r, "unfreeze_events");
    check("frozen by the horizon in >= 99% of replicas", f.estimate >= 0.99,
          "frozen fraction " + fmt(f.estimate) + " of " + std::to_string(f.n));
    check("frozen states never unfreeze", u.estimate == 0.0, std::to_string(static_cast<long>(u.estimate)) + " events");
  } else if (suite == "first_moment") {
    for (double t : c.observe_times) {
      const auto& e = need(r, "first_moment[t=" + time_key(t) + "]");
      const double lim = e.bound.value_or(-std::numeric_limits<double>::infinity()) + e.half_width.value_or(0.0);
      check("E sqrt(1+|X_t|^2) <= m + 2t + 3 SE at t = " + fmt(t), e.estimate <= lim,
            "estimate " + fmt(e.estimate) + ", bound " + fmt(e.bound.value_or(NAN)) + " + 3 SE " +
                fmt(e.half_width.value_or(0.0)));
    }
  } else if (suite == "fund_bound") {
    const auto& e = need(r, "path_moment");
    const double upper = e.estimate + e.half_width.value_or(0.0);
    check("mean path moment (one-sided 95%) <= fund bound", e.bound && upper <= *e.bound,
          "estimate " + fmt(e.estimate) + ", upper " + fmt(upper) + ", bound " + fmt(e.bound.value_or(NAN)));
  } else if (suite == "triple_dichotomy") {
    const double low = c.sweep->values.at(0), high = c.sweep->values.at(1);
    const auto& a = need(r, "triple_hit_fraction", low);
    const auto& b = need(r, "triple_hit_fraction", high);
    check("chi = " + fmt(low / kPi) + " pi stays above the triple threshold in >= 95%", 1.0 - a.estimate >= 0.95,
          "above in " + fmt(1.0 - a.estimate) + " of " + std::to_string(a.n));
    check("chi = " + fmt(high / kPi) + " pi hits the triple threshold in >= 80%", b.estimate >= 0.80,
          "hit in " + fmt(b.estimate) + " of " + std::to_string(b.n));
  } else if (suite == "pair_collision") {
    std::string medians;
    bool decreasing = true;
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : c.sweep->values) {
      const auto& m = need(r, "min_pair_median", eps);
      decreasing = decreasing && m.estimate < prev;
      prev = m.estimate;
      medians += (medians.empty() ? "" : ", ") + fmt(m.estimate);
    }
    check("median min_pair strictly decreasing in epsilon", decreasing, "medians " + medians);
    for (double eps : c.sweep->values) {
      const auto& f = need(r, "min_pair_close_fraction", eps);
      check("fraction with min_pair <= 10 eps >= 10% at eps = " + fmt(eps), f.estimate >= 0.10,
            "fraction " + fmt(f.estimate) + " of " + std::to_string(f.n));
    }
  } else if (suite == "cluster_coalescence") {
    for (double chi : c.sweep->values) {
      const auto& v = need(r, "mass_violations", chi);
      const auto& m = need(r, "total_mass_error", chi);
      check("masses in the allowed set at chi = " + fmt(chi / kPi) + " pi", v.estimate == 0.0,
            fmt(v.estimate) + " violations");
      check("total mass exactly 1 at chi = " + fmt(chi / kPi) + " pi", m.estimate == 0.0,
            "max unit error " + fmt(m.estimate));
    }
    const double high = c.sweep->values.back();
    const auto& f = need(r, "coalescence_fraction", high);
    check("full coalescence before T in >= 90% at chi = " + fmt(high / kPi) + " pi", f.estimate >= 0.90,
          "fraction " + fmt(f.estimate) + " of " + std::to_string(f.n));
  } else if (suite == "angular_uniformity") {
    const auto& u = need(r, "angle_uniformity");
    const auto& k = need(r, "angle_radius_correlation");
    check("angle uniform over 16 bins", u.p_value.value_or(0.0) > 0.01,
          "chi2 = " + fmt(u.estimate) + ", p = " + fmt(u.p_value.value_or(0.0)));
    check("|corr(angle, radius)| < 0.05", std::abs(k.estimate) < 0.05, "corr = " + fmt(k.estimate));
  } else if (suite == "regime_table") {
    const auto& roots = need(r, "roots_max_error");
    check("collision roots (3, 4) at chi = 4 pi N / 3", roots.estimate <= 1e-12,
          "max error " + fmt(roots.estimate) + " over " + std::to_string(roots.n) + " values of N");
    for (double chi : c.sweep->values) {
      std::string got, want;
      bool same = true;
      for (int k = 2; k <= c.params.n_particles; ++k) {
        const auto code = static_cast<Regime>(static_cast<int>(need(r, "regime[k=" + std::to_string(k) + "]", chi).estimate));
        const auto expect = reference_n5_regime(chi, k);
        same = same && code == expect;
        got += std::string(got.empty() ? "" : " ") + to_string(code);
        want += std::string(want.empty() ? "" : " ") + to_string(expect);
      }
      check("N = 5 table at chi = " + fmt(chi / kPi) + " pi", same, "got [" + got + "], table [" + want + "]");
    }
    const auto& ineq = need(r, "threshold_inequality_violations");
    check("8 pi (N-2)/(N-1) <= 4 pi N / 3", ineq.estimate == 0.0,
          fmt(ineq.estimate) + " violations over " + std::to_string(ineq.n) + " values of N");
  }
  return out;
}

}  // namespace

std::vector<CriterionOutcome> evaluate_suite(const std::string& suite, const DiagnosticsReport& report) {
  return suite_impl(suite, report);
}

// ---------------------------------------------------------------------------
// Outputs

std::string tool_version() { return std::string("kslab ") + KSLAB_VERSION; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json make_manifest(const RunResult& result, const std::string& started_at, const std::string& finished_at) {
  nlohmann::json checks = nlohmann::json::array();
  for (auto c : result.noise_checksums) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(c));
    checks.push_back(buf);
  }
  nlohmann::json m;
  m["experiment_name"] = result.config.experiment_name;
  m["params"] = to_json(result.config);
  m["started_at"] = started_at;
  m["finished_at"] = finished_at;
  m["tool_version"] = tool_version();
  m["gaussian_method"] = NoiseStream::kMethod;
  m["noise_checksums"] = checks;
  m["status"] = result.ok() ? "ok" : "failed";
  if (!result.ok()) m["failures"] = result.failures;
  return m;
}

void write_run_outputs(const std::filesystem::path& dir, const RunResult& result, const std::string& started_at,
                       const std::string& finished_at) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    return os;
  };
  {
    auto os = open("manifest.json");
    os << make_manifest(result, started_at, finished_at).dump(2) << '\n';
  }
  {
    auto os = open("snapshots.csv");
    os << (result.snapshots_csv.empty() ? csv_header(result.config.model) : result.snapshots_csv);
  }
  {
    auto os = open("diagnostics.csv");
    write_diagnostics_csv(os, result.report);
  }
  for (const auto& [name, series] : result.report.series) {
    auto os = open("series_" + name + ".csv");
    write_series_csv(os, series);
  }
  const auto marker = dir / "FAILED";
  if (!result.ok()) {
    auto os = open("FAILED");
    for (const auto& f : result.failures) os << f << '\n';
  } else if (std::filesystem::exists(marker)) {
    std::filesystem::remove(marker);
  }
}

}  // namespace kslab
