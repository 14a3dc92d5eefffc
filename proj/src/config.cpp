#include "kslab/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "kslab/diagnostics.hpp"

namespace kslab {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError("field '" + field + "': " + what);
}

double get_real(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number()) fail(where, "must be a number");
  return v.get<double>();
}

std::int64_t get_int(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) fail(where, "must be an integer");
  return v.get<std::int64_t>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      fail(where.empty() ? it.key() : where + "." + it.key(), "unknown field");
    }
  }
}

json vec_to_json(Vec2 v) { return json::array({v.x, v.y}); }

Vec2 vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    fail(where, "expected a two-element numeric array [x, y]");
  }
  Vec2 v{j[0].get<double>(), j[1].get<double>()};
  if (!is_finite(v)) fail(where, "coordinates must be finite");
  return v;
}

const std::set<std::string> kSimParamKeys = {"n_particles", "chi",  "epsilon", "ell",     "dt",
                                             "horizon",     "seed", "initial_law", "replicas"};

}  // namespace

const char* to_string(Model m) {
  switch (m) {
    case Model::system: return "system";
    case Model::pair_cubed: return "pair_cubed";
    case Model::pair_angular: return "pair_angular";
    case Model::clusters: return "clusters";
    case Model::regimes: return "regimes";
  }
  return "?";
}

Model model_from_string(const std::string& s) {
  for (Model m : {Model::system, Model::pair_cubed, Model::pair_angular, Model::clusters, Model::regimes}) {
    if (s == to_string(m)) return m;
  }
  fail("model", "unknown model '" + s + "' (expected system, pair_cubed, pair_angular, clusters or regimes)");
}

bool RunConfig::observes(const std::string& name) const {
  return std::find(observables.begin(), observables.end(), name) != observables.end();
}

json initial_law_to_json(const InitialLaw& law) {
  return std::visit(
      [](const auto& l) -> json {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, StandardGaussian>) {
          return {{"kind", "standard_gaussian"}};
        } else if constexpr (std::is_same_v<L, UniformDisk>) {
          return {{"kind", "uniform_disk"}, {"radius", l.radius}};
        } else if constexpr (std::is_same_v<L, PointCloud>) {
          json pts = json::array();
          for (const auto& p : l.points) pts.push_back(vec_to_json(p));
          return {{"kind", "point_cloud"}, {"points", pts}};
        } else {
          return {{"kind", "product_of"},
                  {"first", initial_law_to_json(l.factors.at(0))},
                  {"second", initial_law_to_json(l.factors.at(1))},
                  {"split", l.split}};
        }
      },
      law.law);
}

InitialLaw initial_law_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    fail(where, "expected an object with a string 'kind'");
  }
  const auto kind = j["kind"].get<std::string>();
  if (kind == "standard_gaussian") {
    reject_unknown(j, {"kind"}, where);
    return {StandardGaussian{}};
  }
  if (kind == "uniform_disk") {
    reject_unknown(j, {"kind", "radius"}, where);
    if (!j.contains("radius")) fail(where + ".radius", "missing");
    const double r = get_real(j, "radius", where + ".radius");
    if (!(r > 0.0)) fail(where + ".radius", "must be positive");
    return {UniformDisk{r}};
  }
  if (kind == "point_cloud") {
    reject_unknown(j, {"kind", "points"}, where);
    if (!j.contains("points") || !j["points"].is_array()) fail(where + ".points", "expected an array of [x, y]");
    PointCloud c;
    for (std::size_t i = 0; i < j["points"].size(); ++i) {
      c.points.push_back(vec_from_json(j["points"][i], where + ".points[" + std::to_string(i) + "]"));
    }
    return {std::move(c)};
  }
  if (kind == "product_of") {
    reject_unknown(j, {"kind", "first", "second", "split"}, where);
    if (!j.contains("first") || !j.contains("second")) fail(where, "product_of needs 'first' and 'second'");
    ProductOf p;
    p.factors.push_back(initial_law_from_json(j["first"], where + ".first"));
    p.factors.push_back(initial_law_from_json(j["second"], where + ".second"));
    if (j.contains("split")) {
      const auto s = get_int(j, "split", where + ".split");
      if (s < 0) fail(where + ".split", "must be >= 0");
      p.split = static_cast<std::size_t>(s);
    }
    return {std::move(p)};
  }
  fail(where + ".kind", "unknown law '" + kind +
                            "' (expected standard_gaussian, uniform_disk, point_cloud or product_of)");
}

json sim_params_to_json(const SimParams& p) {
  json j = {{"n_particles", p.n_particles}, {"chi", p.chi},         {"epsilon", p.epsilon},
            {"dt", p.dt},                   {"horizon", p.horizon}, {"seed", p.seed},
            {"initial_law", initial_law_to_json(p.initial_law)},    {"replicas", p.replicas}};
  if (p.ell) j["ell"] = *p.ell;
  return j;
}

SimParams sim_params_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  SimParams p;
  for (const char* key : {"n_particles", "chi", "dt", "horizon", "seed"}) {
    if (!j.contains(key)) fail(key, "missing required field");
  }
  p.n_particles = static_cast<int>(get_int(j, "n_particles", "n_particles"));
  p.chi = get_real(j, "chi", "chi");
  if (j.contains("epsilon")) p.epsilon = get_real(j, "epsilon", "epsilon");
  if (j.contains("ell") && !j["ell"].is_null()) p.ell = get_real(j, "ell", "ell");
  p.dt = get_real(j, "dt", "dt");
  p.horizon = get_real(j, "horizon", "horizon");
  const auto& seed = j["seed"];
  if (seed.is_number_unsigned()) {
    p.seed = seed.get<std::uint64_t>();
  } else if (seed.is_number_integer() && seed.get<std::int64_t>() >= 0) {
    p.seed = static_cast<std::uint64_t>(seed.get<std::int64_t>());
  } else {
    fail("seed", "must be a non-negative 64-bit integer");
  }
  if (j.contains("initial_law")) p.initial_law = initial_law_from_json(j["initial_law"]);
  if (j.contains("replicas")) p.replicas = static_cast<int>(get_int(j, "replicas", "replicas"));
  validate(p);
  return p;
}

json to_json(const RunConfig& c) {
  json j = sim_params_to_json(c.params);
  j["experiment_name"] = c.experiment_name;
  j["model"] = to_string(c.model);
  j["record_every"] = c.record_every;
  j["snapshot_every"] = c.snapshot_every;
  if (!c.observables.empty()) j["observables"] = c.observables;
  if (c.alpha) j["alpha"] = *c.alpha;
  if (!c.observe_times.empty()) j["observe_times"] = c.observe_times;
  if (c.freeze_radius) j["freeze_radius"] = *c.freeze_radius;
  if (c.merge_threshold) j["merge_threshold"] = *c.merge_threshold;
  if (c.triple_threshold) j["triple_threshold"] = *c.triple_threshold;
  if (c.pair_start) j["pair_start"] = vec_to_json(*c.pair_start);
  if (c.sweep) j["sweep"] = {{"parameter", c.sweep->parameter}, {"values", c.sweep->values}};
  if (c.roots_n_range) j["roots_n_range"] = json::array({c.roots_n_range->first, c.roots_n_range->second});
  if (c.inequality_n_max) j["inequality_n_max"] = *c.inequality_n_max;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  std::set<std::string> known = kSimParamKeys;
  for (const char* k : {"experiment_name", "model", "record_every", "snapshot_every", "observables", "alpha",
                        "observe_times", "freeze_radius", "merge_threshold", "triple_threshold", "pair_start",
                        "sweep", "roots_n_range", "inequality_n_max"}) {
    known.insert(k);
  }
  reject_unknown(j, known, "");

  RunConfig c;
  c.params = sim_params_from_json(j);
  if (j.contains("experiment_name")) {
    if (!j["experiment_name"].is_string() || j["experiment_name"].get<std::string>().empty()) {
      fail("experiment_name", "must be a non-empty string");
    }
    c.experiment_name = j["experiment_name"].get<std::string>();
  }
  if (j.contains("model")) {
    if (!j["model"].is_string()) fail("model", "must be a string");
    c.model = model_from_string(j["model"].get<std::string>());
  }
  if (j.contains("record_every")) c.record_every = get_int(j, "record_every", "record_every");
  if (j.contains("snapshot_every")) c.snapshot_every = get_int(j, "snapshot_every", "snapshot_every");
  if (j.contains("observables")) {
    if (!j["observables"].is_array()) fail("observables", "must be an array of strings");
    for (const auto& o : j["observables"]) {
      if (!o.is_string()) fail("observables", "must be an array of strings");
      c.observables.push_back(o.get<std::string>());
    }
  }
  if (j.contains("alpha")) c.alpha = get_real(j, "alpha", "alpha");
  if (j.contains("observe_times")) {
    if (!j["observe_times"].is_array()) fail("observe_times", "must be an array of numbers");
    for (const auto& t : j["observe_times"]) {
      if (!t.is_number()) fail("observe_times", "must be an array of numbers");
      c.observe_times.push_back(t.get<double>());
    }
  }
  if (j.contains("freeze_radius")) c.freeze_radius = get_real(j, "freeze_radius", "freeze_radius");
  if (j.contains("merge_threshold")) c.merge_threshold = get_real(j, "merge_threshold", "merge_threshold");
  if (j.contains("triple_threshold")) c.triple_threshold = get_real(j, "triple_threshold", "triple_threshold");
  if (j.contains("pair_start")) c.pair_start = vec_from_json(j["pair_start"], "pair_start");
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    if (!s.is_object()) fail("sweep", "must be an object {parameter, values}");
    reject_unknown(s, {"parameter", "values"}, "sweep");
    if (!s.contains("parameter") || !s["parameter"].is_string()) fail("sweep.parameter", "must be a string");
    if (!s.contains("values") || !s["values"].is_array() || s["values"].empty()) {
      fail("sweep.values", "must be a non-empty array of numbers");
    }
    Sweep sw;
    sw.parameter = s["parameter"].get<std::string>();
    for (const auto& v : s["values"]) {
      if (!v.is_number()) fail("sweep.values", "must be a non-empty array of numbers");
      sw.values.push_back(v.get<double>());
    }
    c.sweep = std::move(sw);
  }
  if (j.contains("roots_n_range")) {
    const auto& r = j["roots_n_range"];
    if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer()) {
      fail("roots_n_range", "expected [n_min, n_max]");
    }
    c.roots_n_range = std::pair<int, int>{r[0].get<int>(), r[1].get<int>()};
  }
  if (j.contains("inequality_n_max")) {
    c.inequality_n_max = static_cast<int>(get_int(j, "inequality_n_max", "inequality_n_max"));
  }
  validate(c);
  return c;
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into line/column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                      e.what());
  }
  return run_config_from_json(j);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void validate(const RunConfig& c) {
  validate(c.params);
  if (c.record_every < 1) fail("record_every", "must be an integer >= 1");
  if (c.snapshot_every < 0) fail("snapshot_every", "must be an integer >= 0");
  for (const auto& o : c.observables) {
    if (std::find(kObservables.begin(), kObservables.end(), o) == kObservables.end()) {
      fail("observables", "unknown observable '" + o + "'");
    }
  }
  if (!c.observables.empty() && c.model != Model::system) {
    fail("observables", "only meaningful for model 'system'");
  }
  if (c.sweep && c.sweep->parameter != "chi" && c.sweep->parameter != "epsilon") {
    fail("sweep.parameter", "must be 'chi' or 'epsilon'");
  }
  auto chis = c.sweep && c.sweep->parameter == "chi" ? c.sweep->values : std::vector<double>{c.params.chi};
  auto epss = c.sweep && c.sweep->parameter == "epsilon" ? c.sweep->values : std::vector<double>{c.params.epsilon};
  for (double chi : chis) {
    if (!(chi > 0.0)) fail("sweep.values", "chi values must be positive");
  }
  for (double e : epss) {
    if (!(e >= 0.0 && e <= 1.0)) fail("sweep.values", "epsilon values must lie in [0, 1]");
  }
  if (c.observes("path_moment")) {
    if (!c.alpha) fail("alpha", "required by the path_moment observable");
    for (double chi : chis) {
      const double lo = fund_alpha_min(c.params.n_particles, chi);
      if (!(*c.alpha > lo && *c.alpha < 1.0)) {
        fail("alpha", "must satisfy (N-1) chi / (2 pi N) < alpha < 1, i.e. lie in (" + std::to_string(lo) +
                          ", 1) for N = " + std::to_string(c.params.n_particles) + ", chi = " + std::to_string(chi));
      }
    }
  }
  if (c.observes("first_moment")) {
    if (c.observe_times.empty()) fail("observe_times", "required by the first_moment observable");
    for (double t : c.observe_times) {
      if (!(t >= 0.0 && t <= c.params.horizon)) fail("observe_times", "times must lie in [0, horizon]");
    }
  }
  if (c.observes("min_triple") && c.params.n_particles < 3) fail("observables", "min_triple needs n_particles >= 3");
  if ((c.observes("min_triple") || c.params.ell)) require_non_atomic(c.params.initial_law);
  if (c.params.ell && c.params.n_particles < 3) fail("ell", "the triple cutoff needs n_particles >= 3");
  if (c.freeze_radius && !(*c.freeze_radius >= 0.0)) fail("freeze_radius", "must be >= 0");
  if (c.merge_threshold && !(*c.merge_threshold > 0.0)) fail("merge_threshold", "must be positive");
  if (c.triple_threshold && !(*c.triple_threshold > 0.0)) fail("triple_threshold", "must be positive");
  if ((c.model == Model::pair_cubed || c.model == Model::pair_angular) && !c.pair_start) {
    fail("pair_start", "required for pair models (initial difference D0 = X1 - X2)");
  }
  if (c.model == Model::pair_angular) {
    for (double chi : chis) {
      if (!(chi < 8.0 * kPi)) fail("chi", "pair_angular needs chi < 8 pi (positive radial dimension)");
    }
  }
  if (c.model == Model::regimes && c.params.n_particles < 3) fail("n_particles", "regime tables need N >= 3");
  if (c.roots_n_range && (c.roots_n_range->first < 3 || c.roots_n_range->second < c.roots_n_range->first)) {
    fail("roots_n_range", "expected 3 <= n_min <= n_max");
  }
  if (c.inequality_n_max && *c.inequality_n_max < 3) fail("inequality_n_max", "must be >= 3");
}

}  // namespace kslab
