#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "kslab/config.hpp"
#include "kslab/experiments.hpp"

using namespace kslab;
using nlohmann::json;

namespace {

const char* kMinimal = R"({
  "experiment_name": "tiny",
  "n_particles": 4,
  "chi": 1.0,
  "dt": 0.01,
  "horizon": 0.01,
  "seed": 3,
  "initial_law": {"kind": "standard_gaussian"},
  "replicas": 2,
  "observables": ["variance"]
})";

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string with(const std::string& key, const json& value) {
  auto j = json::parse(kMinimal);
  j[key] = value;
  return j.dump();
}

}  // namespace

TEST_CASE("every preset round-trips through the parser") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    const auto c = preset(name);
    const auto text = to_json(c).dump(2);
    const auto back = parse_run_config(text);
    CHECK(to_json(back).dump(2) == text);
    CHECK(back.experiment_name == name);
  }
}

TEST_CASE("preset names and contents") {
  const std::vector<std::string> required{"variance_slope",  "pair_bessel",         "fund_bound",
                                          "triple_dichotomy", "pair_collision",     "cluster_coalescence",
                                          "angular_uniformity", "regime_table"};
  for (const auto& r : required) {
    CHECK(std::find(preset_names().begin(), preset_names().end(), r) != preset_names().end());
  }
  const auto rt = preset("regime_table");
  CHECK(rt.params.n_particles == 5);
  REQUIRE(rt.sweep);
  bool has = false;
  for (double v : rt.sweep->values) has = has || std::abs(v - 6.5 * kPi) < 1e-12;
  CHECK(has);

  const auto vs = preset("variance_slope");
  CHECK(vs.params.n_particles == 32);
  CHECK(vs.params.chi == doctest::Approx(4.0 * kPi));
  CHECK(vs.params.dt == 1e-4);
  CHECK(vs.params.horizon == 1.0);
  CHECK(vs.params.replicas == 500);
}

TEST_CASE("unknown preset lists the available names") {
  try {
    preset("nope");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& n : preset_names()) CHECK(msg.find(n) != std::string::npos);
  }
}

TEST_CASE("minimal config parses") {
  const auto c = parse_run_config(kMinimal);
  CHECK(c.params.n_particles == 4);
  CHECK(c.model == Model::system);
  CHECK(c.observes("variance"));
  CHECK_FALSE(c.observes("min_pair"));
}

TEST_CASE("unknown fields are rejected by name") {
  CHECK(error_of(with("chii", 2.0)).find("field 'chii'") != std::string::npos);
  auto j = json::parse(kMinimal);
  j["initial_law"]["radius"] = 1.0;
  CHECK(error_of(j.dump()).find("initial_law.radius") != std::string::npos);
}

TEST_CASE("malformed JSON reports line and column") {
  const std::string text = "{\n  \"chi\": 1.0,\n  \"dt\": ,\n}";
  const auto msg = error_of(text);
  CHECK(msg.find("malformed JSON at line 3, column 9") != std::string::npos);
}

TEST_CASE("field errors name the field") {
  CHECK(error_of(with("dt", -1.0)).find("'dt'") != std::string::npos);
  CHECK(error_of(with("n_particles", 1.5)).find("'n_particles'") != std::string::npos);
  CHECK(error_of(with("model", "bogus")).find("'model'") != std::string::npos);
  CHECK(error_of(with("observables", json::array({"spin"}))).find("'observables'") != std::string::npos);
  CHECK(error_of(with("record_every", 0)).find("'record_every'") != std::string::npos);
  CHECK(error_of(with("epsilon", 2.0)).find("'epsilon'") != std::string::npos);
  CHECK(error_of(with("sweep", json{{"parameter", "dt"}, {"values", {1e-3}}})).find("'sweep") != std::string::npos);
}

TEST_CASE("alpha outside the admissible interval names the constraint") {
  auto j = json::parse(kMinimal);
  j["observables"] = {"path_moment"};
  j["n_particles"] = 8;
  j["chi"] = kPi;
  j["alpha"] = 0.3;  // interval is (7/16, 1)
  const auto msg = error_of(j.dump());
  CHECK(msg.find("'alpha'") != std::string::npos);
  CHECK(msg.find("(N-1) chi / (2 pi N) < alpha < 1") != std::string::npos);
  j["alpha"] = 1.0;
  CHECK(error_of(j.dump()).find("'alpha'") != std::string::npos);
  j["alpha"] = 0.75;
  CHECK(error_of(j.dump()).empty());
  j.erase("alpha");
  CHECK(error_of(j.dump()).find("'alpha'") != std::string::npos);
}

TEST_CASE("cross-field checks") {
  auto j = json::parse(kMinimal);
  j["model"] = "pair_cubed";
  CHECK(error_of(j.dump()).find("'observables'") != std::string::npos);
  j.erase("observables");
  CHECK(error_of(j.dump()).find("'pair_start'") != std::string::npos);
  j["pair_start"] = {1.0, 0.0};
  CHECK(error_of(j.dump()).empty());

  auto k = json::parse(kMinimal);
  k["observables"] = {"first_moment"};
  CHECK_FALSE(error_of(k.dump()).empty());
  k["observe_times"] = {0.005, 0.02};
  CHECK(error_of(k.dump()).find("'observe_times'") != std::string::npos);
  k["observe_times"] = {0.005, 0.01};
  CHECK(error_of(k.dump()).empty());

  auto m = json::parse(kMinimal);
  m["n_particles"] = 2;
  m["observables"] = {"min_triple"};
  CHECK_FALSE(error_of(m.dump()).empty());

  auto a = json::parse(kMinimal);
  a["model"] = "pair_angular";
  a.erase("observables");
  a["pair_start"] = {0.0, 0.0};
  a["chi"] = 8.0 * kPi;
  CHECK_FALSE(error_of(a.dump()).empty());
  a["chi"] = 4.0 * kPi;
  CHECK(error_of(a.dump()).empty());
}

TEST_CASE("initial laws round-trip") {
  auto j = json::parse(kMinimal);
  j["initial_law"] = json::parse(R"({"kind": "product_of", "split": 2,
    "first": {"kind": "point_cloud", "points": [[0, 0], [1, 0]]},
    "second": {"kind": "uniform_disk", "radius": 0.5}})");
  const auto c = parse_run_config(j.dump());
  CHECK(to_json(c)["initial_law"] == j["initial_law"]);
  j["initial_law"]["first"]["points"] = json::parse("[[0, 0], [0]]");
  CHECK(error_of(j.dump()).find("points[1]") != std::string::npos);
}
