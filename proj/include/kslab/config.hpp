#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kslab/core.hpp"

namespace kslab {

/// Which process an experiment simulates.
enum class Model {
  system,        // regularized N-particle system (optional triple cutoff)
  pair_cubed,    // Euler scheme for the cubed pair process Z
  pair_angular,  // exact radial BESQ path + angular construction
  clusters,      // sticky-merge dynamics with masses
  regimes,       // classification arithmetic only, no randomness
};

const char* to_string(Model m);
Model model_from_string(const std::string& s);

/// Per-step functionals computed for `system` runs.
inline const std::vector<std::string> kObservables = {"variance",   "first_moment", "path_moment",
                                                      "min_pair",   "min_triple",   "barycenter"};

struct Sweep {
  std::string parameter;  // "chi" or "epsilon"
  std::vector<double> values;
};

/// A run configuration: the SimParams fields plus the run-level extensions.
/// Serialized as one flat JSON object; unknown keys are rejected.
struct RunConfig {
  std::string experiment_name = "run";
  Model model = Model::system;
  SimParams params;
  std::int64_t record_every = 1;    // stride of diagnostic series
  std::int64_t snapshot_every = 0;  // stride of snapshots.csv rows; 0 = final state only
  std::vector<std::string> observables;
  std::optional<double> alpha;
  std::vector<double> observe_times;
  std::optional<double> freeze_radius;
  std::optional<double> merge_threshold;
  std::optional<double> triple_threshold;
  std::optional<Vec2> pair_start;
  std::optional<Sweep> sweep;
  std::optional<std::pair<int, int>> roots_n_range;
  std::optional<int> inequality_n_max;  // regimes: check the threshold inequality for N in [3, this]

  bool observes(const std::string& name) const;
};

nlohmann::json initial_law_to_json(const InitialLaw& law);
InitialLaw initial_law_from_json(const nlohmann::json& j, const std::string& where = "initial_law");

nlohmann::json sim_params_to_json(const SimParams& p);
/// Reads exactly the SimParams fields; throws ConfigError naming the field.
SimParams sim_params_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunConfig& c);
/// Parses and validates. Throws ConfigError with the offending field or, for
/// malformed JSON, the line and column.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Cross-field checks (model vs observables, alpha interval, ...).
void validate(const RunConfig& c);

}  // namespace kslab
