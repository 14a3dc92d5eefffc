#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "kslab/config.hpp"
#include "kslab/diagnostics.hpp"

namespace kslab {

/// Names accepted by preset(), in acceptance order.
const std::vector<std::string>& preset_names();

/// The exact configuration used by the matching acceptance check. Throws
/// ConfigError listing the available names.
RunConfig preset(const std::string& name);

struct RunOptions {
  int jobs = 1;
  bool keep_snapshots = true;
};

struct RunResult {
  RunConfig config;
  DiagnosticsReport report;
  /// One per (sweep point, replica), sweep-point major.
  std::vector<std::uint64_t> noise_checksums;
  std::string snapshots_csv;
  /// One message per replica that blew up; those replicas are left out of the report.
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

/// Runs every replica (and sweep point) of the configuration on `jobs` worker
/// threads and aggregates in replica order, so the result does not depend on
/// the thread count.
RunResult run_experiment(const RunConfig& config, const RunOptions& options = {});

struct CriterionOutcome {
  std::string check;
  bool pass = false;
  std::string detail;
};

/// Suites share the preset names. Only the scalars of the report are used, so a
/// report read back from diagnostics.csv gives the same verdicts.
std::vector<CriterionOutcome> evaluate_suite(const std::string& suite, const DiagnosticsReport& report);

std::string tool_version();
/// UTC, ISO 8601 to the second.
std::string utc_timestamp();

nlohmann::json make_manifest(const RunResult& result, const std::string& started_at, const std::string& finished_at);

/// Writes manifest.json, snapshots.csv, diagnostics.csv and series_*.csv into
/// `dir` (created if needed). A failed run also gets a FAILED marker file.
void write_run_outputs(const std::filesystem::path& dir, const RunResult& result, const std::string& started_at,
                       const std::string& finished_at);

}  // namespace kslab
