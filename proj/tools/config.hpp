#pragma once

#include "cityest/fixtures.hpp"
#include "cityest/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cityest::cli {

namespace fs = std::filesystem;

struct Paths {
  std::optional<fs::path> osm, network, taz, demand, scenarios, schedule, traces, trips, matched, estimates,
      baseline_estimates, baseline_matched, od_dir, matrix, completed;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = machine parallelism
  fs::path out_dir = ".";
  Paths paths;
  TimeGrid grid;
  MatchParams match;
  InferOptions infer;
  RefineOptions refine;
  SpsaParams spsa;
  AssignmentOptions ue{Objective::user_equilibrium, {}, 1e-4, 1000};
  CompletionOptions completion;
  ProbeConfig probe;
  std::optional<std::size_t> target_traces;
  GridOptions grid_fixture;
  double deterrence_scale = 1000.0;
  double total_trips = 1000.0;
  std::vector<double> multipliers = default_multipliers();
  int schedule_period = 24;
  AssignmentOptions scenario_assignment{Objective::system_optimum, {}, 1e-5, 2000};

  unsigned worker_count() const;
  void validate() const;
};

/// Applies "section.key=value" overrides (value parsed as JSON, else taken
/// as a string) to a config document.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Builds a config from a JSON document. Unknown keys are rejected. Relative
/// paths resolve against `base_dir`.
PipelineConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir);

nlohmann::json read_config_file(const fs::path& path);

}  // namespace cityest::cli
