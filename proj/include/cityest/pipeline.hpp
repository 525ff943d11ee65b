#pragma once

#include "cityest/completion.hpp"
#include "cityest/eval.hpp"
#include "cityest/odestim.hpp"
#include "cityest/refine.hpp"
#include "cityest/tracegen.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <vector>

namespace cityest {

/// Stable per-stage seed: FNV-1a over the stage name, mixed with the global seed.
std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage);

/// Daily demand profile repeated over the week: interval k gets the scenario
/// whose multiplier is nearest to lo + (hi - lo) * (1 - cos(2 pi (k mod period) / period)) / 2,
/// with lo/hi the smallest and largest scenario multipliers. Ties go to the
/// earlier scenario.
std::vector<IntervalScenario> periodic_schedule(std::span<const GroundTruthScenario> scenarios, const TimeGrid& grid,
                                                int period = 24);

struct ScheduleRow {
  int interval = 0;
  int scenario = 0;
  double demand_multiplier = 1.0;
};
std::vector<ScheduleRow> schedule_rows(std::span<const IntervalScenario> schedule,
                                       std::span<const GroundTruthScenario> scenarios);
void write_schedule_csv(std::span<const ScheduleRow> rows, std::ostream& out);
std::vector<ScheduleRow> read_schedule_csv(std::istream& in, const TimeGrid& grid);

/// Probe trips for a schedule with roughly `target` trips: penetration is set
/// so the expected count is 3% above target, then a seeded subset of exactly
/// `target` is kept (all of them when fewer were drawn). Vehicle ids stay
/// those of generate_trips.
std::vector<TruthTrip> generate_trips_target(const RoadNetwork& net, std::span<const Taz> tazs,
                                             const DemandMatrix& base, std::span<const IntervalScenario> schedule,
                                             const TimeGrid& grid, const ProbeConfig& cfg, std::size_t target);

struct PipelineOptions {
  RefineOptions refine{};
  OdOptions od{};
  CompletionOptions completion{};
  std::uint64_t seed = 0;
};

struct PipelineResult {
  RefineResult refined;
  std::map<int, OdEstimate> od;   // per interval with probe observations
  TravelTimeMatrix matrix;        // odestim times in estimated intervals
  CompletionResult completed;
  std::vector<SegmentVector> flows;  // per interval, interpolated between estimated ones
};

/// OD estimation for every estimated interval, seeded per interval.
/// `on_interval` runs after each interval's estimate.
void estimate_intervals(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& seed,
                        std::span<const SegmentTimeEstimate> estimates, const OdOptions& opts,
                        std::uint64_t global_seed,
                        std::map<int, OdEstimate>& out,
                        const std::function<void(int, const OdEstimate&)>& on_interval = {});

/// Completion input: odestim times in every estimated interval, nothing elsewhere.
TravelTimeMatrix assemble_matrix(const RoadNetwork& net, const TimeGrid& grid, const std::map<int, OdEstimate>& od);

std::vector<SegmentVector> interval_flows(const std::map<int, OdEstimate>& od, const TimeGrid& grid);

/// refine -> estimate-od per interval -> complete. Fills `out` stage by stage,
/// so a thrown SolverError leaves the finished stages in place.
void run_pipeline(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& seed,
                  std::span<const GpsTrace> traces, const TimeGrid& grid, const PipelineOptions& opts,
                  PipelineResult& out);

/// Per-interval times from estimates, free-flow where an interval has none.
std::vector<SegmentVector> times_by_interval(std::span<const SegmentTimeEstimate> est, const RoadNetwork& net,
                                             const TimeGrid& grid);
std::vector<SegmentVector> times_by_interval(const TravelTimeMatrix& m, const RoadNetwork& net);

struct EvaluationInput {
  std::span<const ScheduleRow> schedule;
  const std::map<int, SegmentVector>* truth_time = nullptr;  // by scenario id
  std::span<const SegmentVector> estimate;                   // by interval
  std::span<const SegmentVector> baseline;                   // by interval
  std::span<const MatchedPath> matched;
  std::span<const MatchedPath> baseline_matched;
  std::span<const TruthTrip> trips;
};

/// Scores every scheduled interval over all segments; scenarios group the
/// intervals they drive. Headline MSE is the pooled mean, aggregate error
/// uses pooled sums.
MetricReport evaluate(const RoadNetwork& net, const EvaluationInput& in);

}  // namespace cityest
