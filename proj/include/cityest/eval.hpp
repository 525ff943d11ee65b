#pragma once

#include "cityest/refine.hpp"
#include "cityest/tracegen.hpp"

#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace cityest {

/// Mean over all segments of (est - truth)^2.
double mse(const SegmentVector& est, const SegmentVector& truth);

/// 100 * (baseline - ours) / baseline.
double gain_pct(double mse_ours, double mse_baseline);

/// 100 * |sum est - sum truth| / sum truth.
double aggregate_error_pct(const SegmentVector& est, const SegmentVector& truth);

struct AccuracyReport {
  double accuracy_pct = 0.0;          // trip mean
  std::vector<double> per_trip_pct;   // in truth vehicle order, scored trips only
  int scored = 0;
  int missing_matched = 0;            // truth trips with no matched path
  int missing_truth = 0;              // matched vehicles with no truth trip
};

/// Length-weighted Jaccard overlap of segment sets per trip. A vehicle's
/// matched pieces are pooled.
AccuracyReport matching_accuracy(std::span<const MatchedPath> matched, std::span<const TruthTrip> truth,
                                 const RoadNetwork& net);
double matching_accuracy_pct(std::span<const MatchedPath> matched, std::span<const TruthTrip> truth,
                             const RoadNetwork& net);

/// Single match-then-infer pass with geometric matching only.
RefineResult run_baseline(std::span<const GpsTrace> traces, const RoadNetwork& net, const TimeGrid& grid,
                          RefineOptions opts = {});

/// Per interval, mean flow / capacity over the segments of `filter` (all
/// segments when unset). `flows` has one vector per interval.
std::vector<double> voc_series(std::span<const SegmentVector> flows, const RoadNetwork& net, const TimeGrid& grid,
                               std::optional<RoadClass> filter = std::nullopt);

struct Autocorrelation {
  double value = 0.0;
  bool defined = false;  // false for a constant series
};

/// Pearson correlation of series[0, n - lag) with series[lag, n).
Autocorrelation lag_autocorrelation(std::span<const double> series, int lag);

/// Fills missing intervals by linear interpolation between the nearest known
/// intervals, wrapping around the week.
std::vector<SegmentVector> interpolate_intervals(const std::map<int, SegmentVector>& known, int interval_count);

struct ScenarioMetrics {
  int scenario = 0;
  double demand_multiplier = 1.0;
  double mse = 0.0;
  double baseline_mse = 0.0;
  double gain_pct = 0.0;
  double aggregate_error_pct = 0.0;
  double baseline_aggregate_error_pct = 0.0;
};

struct MetricReport {
  double mse = 0.0;
  double baseline_mse = 0.0;
  double gain_pct = 0.0;
  double aggregate_error_pct = 0.0;
  double baseline_aggregate_error_pct = 0.0;
  double matching_accuracy_pct = 0.0;
  double baseline_matching_accuracy_pct = 0.0;
  int trips_scored = 0;
  int trips_excluded = 0;
  std::vector<ScenarioMetrics> scenarios;
  /// Means of the per-scenario values.
  double mean_scenario_mse = 0.0;
  double mean_scenario_gain_pct = 0.0;
  double mean_scenario_aggregate_error_pct = 0.0;
};

/// Pools per-interval estimates and truths into the headline metrics; fills
/// the scenario means from `report.scenarios`.
void summarize(MetricReport& report);

void write_report_json(const MetricReport& report, std::ostream& out);

/// Rows for every interval: all segments, then each road class present.
void write_voc_csv(std::span<const SegmentVector> flows, const RoadNetwork& net, const TimeGrid& grid,
                   std::ostream& out);

/// VOC bucket index for [0,0.4), [0.4,0.7), [0.7,0.9), [0.9,inf).
int voc_bucket(double voc);

void write_geojson(const RoadNetwork& net, const SegmentVector& flow, std::ostream& out);

}  // namespace cityest
