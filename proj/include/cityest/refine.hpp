#pragma once

#include "cityest/mapmatch.hpp"
#include "cityest/ttinfer.hpp"

#include <ostream>
#include <span>
#include <vector>

namespace cityest {

struct RefineOptions {
  MatchParams match{};
  InferOptions infer{};
  int max_iters = 10;
  double stop_tol = 1e-3;
  double damping = 1.0;  // weight of the new estimate when mixing with the previous one
  bool keep_history = false;
  unsigned threads = 1;
};

struct IterationRecord {
  int iteration = 0;
  double residual = 0.0;         // sum over intervals of ||Ax - b||^2 after inference
  double residual_before = 0.0;  // same systems, previous times
  double viterbi_score = 0.0;    // sum of piece log scores after matching
  /// Over pieces matched identically in the previous iteration: their new
  /// scores and the previous state sequences' scores under the same times.
  double viterbi_comparable = 0.0;
  double viterbi_previous = 0.0;
  int changed_paths = 0;
  double max_rel_change = 0.0;
};

struct RefineResult {
  std::vector<MatchedPath> matched;                // sorted by (vehicle_id, piece)
  std::vector<SegmentTimeEstimate> estimates;      // one per observed interval, ascending
  std::vector<IterationRecord> diagnostics;
  std::vector<std::vector<SegmentTimeEstimate>> history;  // per iteration, when requested
  std::vector<std::string> warnings;

  /// Estimate for an interval, or nullptr when it had no observations.
  const SegmentTimeEstimate* estimate_for(int interval) const;
};

/// Alternates map-matching under the current times with travel-time
/// inference under the current matches. Iteration 0 matches at free-flow.
RefineResult refine(std::span<const GpsTrace> traces, const RoadNetwork& net, const TimeGrid& grid,
                    const RefineOptions& opts);

void write_diagnostics_csv(std::span<const IterationRecord> diag, std::ostream& out);

}  // namespace cityest
