#pragma once

#include "cityest/mapmatch.hpp"
#include "cityest/network.hpp"

#include <Eigen/SparseCore>

#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <vector>

namespace cityest {

struct ObservationRow {
  std::vector<std::size_t> segments;  // segment indices, repeats allowed
  double duration = 0.0;              // s
};

struct IntervalObservations {
  int interval_index = 0;
  std::vector<ObservationRow> rows;
};

struct SegmentTimeEstimate {
  int interval_index = 0;
  SegmentVector time;
  Eigen::VectorXi support;
};

/// Incidence counts restricted to supported segments.
struct TravelTimeSystem {
  Eigen::SparseMatrix<double> A;       // rows x columns
  Eigen::VectorXd b;                   // observed durations
  std::vector<std::size_t> columns;    // segment index of each column
};

TravelTimeSystem build_system(const IntervalObservations& obs, const RoadNetwork& net);

struct InferOptions {
  double lambda = 0.05;
  double tol = 1e-6;
  int max_iter = 50000;
};

/// Solves min ||Ax - b||^2 + lambda ||x - prior||^2 s.t. x >= free-flow time,
/// by accelerated projected gradient with backtracking and restarts.
SegmentTimeEstimate infer_times(const IntervalObservations& obs, const RoadNetwork& net, const SegmentVector& prior,
                                const InferOptions& opts = {});

/// Objective value of the regularized program at x (x over all segments).
double infer_objective(const TravelTimeSystem& sys, const SegmentVector& x, const SegmentVector& prior, double lambda);

/// Largest KKT violation at x, relative to (1 + ||b||): |g| on free
/// components, max(0, -g) on components at their lower bound.
double kkt_violation(const TravelTimeSystem& sys, const SegmentVector& x, const SegmentVector& prior,
                     const SegmentVector& lower, double lambda);

/// ||Ax - b||^2 over the system's rows.
double residual_sq(const TravelTimeSystem& sys, const SegmentVector& x);

/// Groups matched sub-trips into intervals by their midpoint time.
std::map<int, IntervalObservations> observations_from_matches(std::span<const MatchedPath> matched,
                                                              const TimeGrid& grid);

void write_estimates_csv(const RoadNetwork& net, std::span<const SegmentTimeEstimate> est, std::ostream& out);
std::vector<SegmentTimeEstimate> read_estimates_csv(std::istream& in, const RoadNetwork& net);

}  // namespace cityest
