#pragma once

#include "cityest/network.hpp"

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cityest {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Segments x weekly intervals, seconds. Rows follow segment_ids.
struct TravelTimeMatrix {
  Eigen::MatrixXd values;
  BoolMatrix mask;  // true = observed
  std::vector<SegmentId> segment_ids;
  TimeGrid grid;

  /// All segments of the network, nothing observed.
  static TravelTimeMatrix empty(const RoadNetwork& net, const TimeGrid& grid);
};

struct CompletionOptions {
  std::optional<double> svt_threshold;  // default 0.5 * sqrt(rows * cols) * median(observed)
  double step = 1.2;                     // scaled by 1 / observed fraction
  int max_iter = 500;
  double tol = 1e-4;

  void validate() const;
};

struct CompletionResult {
  TravelTimeMatrix matrix;              // fully observed; mask still marks measured entries
  std::vector<bool> fallback_rows;      // rows with nothing observed, filled at free-flow
  double threshold = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Singular-value thresholding with observed-entry projection. `lower` holds
/// each row's free-flow time; outputs are clamped to it.
CompletionResult complete(const TravelTimeMatrix& mat, const Eigen::VectorXd& lower,
                          const CompletionOptions& opts = {});

/// Free-flow times in the row order of `mat`.
Eigen::VectorXd row_lower_bounds(const TravelTimeMatrix& mat, const RoadNetwork& net);

TravelTimeMatrix read_matrix_csv(std::istream& in, const RoadNetwork& net, const TimeGrid& grid,
                                 const std::string& source = "<stream>");
void write_matrix_csv(const TravelTimeMatrix& mat, std::ostream& out);
void write_completed_csv(const CompletionResult& r, std::ostream& out);
/// Completed file back to a matrix; the mask marks entries with imputed = 0.
TravelTimeMatrix read_completed_csv(std::istream& in, const RoadNetwork& net, const TimeGrid& grid,
                                    const std::string& source = "<stream>");

}  // namespace cityest
