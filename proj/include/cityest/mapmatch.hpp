#pragma once

#include "cityest/network.hpp"
#include "cityest/routing.hpp"
#include "cityest/tracegen.hpp"

#include <Eigen/Core>

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace cityest {

struct MatchParams {
  double gps_sigma = 10.0;        // m
  double nk_beta = 200.0;         // m
  double tt_tau = 0.5;            // weight of the relative travel-time residual
  double radius = 50.0;           // m
  int max_candidates = 8;
  double gap_factor = 10.0;       // split when dt > gap_factor * median sampling period
  double backtrack_tolerance = 5.0;  // m of apparent backward motion treated as standing still

  void validate() const;
};

/// Gaussian log-density of a GPS offset.
double emission_logp(double distance, double gps_sigma);

/// Geometric residual (route vs great-circle) plus the relative travel-time
/// residual weighted by tt_tau.
double transition_logp(double route_len, double gc_dist, double route_tt, double obs_dt, const MatchParams& params);

/// HMM lattice: emission scores per layer and transition scores between
/// consecutive layers (rows: states of layer k, cols: states of layer k+1).
/// -inf marks an impossible transition.
struct Lattice {
  std::vector<Eigen::VectorXd> emission;
  std::vector<Eigen::MatrixXd> transition;

  std::size_t layers() const { return emission.size(); }
};

struct ViterbiResult {
  std::vector<int> states;
  double score = -std::numeric_limits<double>::infinity();
  bool feasible() const { return std::isfinite(score); }
};

/// Max-score state sequence; among equal scores, the lexicographically
/// smallest. Scores accumulate as e0 + t01 + e1 + t12 + e2 + ...
ViterbiResult viterbi(const Lattice& lattice);
/// Score of a given state sequence, summed in the same order as viterbi().
double path_score(const Lattice& lattice, std::span<const int> states);

struct PointMatch {
  std::size_t segment;  // segment index
  double offset;        // m
};

/// One contiguous matched piece of a trace.
struct MatchedPath {
  std::int64_t vehicle_id = 0;
  int piece = 0;
  std::vector<std::size_t> point_indices;  // into the source trace
  std::vector<PointMatch> points;          // per matched point
  std::vector<int> states;                 // chosen candidate per point
  std::vector<std::size_t> point_path_pos; // path position holding each point
  std::vector<std::size_t> path;           // connected segment indices
  std::vector<double> entry_times;         // per path position
  double exit_time = 0.0;                  // leaving the last path segment
  double log_score = 0.0;
  std::optional<double> previous_states_score;  // set when rescoring a prior match
};

struct MatchResult {
  std::vector<MatchedPath> pieces;
  std::vector<std::string> diagnostics;
};

/// Reusable matcher over one network (holds the spatial index).
class MapMatcher {
 public:
  explicit MapMatcher(const RoadNetwork& net);

  /// Viterbi decoding over the candidate lattice. Inter-candidate routes are
  /// least-time paths under `segment_times`. When `previous` is supplied, each
  /// new piece covering the same points as a previous piece also records the
  /// previous state sequence's score under the current times.
  MatchResult match(const GpsTrace& trace, const SegmentVector& segment_times, const MatchParams& params,
                    std::span<const MatchedPath> previous = {}) const;

  const RoadNetwork& network() const { return *net_; }

 private:
  const RoadNetwork* net_;
  SegmentIndex index_;
};

MatchResult match_trace(const RoadNetwork& net, const GpsTrace& trace, const SegmentVector& segment_times,
                        const MatchParams& params);

/// Integer-count sub-trips of a matched piece: segments between the first
/// segment boundaries following consecutive GPS points, with interpolated
/// durations. Returns (segment indices, duration, midpoint time) tuples.
struct SubTrip {
  std::vector<std::size_t> segments;
  double duration = 0.0;
  double midpoint = 0.0;
};
std::vector<SubTrip> sub_trips(const MatchedPath& m);

/// Restores point data on pieces read from a matched file: each trace point
/// goes to the piece whose time span holds it, at the path position entered
/// last before its timestamp, projected onto that segment.
void attach_points(const RoadNetwork& net, std::span<const GpsTrace> traces, std::vector<MatchedPath>& matched);

void write_matched_csv(const RoadNetwork& net, std::span<const MatchedPath> matched, std::ostream& out);
std::vector<MatchedPath> read_matched_csv(std::istream& in, const RoadNetwork& net);

}  // namespace cityest
