#pragma once

#include "cityest/network.hpp"

#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace cityest {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kNoSegment = static_cast<std::size_t>(-1);

struct Path {
  std::vector<std::size_t> segments;  // segment indices, in travel order
  double cost = 0.0;
};

/// Single-source Dijkstra tree over node indices. At equal cost the incoming
/// segment with the smaller id wins, which makes every path deterministic.
class ShortestPathTree {
 public:
  struct Limits {
    double max_cost = kUnreachable;
    std::span<const std::size_t> targets = {};  // stop once all are settled
  };

  ShortestPathTree(const RoadNetwork& net, std::size_t origin, const SegmentVector& weight, Limits limits);
  ShortestPathTree(const RoadNetwork& net, std::size_t origin, const SegmentVector& weight)
      : ShortestPathTree(net, origin, weight, Limits{}) {}

  std::size_t origin() const { return origin_; }
  double cost(std::size_t node) const { return dist_[node]; }
  bool reachable(std::size_t node) const { return dist_[node] < kUnreachable; }
  std::size_t incoming(std::size_t node) const { return pred_[node]; }
  /// Segment indices from the origin to `node`; empty for the origin itself.
  std::vector<std::size_t> path_to(std::size_t node) const;

 private:
  const RoadNetwork* net_;
  std::size_t origin_;
  std::vector<double> dist_;
  std::vector<std::size_t> pred_;
};

/// Minimum-weight path between two nodes (by id), or nullopt when unreachable.
std::optional<Path> shortest_path(const RoadNetwork& net, NodeId origin, NodeId dest, const SegmentVector& weight);

struct Candidate {
  std::size_t segment;  // segment index
  double offset;        // m along the segment
  double distance;      // m from the query point
};

/// Uniform-grid bucket index over segment bounding boxes in a local planar frame.
class SegmentIndex {
 public:
  explicit SegmentIndex(const RoadNetwork& net, double cell_m = 150.0);

  /// Up to k perpendicular projections within radius, ascending by distance
  /// then segment id.
  std::vector<Candidate> candidates(LatLon point, double radius, int k) const;

 private:
  const RoadNetwork* net_;
  double lat0_, lon0_;
  MetersPerDegree scale_;
  double cell_;
  long nx_ = 0, ny_ = 0;
  double min_x_ = 0, min_y_ = 0;
  std::vector<std::vector<std::size_t>> cells_;
};

/// Brute-force variant over all segments; same contract as SegmentIndex::candidates.
std::vector<Candidate> project_to_candidates(const RoadNetwork& net, LatLon point, double radius, int k);

/// Projection of a point onto one segment's straight geometry (clamped).
Candidate project_onto(const RoadNetwork& net, std::size_t seg, LatLon point);

}  // namespace cityest
