#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cityest {

using NodeId = std::int64_t;
using SegmentId = std::int64_t;
using TazId = std::int64_t;

/// Per-segment quantity aligned with RoadNetwork::segments() order.
using SegmentVector = Eigen::VectorXd;

inline constexpr double kEarthRadiusM = 6371008.8;
inline constexpr double kSecondsPerWeek = 604800.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

/// Great-circle distance in meters.
double haversine(LatLon a, LatLon b);

/// Meters per degree of latitude / longitude at the given latitude (spherical).
struct MetersPerDegree {
  double lat;
  double lon;
};
MetersPerDegree meters_per_degree(double lat);

enum class RoadClass : std::uint8_t { motorway, trunk, primary, secondary, tertiary, residential, other };
inline constexpr std::size_t kRoadClassCount = 7;

std::string_view to_string(RoadClass c);
RoadClass road_class_from_string(std::string_view s);

struct Node {
  NodeId id = 0;
  double lat = 0.0;
  double lon = 0.0;

  LatLon position() const { return {lat, lon}; }
};

struct Segment {
  SegmentId id = 0;
  NodeId from_node = 0;
  NodeId to_node = 0;
  double length = 0.0;           // m
  double free_flow_speed = 0.0;  // m/s
  double capacity = 0.0;         // veh/h
  RoadClass road_class = RoadClass::other;

  double free_flow_time() const { return length / free_flow_speed; }
};

struct Taz {
  TazId id = 0;
  NodeId centroid_node = 0;
  std::string name;
};

/// Weekly discretization; interval_seconds * interval_count spans one week.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double interval_seconds, int interval_count);

  double interval_seconds() const { return interval_seconds_; }
  int interval_count() const { return interval_count_; }
  /// Interval containing the timestamp (seconds since week start), wrapped into the week.
  int interval_of(double timestamp) const;
  double interval_start(int interval) const { return interval * interval_seconds_; }

 private:
  double interval_seconds_ = 3600.0;
  int interval_count_ = 168;
};

/// Immutable directed road graph. Segments are kept sorted by id; the
/// position of a segment in that order is its "index" used by SegmentVector.
class RoadNetwork {
 public:
  RoadNetwork() = default;
  RoadNetwork(std::vector<Node> nodes, std::vector<Segment> segments);

  std::span<const Node> nodes() const { return nodes_; }
  std::span<const Segment> segments() const { return segments_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t segment_count() const { return segments_.size(); }

  const Node& node(std::size_t index) const { return nodes_[index]; }
  const Segment& segment(std::size_t index) const { return segments_[index]; }

  std::optional<std::size_t> find_node(NodeId id) const;
  std::optional<std::size_t> find_segment(SegmentId id) const;
  /// Throws InputError for unknown ids.
  std::size_t node_index(NodeId id) const;
  std::size_t segment_index(SegmentId id) const;

  std::size_t from_index(std::size_t seg) const { return seg_from_[seg]; }
  std::size_t to_index(std::size_t seg) const { return seg_to_[seg]; }
  /// Outgoing segment indices of a node index, ascending by segment id.
  std::span<const std::size_t> out_segments(std::size_t node) const { return out_[node]; }

  SegmentVector free_flow_times() const;
  SegmentVector capacities() const;
  SegmentVector lengths() const;

  /// Point at `offset` meters along the straight segment geometry.
  LatLon point_on(std::size_t seg, double offset) const;

  bool operator==(const RoadNetwork& other) const;

 private:
  std::vector<Node> nodes_;
  std::vector<Segment> segments_;
  std::unordered_map<NodeId, std::size_t> node_pos_;
  std::unordered_map<SegmentId, std::size_t> seg_pos_;
  std::vector<std::size_t> seg_from_, seg_to_;
  std::vector<std::vector<std::size_t>> out_;
};

/// Default free-flow speed (m/s) and capacity (veh/h) per road class.
struct ClassDefaults {
  std::array<double, kRoadClassCount> speed_mps{27.8, 22.2, 16.7, 13.9, 11.1, 8.3, 8.3};
  std::array<double, kRoadClassCount> capacity_vph{2000, 1800, 1500, 1200, 1000, 800, 600};

  double speed(RoadClass c) const { return speed_mps[static_cast<std::size_t>(c)]; }
  double capacity(RoadClass c) const { return capacity_vph[static_cast<std::size_t>(c)]; }
};

struct OsmImport {
  RoadNetwork network;
  std::vector<std::string> warnings;
};

/// Reads the node/way/tag subset of OSM XML. Ways with a highway tag become
/// directed segments between each consecutive node pair.
OsmImport import_osm(std::istream& xml, const ClassDefaults& defaults = {});

/// Internal JSON network format.
RoadNetwork read_network_json(std::istream& in);
void write_network_json(const RoadNetwork& net, std::ostream& out);

std::vector<Taz> read_taz_csv(std::istream& in, const RoadNetwork& net);
void write_taz_csv(std::span<const Taz> tazs, std::ostream& out);

}  // namespace cityest
