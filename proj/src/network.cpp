#include "cityest/network.hpp"

#include "cityest/csv.hpp"
#include "cityest/errors.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace cityest {

double haversine(LatLon a, LatLon b) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * deg;
  const double dlon = (b.lon - a.lon) * deg;
  const double s1 = std::sin(dlat / 2);
  const double s2 = std::sin(dlon / 2);
  const double h = s1 * s1 + std::cos(a.lat * deg) * std::cos(b.lat * deg) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

MetersPerDegree meters_per_degree(double lat) {
  constexpr double per_deg = kEarthRadiusM * std::numbers::pi / 180.0;
  return {per_deg, per_deg * std::cos(lat * std::numbers::pi / 180.0)};
}

namespace {
constexpr std::array<std::string_view, kRoadClassCount> kClassNames{
    "motorway", "trunk", "primary", "secondary", "tertiary", "residential", "other"};
}

std::string_view to_string(RoadClass c) { return kClassNames[static_cast<std::size_t>(c)]; }

RoadClass road_class_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == s) return static_cast<RoadClass>(i);
  }
  throw InputError("unknown road class '" + std::string(s) + "'");
}

TimeGrid::TimeGrid(double interval_seconds, int interval_count)
    : interval_seconds_(interval_seconds), interval_count_(interval_count) {
  if (!(interval_seconds > 0) || interval_count < 1 ||
      std::abs(interval_seconds * interval_count - kSecondsPerWeek) > 1e-6) {
    throw ConfigError("time grid must span one week (604800 s)");
  }
}

int TimeGrid::interval_of(double timestamp) const {
  double t = std::fmod(timestamp, kSecondsPerWeek);
  if (t < 0) t += kSecondsPerWeek;
  auto k = static_cast<int>(std::floor(t / interval_seconds_));
  return std::clamp(k, 0, interval_count_ - 1);
}

RoadNetwork::RoadNetwork(std::vector<Node> nodes, std::vector<Segment> segments)
    : nodes_(std::move(nodes)), segments_(std::move(segments)) {
  std::sort(nodes_.begin(), nodes_.end(), [](const Node& a, const Node& b) { return a.id < b.id; });
  std::sort(segments_.begin(), segments_.end(), [](const Segment& a, const Segment& b) { return a.id < b.id; });

  node_pos_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (!(n.lat >= -90 && n.lat <= 90 && n.lon >= -180 && n.lon <= 180)) {
      throw InputError("node " + std::to_string(n.id) + " outside WGS84 range");
    }
    if (!node_pos_.emplace(n.id, i).second) throw InputError("duplicate node id " + std::to_string(n.id));
  }

  seg_pos_.reserve(segments_.size());
  seg_from_.resize(segments_.size());
  seg_to_.resize(segments_.size());
  out_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    const std::string sid = std::to_string(s.id);
    if (!seg_pos_.emplace(s.id, i).second) throw InputError("duplicate segment id " + sid);
    if (s.from_node == s.to_node) throw InputError("segment " + sid + " is a self loop");
    auto f = node_pos_.find(s.from_node);
    auto t = node_pos_.find(s.to_node);
    if (f == node_pos_.end() || t == node_pos_.end()) throw InputError("segment " + sid + " references a missing node");
    if (!(s.length > 0) || !(s.free_flow_speed > 0) || !(s.capacity > 0) || !std::isfinite(s.length) ||
        !std::isfinite(s.free_flow_speed) || !std::isfinite(s.capacity)) {
      throw InputError("segment " + sid + " needs positive length, speed and capacity");
    }
    seg_from_[i] = f->second;
    seg_to_[i] = t->second;
    out_[f->second].push_back(i);  // ascending id, since segments_ is sorted
  }
}

std::optional<std::size_t> RoadNetwork::find_node(NodeId id) const {
  auto it = node_pos_.find(id);
  if (it == node_pos_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> RoadNetwork::find_segment(SegmentId id) const {
  auto it = seg_pos_.find(id);
  if (it == seg_pos_.end()) return std::nullopt;
  return it->second;
}

std::size_t RoadNetwork::node_index(NodeId id) const {
  if (auto i = find_node(id)) return *i;
  throw InputError("unknown node id " + std::to_string(id));
}

std::size_t RoadNetwork::segment_index(SegmentId id) const {
  if (auto i = find_segment(id)) return *i;
  throw InputError("unknown segment id " + std::to_string(id));
}

SegmentVector RoadNetwork::free_flow_times() const {
  SegmentVector v(segments_.size());
  for (std::size_t i = 0; i < segments_.size(); ++i) v[i] = segments_[i].free_flow_time();
  return v;
}

SegmentVector RoadNetwork::capacities() const {
  SegmentVector v(segments_.size());
  for (std::size_t i = 0; i < segments_.size(); ++i) v[i] = segments_[i].capacity;
  return v;
}

SegmentVector RoadNetwork::lengths() const {
  SegmentVector v(segments_.size());
  for (std::size_t i = 0; i < segments_.size(); ++i) v[i] = segments_[i].length;
  return v;
}

LatLon RoadNetwork::point_on(std::size_t seg, double offset) const {
  const auto& a = nodes_[seg_from_[seg]];
  const auto& b = nodes_[seg_to_[seg]];
  const double f = std::clamp(offset / segments_[seg].length, 0.0, 1.0);
  return {a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon)};
}

bool RoadNetwork::operator==(const RoadNetwork& other) const {
  auto node_eq = [](const Node& a, const Node& b) { return a.id == b.id && a.lat == b.lat && a.lon == b.lon; };
  auto seg_eq = [](const Segment& a, const Segment& b) {
    return a.id == b.id && a.from_node == b.from_node && a.to_node == b.to_node && a.length == b.length &&
           a.free_flow_speed == b.free_flow_speed && a.capacity == b.capacity && a.road_class == b.road_class;
  };
  return std::equal(nodes_.begin(), nodes_.end(), other.nodes_.begin(), other.nodes_.end(), node_eq) &&
         std::equal(segments_.begin(), segments_.end(), other.segments_.begin(), other.segments_.end(), seg_eq);
}

// ---------------------------------------------------------------------------
// OSM XML

namespace {

RoadClass classify_highway(std::string_view tag) {
  auto base = tag;
  if (auto p = base.find("_link"); p != std::string_view::npos) base = base.substr(0, p);
  if (base == "motorway") return RoadClass::motorway;
  if (base == "trunk") return RoadClass::trunk;
  if (base == "primary") return RoadClass::primary;
  if (base == "secondary") return RoadClass::secondary;
  if (base == "tertiary") return RoadClass::tertiary;
  if (base == "residential" || base == "living_street" || base == "unclassified") return RoadClass::residential;
  return RoadClass::other;
}

}  // namespace

OsmImport import_osm(std::istream& xml, const ClassDefaults& defaults) {
  namespace pt = boost::property_tree;
  pt::ptree doc;
  try {
    pt::read_xml(xml, doc);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("malformed OSM XML: " + e.message(), static_cast<long>(e.line()));
  }
  auto root = doc.get_child_optional("osm");
  if (!root) throw ParseError("missing <osm> root element", 1);

  std::map<NodeId, LatLon> all_nodes;
  struct Way {
    std::int64_t id;
    std::vector<NodeId> refs;
    std::string highway;
    std::string oneway;
  };
  std::vector<Way> ways;

  for (const auto& [name, child] : *root) {
    if (name == "node") {
      auto id = child.get<NodeId>("<xmlattr>.id");
      all_nodes[id] = {child.get<double>("<xmlattr>.lat"), child.get<double>("<xmlattr>.lon")};
    } else if (name == "way") {
      Way w{child.get<std::int64_t>("<xmlattr>.id", 0), {}, {}, {}};
      for (const auto& [wname, wchild] : child) {
        if (wname == "nd") {
          w.refs.push_back(wchild.get<NodeId>("<xmlattr>.ref"));
        } else if (wname == "tag") {
          auto k = wchild.get<std::string>("<xmlattr>.k", "");
          auto v = wchild.get<std::string>("<xmlattr>.v", "");
          if (k == "highway") w.highway = v;
          if (k == "oneway") w.oneway = v;
        }
      }
      if (!w.highway.empty()) ways.push_back(std::move(w));
    }
  }

  OsmImport result;
  std::map<NodeId, LatLon> used;
  std::vector<Segment> segments;
  SegmentId next_id = 1;
  for (const auto& w : ways) {
    bool missing = false;
    for (auto r : w.refs) missing |= !all_nodes.contains(r);
    if (missing) {
      result.warnings.push_back("way " + std::to_string(w.id) + " references a missing node; skipped");
      continue;
    }
    if (w.refs.size() < 2) {
      result.warnings.push_back("way " + std::to_string(w.id) + " has fewer than two nodes; skipped");
      continue;
    }
    const RoadClass cls = classify_highway(w.highway);
    const bool forward = w.oneway != "-1" && w.oneway != "reverse";
    const bool backward = !(w.oneway == "yes" || w.oneway == "true" || w.oneway == "1");
    for (std::size_t i = 0; i + 1 < w.refs.size(); ++i) {
      NodeId a = w.refs[i], b = w.refs[i + 1];
      if (a == b) continue;
      const double len = haversine(all_nodes[a], all_nodes[b]);
      if (!(len > 0)) {
        result.warnings.push_back("way " + std::to_string(w.id) + " has coincident nodes; pair skipped");
        continue;
      }
      used[a] = all_nodes[a];
      used[b] = all_nodes[b];
      auto add = [&](NodeId from, NodeId to) {
        segments.push_back({next_id++, from, to, len, defaults.speed(cls), defaults.capacity(cls), cls});
      };
      if (forward) add(a, b);
      if (backward) add(b, a);
    }
  }

  std::vector<Node> nodes;
  nodes.reserve(used.size());
  for (const auto& [id, p] : used) nodes.push_back({id, p.lat, p.lon});
  result.network = RoadNetwork(std::move(nodes), std::move(segments));
  return result;
}

// ---------------------------------------------------------------------------
// JSON network file

RoadNetwork read_network_json(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("malformed network JSON: ") + e.what());
  }
  try {
    std::vector<Node> nodes;
    for (const auto& n : doc.at("nodes")) {
      nodes.push_back({n.at("id").get<NodeId>(), n.at("lat").get<double>(), n.at("lon").get<double>()});
    }
    std::vector<Segment> segments;
    for (const auto& s : doc.at("segments")) {
      segments.push_back({s.at("id").get<SegmentId>(), s.at("from").get<NodeId>(), s.at("to").get<NodeId>(),
                          s.at("length_m").get<double>(), s.at("ffs_mps").get<double>(), s.at("cap_vph").get<double>(),
                          road_class_from_string(s.at("class").get<std::string>())});
    }
    return RoadNetwork(std::move(nodes), std::move(segments));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid network JSON: ") + e.what());
  }
}

void write_network_json(const RoadNetwork& net, std::ostream& out) {
  nlohmann::ordered_json doc;
  auto& nodes = doc["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : net.nodes()) nodes.push_back({{"id", n.id}, {"lat", n.lat}, {"lon", n.lon}});
  auto& segs = doc["segments"] = nlohmann::ordered_json::array();
  for (const auto& s : net.segments()) {
    segs.push_back({{"id", s.id},
                    {"from", s.from_node},
                    {"to", s.to_node},
                    {"length_m", s.length},
                    {"ffs_mps", s.free_flow_speed},
                    {"cap_vph", s.capacity},
                    {"class", std::string(to_string(s.road_class))}});
  }
  out << doc.dump(1) << '\n';
}

std::vector<Taz> read_taz_csv(std::istream& in, const RoadNetwork& net) {
  CsvReader csv(in, {"taz_id", "centroid_node", "name"}, "taz file");
  std::vector<Taz> tazs;
  while (csv.next()) {
    Taz t{csv.get_int(0), csv.get_int(1), csv.get(2)};
    if (!net.find_node(t.centroid_node)) {
      throw ParseError("taz file: centroid node " + std::to_string(t.centroid_node) + " not in network", csv.line());
    }
    tazs.push_back(std::move(t));
  }
  std::sort(tazs.begin(), tazs.end(), [](const Taz& a, const Taz& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < tazs.size(); ++i) {
    if (tazs[i].id == tazs[i - 1].id) throw InputError("duplicate taz id " + std::to_string(tazs[i].id));
  }
  return tazs;
}

void write_taz_csv(std::span<const Taz> tazs, std::ostream& out) {
  CsvWriter csv(out, {"taz_id", "centroid_node", "name"});
  for (const auto& t : tazs) {
    csv << t.id << t.centroid_node << t.name;
    csv.end_row();
  }
}

}  // namespace cityest
