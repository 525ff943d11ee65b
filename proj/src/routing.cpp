#include "cityest/routing.hpp"

#include "cityest/errors.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace cityest {

ShortestPathTree::ShortestPathTree(const RoadNetwork& net, std::size_t origin, const SegmentVector& weight,
                                   Limits limits)
    : net_(&net), origin_(origin), dist_(net.node_count(), kUnreachable), pred_(net.node_count(), kNoSegment) {
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  std::vector<char> settled(net.node_count(), 0);
  std::vector<char> is_target;
  std::size_t targets_left = 0;
  if (!limits.targets.empty()) {
    is_target.assign(net.node_count(), 0);
    for (auto t : limits.targets) {
      if (!is_target[t]) ++targets_left;
      is_target[t] = 1;
    }
  }

  dist_[origin] = 0.0;
  heap.emplace(0.0, origin);
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (settled[u] || d > dist_[u]) continue;
    settled[u] = 1;
    if (!is_target.empty() && is_target[u] && --targets_left == 0) break;
    for (auto s : net.out_segments(u)) {
      const auto v = net.to_index(s);
      if (settled[v]) continue;
      const double nd = d + weight[s];
      if (nd > limits.max_cost) continue;
      if (nd < dist_[v]) {
        dist_[v] = nd;
        pred_[v] = s;
        heap.emplace(nd, v);
      } else if (nd == dist_[v] && net.segment(s).id < net.segment(pred_[v]).id) {
        pred_[v] = s;
      }
    }
  }
}

std::vector<std::size_t> ShortestPathTree::path_to(std::size_t node) const {
  std::vector<std::size_t> path;
  if (!reachable(node)) return path;
  for (auto v = node; v != origin_;) {
    const auto s = pred_[v];
    path.push_back(s);
    v = net_->from_index(s);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::optional<Path> shortest_path(const RoadNetwork& net, NodeId origin, NodeId dest, const SegmentVector& weight) {
  const auto o = net.node_index(origin);
  const auto t = net.node_index(dest);
  if (weight.size() != static_cast<Eigen::Index>(net.segment_count()) || (weight.array() < 0).any() ||
      !weight.allFinite()) {
    throw InputError("shortest_path needs one finite nonnegative weight per segment");
  }
  const std::size_t targets[] = {t};
  ShortestPathTree tree(net, o, weight, {.targets = targets});
  if (!tree.reachable(t)) return std::nullopt;
  return Path{tree.path_to(t), tree.cost(t)};
}

// ---------------------------------------------------------------------------
// Projection

namespace {

struct Planar {
  double x, y;
};

Candidate project_planar(const RoadNetwork& net, std::size_t seg, Planar p, Planar a, Planar b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double f = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  f = std::clamp(f, 0.0, 1.0);
  const double qx = a.x + f * dx - p.x, qy = a.y + f * dy - p.y;
  return {seg, f * net.segment(seg).length, std::hypot(qx, qy)};
}

void sort_and_trim(std::vector<Candidate>& c, int k) {
  // Distance ties (to 1e-6 m) resolve by ascending segment id.
  std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
    const auto qa = std::llround(a.distance * 1e6), qb = std::llround(b.distance * 1e6);
    if (qa != qb) return qa < qb;
    return a.segment < b.segment;
  });
  if (c.size() > static_cast<std::size_t>(k)) c.resize(static_cast<std::size_t>(k));
}

void check_query(double radius, int k) {
  if (!(radius > 0) || k < 1) throw InputError("candidate search needs radius > 0 and k >= 1");
}

}  // namespace

Candidate project_onto(const RoadNetwork& net, std::size_t seg, LatLon point) {
  const auto mpd = meters_per_degree(point.lat);
  auto to_planar = [&](const Node& n) { return Planar{(n.lon - point.lon) * mpd.lon, (n.lat - point.lat) * mpd.lat}; };
  return project_planar(net, seg, {0, 0}, to_planar(net.node(net.from_index(seg))),
                        to_planar(net.node(net.to_index(seg))));
}

std::vector<Candidate> project_to_candidates(const RoadNetwork& net, LatLon point, double radius, int k) {
  check_query(radius, k);
  std::vector<Candidate> out;
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    auto c = project_onto(net, s, point);
    if (c.distance <= radius) out.push_back(c);
  }
  sort_and_trim(out, k);
  return out;
}

SegmentIndex::SegmentIndex(const RoadNetwork& net, double cell_m) : net_(&net), cell_(cell_m) {
  if (net.node_count() == 0) {
    lat0_ = lon0_ = 0;
    scale_ = meters_per_degree(0);
    return;
  }
  double lat_min = 90, lat_max = -90, lon_min = 180, lon_max = -180;
  for (const auto& n : net.nodes()) {
    lat_min = std::min(lat_min, n.lat);
    lat_max = std::max(lat_max, n.lat);
    lon_min = std::min(lon_min, n.lon);
    lon_max = std::max(lon_max, n.lon);
  }
  lat0_ = 0.5 * (lat_min + lat_max);
  lon0_ = 0.5 * (lon_min + lon_max);
  scale_ = meters_per_degree(lat0_);
  min_x_ = (lon_min - lon0_) * scale_.lon;
  min_y_ = (lat_min - lat0_) * scale_.lat;
  nx_ = static_cast<long>((lon_max - lon_min) * scale_.lon / cell_) + 1;
  ny_ = static_cast<long>((lat_max - lat_min) * scale_.lat / cell_) + 1;
  cells_.assign(static_cast<std::size_t>(nx_ * ny_), {});
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const auto& a = net.node(net.from_index(s));
    const auto& b = net.node(net.to_index(s));
    auto cx = [&](double lon) { return static_cast<long>(((lon - lon0_) * scale_.lon - min_x_) / cell_); };
    auto cy = [&](double lat) { return static_cast<long>(((lat - lat0_) * scale_.lat - min_y_) / cell_); };
    const long x0 = std::clamp(std::min(cx(a.lon), cx(b.lon)), 0L, nx_ - 1);
    const long x1 = std::clamp(std::max(cx(a.lon), cx(b.lon)), 0L, nx_ - 1);
    const long y0 = std::clamp(std::min(cy(a.lat), cy(b.lat)), 0L, ny_ - 1);
    const long y1 = std::clamp(std::max(cy(a.lat), cy(b.lat)), 0L, ny_ - 1);
    for (long y = y0; y <= y1; ++y)
      for (long x = x0; x <= x1; ++x) cells_[static_cast<std::size_t>(y * nx_ + x)].push_back(s);
  }
}

std::vector<Candidate> SegmentIndex::candidates(LatLon point, double radius, int k) const {
  check_query(radius, k);
  std::vector<Candidate> out;
  if (cells_.empty()) return out;
  // Pad the search window for the difference between the network-wide and
  // the query-local planar scales.
  const double pad = radius * 1.05 + 1.0;
  const double px = (point.lon - lon0_) * scale_.lon - min_x_;
  const double py = (point.lat - lat0_) * scale_.lat - min_y_;
  const long x0 = std::max(0L, static_cast<long>(std::floor((px - pad) / cell_)));
  const long x1 = std::min(nx_ - 1, static_cast<long>(std::floor((px + pad) / cell_)));
  const long y0 = std::max(0L, static_cast<long>(std::floor((py - pad) / cell_)));
  const long y1 = std::min(ny_ - 1, static_cast<long>(std::floor((py + pad) / cell_)));
  if (x0 > x1 || y0 > y1) return out;

  std::vector<std::size_t> segs;
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x) {
      const auto& cell = cells_[static_cast<std::size_t>(y * nx_ + x)];
      segs.insert(segs.end(), cell.begin(), cell.end());
    }
  std::sort(segs.begin(), segs.end());
  segs.erase(std::unique(segs.begin(), segs.end()), segs.end());
  for (auto s : segs) {
    auto c = project_onto(*net_, s, point);
    if (c.distance <= radius) out.push_back(c);
  }
  sort_and_trim(out, k);
  return out;
}

}  // namespace cityest
