#include "cityest/fixtures.hpp"

#include "cityest/errors.hpp"

#include <algorithm>

namespace cityest {

namespace {

LatLon offset_by(LatLon origin, double east_m, double north_m) {
  const auto mpd = meters_per_degree(origin.lat);
  return {origin.lat + north_m / mpd.lat, origin.lon + east_m / mpd.lon};
}

}  // namespace

NetworkFixture make_grid(const GridOptions& opts) {
  if (opts.rows < 1 || opts.cols < 1 || opts.rows * opts.cols < 2 || !(opts.spacing_m > 0)) {
    throw ConfigError("grid needs at least two nodes and positive spacing");
  }
  std::vector<Node> nodes;
  auto id_of = [&](int r, int c) { return static_cast<NodeId>(r * opts.cols + c + 1); };
  for (int r = 0; r < opts.rows; ++r)
    for (int c = 0; c < opts.cols; ++c) {
      auto p = offset_by(opts.origin, c * opts.spacing_m, r * opts.spacing_m);
      nodes.push_back({id_of(r, c), p.lat, p.lon});
    }

  std::vector<Segment> segments;
  SegmentId next = 1;
  auto add_pair = [&](NodeId a, NodeId b, bool arterial) {
    const RoadClass cls = arterial ? RoadClass::primary : opts.local_class;
    const LatLon pa{nodes[static_cast<std::size_t>(a - 1)].lat, nodes[static_cast<std::size_t>(a - 1)].lon};
    const LatLon pb{nodes[static_cast<std::size_t>(b - 1)].lat, nodes[static_cast<std::size_t>(b - 1)].lon};
    const double len = haversine(pa, pb);
    segments.push_back({next++, a, b, len, opts.defaults.speed(cls), opts.defaults.capacity(cls), cls});
    segments.push_back({next++, b, a, len, opts.defaults.speed(cls), opts.defaults.capacity(cls), cls});
  };
  auto arterial = [&](int k) { return opts.arterial_every > 0 && k % opts.arterial_every == 0; };
  for (int r = 0; r < opts.rows; ++r)
    for (int c = 0; c < opts.cols; ++c) {
      if (c + 1 < opts.cols) add_pair(id_of(r, c), id_of(r, c + 1), arterial(r));
      if (r + 1 < opts.rows) add_pair(id_of(r, c), id_of(r + 1, c), arterial(c));
    }

  NetworkFixture f{RoadNetwork(std::move(nodes), std::move(segments)), {}};
  const int n = opts.rows * opts.cols;
  const int count = opts.taz_count > 0 ? std::min(opts.taz_count, n) : n;
  for (int i = 0; i < count; ++i) {
    // Evenly spaced, always including the first and last node.
    const long pos = count == 1 ? 0 : std::lround(static_cast<double>(i) * (n - 1) / (count - 1));
    f.tazs.push_back({i + 1, static_cast<NodeId>(pos + 1), "taz" + std::to_string(i + 1)});
  }
  return f;
}

NetworkFixture make_two_route() {
  const LatLon o{37.7749, -122.4194};
  const ClassDefaults defaults;
  const double h = 150.0;
  std::vector<Node> nodes{
      {1, o.lat, o.lon},                                                       // A
      {2, offset_by(o, 300, h).lat, offset_by(o, 300, h).lon},                 // s (upper deck)
      {3, offset_by(o, 600, 0).lat, offset_by(o, 600, 0).lon},                 // B
      {4, offset_by(o, 300, h).lat, offset_by(o, 300, h).lon},                 // f (surface, same position)
      {5, offset_by(o, -600, 0).lat, offset_by(o, -600, 0).lon},               // x
      {6, offset_by(o, 1200, 0).lat, offset_by(o, 1200, 0).lon},               // y
      {7, offset_by(o, 300, h + 400).lat, offset_by(o, 300, h + 400).lon},     // z
  };
  auto pos = [&](NodeId id) { return nodes[static_cast<std::size_t>(id - 1)].position(); };
  const auto cls = RoadClass::residential;
  auto seg = [&](SegmentId id, NodeId a, NodeId b) {
    return Segment{id, a, b, haversine(pos(a), pos(b)), defaults.speed(cls), defaults.capacity(cls), cls};
  };
  std::vector<Segment> segments{seg(1, 1, 2), seg(2, 2, 3), seg(3, 1, 4), seg(4, 4, 3),
                                seg(5, 5, 1), seg(6, 3, 6), seg(7, 7, 2)};
  NetworkFixture f{RoadNetwork(std::move(nodes), std::move(segments)), {}};
  f.tazs = {{1, 5, "x"}, {2, 6, "y"}, {3, 7, "z"}};
  return f;
}

}  // namespace cityest
