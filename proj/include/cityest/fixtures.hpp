#pragma once

#include "cityest/network.hpp"

#include <vector>

namespace cityest {

struct NetworkFixture {
  RoadNetwork network;
  std::vector<Taz> tazs;
};

struct GridOptions {
  int rows = 3;
  int cols = 3;
  double spacing_m = 200.0;
  LatLon origin{37.7749, -122.4194};
  int arterial_every = 0;  // every n-th row/column is a primary road; 0 = none
  RoadClass local_class = RoadClass::residential;
  int taz_count = 0;  // 0 = one TAZ per node
  ClassDefaults defaults{};
};

/// Bidirectional grid. Node ids are row * cols + col + 1; segment ids are
/// sequential from 1. TAZ centroids are spread evenly over the node list.
NetworkFixture make_grid(const GridOptions& opts);

/// Two stacked routes between nodes A and B (an elevated road over a surface
/// street): identical geometry, length and free-flow speed, so GPS alone
/// cannot tell them apart.
///
///            z
///            |            segment 7: side street z->s (upper deck only)
///          s = f
///         /     \         route S: segments 1 (A->s), 2 (s->B)
///  x --- A       B --- y  route F: segments 3 (A->f), 4 (f->B)
///
/// Segment 5 is x->A and 6 is B->y. TAZs: 1 at x, 2 at y, 3 at z.
NetworkFixture make_two_route();

}  // namespace cityest
