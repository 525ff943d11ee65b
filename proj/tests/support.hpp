#pragma once

#include "cityest/assignment.hpp"
#include "cityest/fixtures.hpp"
#include "cityest/mapmatch.hpp"
#include "cityest/tracegen.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace cityest::testing {

// Two parallel links O->D: t1(x) = 1, t2(x) = x.
class PigouDelay final : public VolumeDelay {
 public:
  SegmentVector time(const SegmentVector& f) const override { return SegmentVector{{1.0, f[1]}}; }
  SegmentVector derivative(const SegmentVector&) const override { return SegmentVector{{0.0, 1.0}}; }
  SegmentVector flow_second_derivative(const SegmentVector&) const override { return SegmentVector::Zero(2); }
  SegmentVector integral(const SegmentVector& f) const override { return SegmentVector{{f[0], 0.5 * f[1] * f[1]}}; }
};

inline NetworkFixture make_pigou() {
  NetworkFixture fx;
  const auto d = meters_per_degree(37.0);
  std::vector<Node> nodes{{1, 37.0, -122.0}, {2, 37.0, -122.0 + 1000.0 / d.lon}};
  std::vector<Segment> segs{{1, 1, 2, 1000.0, 10.0, 1000.0, RoadClass::residential},
                            {2, 1, 2, 1000.0, 10.0, 1000.0, RoadClass::residential}};
  fx.network = RoadNetwork(nodes, segs);
  fx.tazs = {{1, 1, "O"}, {2, 2, "D"}};
  return fx;
}

// Exhaustive enumeration of every state sequence, summed in viterbi's order.
inline ViterbiResult brute_force_viterbi(const Lattice& l) {
  ViterbiResult best;
  std::vector<int> s(l.layers(), 0);
  while (true) {
    double score = l.emission[0][s[0]];
    for (std::size_t k = 1; k < l.layers(); ++k) {
      score += l.transition[k - 1](s[k - 1], s[k]);
      score += l.emission[k][s[k]];
    }
    if (score > best.score) {
      best.score = score;
      best.states = s;
    }
    std::size_t k = l.layers();
    while (k > 0) {
      --k;
      if (++s[k] < l.emission[k].size()) break;
      s[k] = 0;
      if (k == 0) return best;
    }
  }
}

inline Lattice random_lattice(std::mt19937_64& rng, int max_layers, int max_states, bool integer_scores) {
  std::uniform_int_distribution<int> layers(1, max_layers), states(1, max_states), small(-6, 0);
  std::uniform_real_distribution<double> real(-10.0, 0.0);
  std::bernoulli_distribution impossible(0.15);
  auto draw = [&] { return integer_scores ? double(small(rng)) : real(rng); };
  Lattice l;
  const int n = layers(rng);
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd e(states(rng));
    for (auto& v : e) v = draw();
    l.emission.push_back(e);
  }
  for (int k = 0; k + 1 < n; ++k) {
    Eigen::MatrixXd t(l.emission[k].size(), l.emission[k + 1].size());
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j)
        t(i, j) = impossible(rng) ? -std::numeric_limits<double>::infinity() : draw();
    l.transition.push_back(t);
  }
  return l;
}

// Two-route fixture with the upper deck (segments 1, 2) congested. Through
// traffic x->y really uses the surface road; side traffic z->y must use
// segment 2.
struct TwoRouteScenario {
  NetworkFixture fx;
  SegmentVector truth;
  std::vector<TruthTrip> trips;
  std::vector<GpsTrace> traces;
};

inline TwoRouteScenario make_two_route_scenario(int through, int side, const ProbeConfig& probe) {
  TwoRouteScenario sc{make_two_route(), {}, {}, {}};
  const auto& net = sc.fx.network;
  sc.truth = net.free_flow_times();
  const double factor[] = {3.0, 3.0, 1.1, 1.1, 1.0, 1.0, 1.2};
  for (Eigen::Index s = 0; s < sc.truth.size(); ++s) sc.truth[s] *= factor[net.segment(static_cast<std::size_t>(s)).id - 1];
  std::mt19937_64 rng(probe.rng_seed);
  std::uniform_real_distribution<double> dep(0.0, 2400.0);
  std::int64_t vid = 1;
  for (int i = 0; i < through + side; ++i) {
    const TazId origin = i < through ? 1 : 3;
    sc.trips.push_back(simulate_trip(net, sc.fx.tazs, origin, 2, sc.truth, dep(rng), vid++));
    sc.traces.push_back(sample_trace(sc.trips.back(), net, probe));
  }
  return sc;
}

}  // namespace cityest::testing
