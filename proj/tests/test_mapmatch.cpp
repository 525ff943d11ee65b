#include "cityest/errors.hpp"
#include "cityest/fixtures.hpp"
#include "cityest/mapmatch.hpp"
#include "cityest/tracegen.hpp"

#include "doctest.h"
#include "support.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace cityest;

TEST_CASE("emission is the Gaussian log-density") {
  const double s = 10.0;
  const double expected = -std::log(std::sqrt(2 * std::numbers::pi) * s) - 0.5 * 9.0;
  CHECK(emission_logp(30.0, s) == doctest::Approx(expected));
}

TEST_CASE("transition penalizes route-vs-straight and travel-time residuals") {
  MatchParams p;
  p.nk_beta = 100.0;
  p.tt_tau = 2.0;
  const double base = transition_logp(300.0, 300.0, 60.0, 60.0, p);
  CHECK(transition_logp(400.0, 300.0, 60.0, 60.0, p) == doctest::Approx(base - 1.0));
  CHECK(transition_logp(300.0, 300.0, 90.0, 60.0, p) == doctest::Approx(base - 1.0));
}

TEST_CASE("viterbi: hand-checked two-layer lattice") {
  Lattice l;
  l.emission = {Eigen::Vector2d(-1.0, -2.0), Eigen::Vector2d(-3.0, -1.0)};
  Eigen::Matrix2d t;
  t << -5.0, -4.0, -1.0, -1.0;
  l.transition = {t};
  // Sequences: (0,0)=-9 (0,1)=-6 (1,0)=-6 (1,1)=-4
  const auto r = viterbi(l);
  CHECK(r.states == std::vector<int>{1, 1});
  CHECK(r.score == -4.0);
}

TEST_CASE("viterbi ties go to the lowest state index") {
  Lattice l;
  l.emission = {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(0.0, 0.0)};
  l.transition = {Eigen::Matrix2d::Zero()};
  CHECK(viterbi(l).states == std::vector<int>{0, 0});
}

TEST_CASE("viterbi equals exhaustive enumeration on random lattices") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 300; ++i) {
    const auto l = testing::random_lattice(rng, 5, 4, i % 2 == 0);
    const auto v = viterbi(l);
    const auto b = testing::brute_force_viterbi(l);
    CHECK(v.score == b.score);
    if (b.feasible()) {
      CHECK(v.states == b.states);
      CHECK(path_score(l, v.states) == v.score);
    }
  }
}

TEST_CASE("noise-free dense trace is matched exactly") {
  const auto fx = make_grid({.rows = 5, .cols = 5});
  const auto times = fx.network.free_flow_times();
  const auto trip = simulate_trip(fx.network, fx.tazs, 1, 25, times, 0.0, 1);
  const auto trace = sample_trace(trip, fx.network, {.sampling_period = 5.0, .gps_sigma = 0.0});
  const auto r = match_trace(fx.network, trace, times, {});
  REQUIRE(r.pieces.size() == 1);
  CHECK(r.pieces[0].path == trip.path);
  CHECK(r.pieces[0].entry_times.size() == r.pieces[0].path.size());
}

TEST_CASE("matched path is connected and covers its points") {
  const auto fx = make_grid({.rows = 6, .cols = 6});
  const auto times = fx.network.free_flow_times();
  for (int v = 0; v < 20; ++v) {
    const auto trip = simulate_trip(fx.network, fx.tazs, 1 + v, 36 - v, times, 0.0, v);
    const auto trace = sample_trace(trip, fx.network, {.sampling_period = 30.0, .gps_sigma = 10.0, .rng_seed = 9});
    for (const auto& m : match_trace(fx.network, trace, times, {}).pieces) {
      for (std::size_t i = 1; i < m.path.size(); ++i) {
        CHECK(fx.network.to_index(m.path[i - 1]) == fx.network.from_index(m.path[i]));
      }
      for (std::size_t k = 0; k < m.points.size(); ++k) CHECK(m.path[m.point_path_pos[k]] == m.points[k].segment);
      for (std::size_t i = 1; i < m.entry_times.size(); ++i) CHECK(m.entry_times[i] >= m.entry_times[i - 1]);
    }
  }
}

TEST_CASE("with tt_tau = 0 matching ignores the time scale") {
  const auto fx = make_grid({.rows = 5, .cols = 5});
  const auto times = fx.network.free_flow_times();
  MatchParams p;
  p.tt_tau = 0.0;
  for (int v = 0; v < 10; ++v) {
    const auto trip = simulate_trip(fx.network, fx.tazs, 1 + v, 25 - v, times, 0.0, v);
    const auto trace = sample_trace(trip, fx.network, {.sampling_period = 40.0, .gps_sigma = 15.0, .rng_seed = 1});
    const auto a = match_trace(fx.network, trace, times, p);
    const auto b = match_trace(fx.network, trace, SegmentVector(2.0 * times), p);
    REQUIRE(a.pieces.size() == b.pieces.size());
    for (std::size_t i = 0; i < a.pieces.size(); ++i) {
      CHECK(a.pieces[i].path == b.pieces[i].path);
      CHECK(a.pieces[i].states == b.pieces[i].states);
    }
  }
}

TEST_CASE("points off the network split the trace") {
  const auto fx = make_grid({.rows = 3, .cols = 3});
  const auto times = fx.network.free_flow_times();
  const auto trip = simulate_trip(fx.network, fx.tazs, 1, 9, times, 0.0, 1);
  auto trace = sample_trace(trip, fx.network, {.sampling_period = 5.0, .gps_sigma = 0.0});
  REQUIRE(trace.points.size() > 6);
  trace.points[3].lat += 0.05;  // kilometers away
  const auto r = match_trace(fx.network, trace, times, {});
  CHECK(r.pieces.size() == 2);
  CHECK_FALSE(r.diagnostics.empty());
}

TEST_CASE("sub-trips partition the path between the first and last boundaries") {
  const auto fx = make_grid({.rows = 4, .cols = 4});
  const auto times = fx.network.free_flow_times();
  const auto trip = simulate_trip(fx.network, fx.tazs, 1, 16, times, 0.0, 1);
  const auto trace = sample_trace(trip, fx.network, {.sampling_period = 25.0, .gps_sigma = 0.0});
  const auto r = match_trace(fx.network, trace, times, {});
  REQUIRE(r.pieces.size() == 1);
  for (const auto& st : sub_trips(r.pieces[0])) {
    double expected = 0.0;
    for (auto s : st.segments) expected += times[static_cast<Eigen::Index>(s)];
    // Clean trace at free-flow: durations equal the sum of segment times.
    CHECK(st.duration == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("matched CSV round trip") {
  const auto fx = make_grid({.rows = 4, .cols = 4});
  const auto times = fx.network.free_flow_times();
  const auto trip = simulate_trip(fx.network, fx.tazs, 1, 16, times, 0.0, 1);
  const auto trace = sample_trace(trip, fx.network, {.sampling_period = 10.0, .gps_sigma = 0.0});
  const auto r = match_trace(fx.network, trace, times, {});
  std::stringstream buf;
  write_matched_csv(fx.network, r.pieces, buf);
  const auto back = read_matched_csv(buf, fx.network);
  REQUIRE(back.size() == 1);
  CHECK(back[0].path == r.pieces[0].path);
}

TEST_CASE("non-positive segment times are rejected") {
  const auto fx = make_grid({.rows = 3, .cols = 3});
  const GpsTrace t{1, {{0, fx.network.node(0).lat, fx.network.node(0).lon}, {10, fx.network.node(1).lat, fx.network.node(1).lon}}};
  SegmentVector times = fx.network.free_flow_times();
  times[0] = 0.0;
  CHECK_THROWS_AS(match_trace(fx.network, t, times, {}), InputError);
}
