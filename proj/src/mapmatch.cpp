#include "cityest/mapmatch.hpp"

#include "cityest/csv.hpp"
#include "cityest/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace cityest {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void MatchParams::validate() const {
  if (!(gps_sigma > 0) || !(nk_beta > 0) || !(tt_tau >= 0) || !(radius > 0) || max_candidates < 1 ||
      !(gap_factor > 0) || !(backtrack_tolerance >= 0)) {
    throw ConfigError("match params must be positive (tt_tau may be 0)");
  }
}

double emission_logp(double distance, double gps_sigma) {
  return -distance * distance / (2.0 * gps_sigma * gps_sigma) - std::log(gps_sigma * std::sqrt(2.0 * std::numbers::pi));
}

double transition_logp(double route_len, double gc_dist, double route_tt, double obs_dt, const MatchParams& params) {
  return -std::abs(route_len - gc_dist) / params.nk_beta - params.tt_tau * std::abs(route_tt - obs_dt) / obs_dt;
}

ViterbiResult viterbi(const Lattice& lattice) {
  ViterbiResult r;
  const auto layers = lattice.layers();
  if (layers == 0) return r;
  std::vector<std::vector<int>> back(layers);

  // Whether the best prefix ending in state a at layer k precedes the one
  // ending in state b lexicographically. Ties among equal scores resolve to
  // the lexicographically smallest state sequence.
  auto precedes = [&](std::size_t k, int a, int b) {
    while (k > 0) {
      const int pa = back[k][static_cast<std::size_t>(a)], pb = back[k][static_cast<std::size_t>(b)];
      if (pa == pb) break;
      a = pa;
      b = pb;
      --k;
    }
    return a < b;
  };

  Eigen::VectorXd score = lattice.emission[0];
  for (std::size_t k = 0; k + 1 < layers; ++k) {
    const auto& trans = lattice.transition[k];
    const auto& emit = lattice.emission[k + 1];
    Eigen::VectorXd next = Eigen::VectorXd::Constant(emit.size(), kNegInf);
    auto& bk = back[k + 1];
    bk.assign(static_cast<std::size_t>(emit.size()), -1);
    for (Eigen::Index j = 0; j < emit.size(); ++j) {
      auto& from = bk[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < score.size(); ++i) {
        const double s = score[i] + trans(i, j);
        if (s > next[j] || (s == next[j] && from >= 0 && s > kNegInf && precedes(k, static_cast<int>(i), from))) {
          next[j] = s;
          from = static_cast<int>(i);
        }
      }
      next[j] += emit[j];
    }
    score = std::move(next);
  }
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < score.size(); ++i) {
    if (score[i] > score[best] ||
        (score[i] == score[best] && std::isfinite(score[i]) &&
         precedes(layers - 1, static_cast<int>(i), static_cast<int>(best)))) {
      best = i;
    }
  }
  if (!std::isfinite(score[best])) return r;
  r.score = score[best];
  r.states.assign(layers, 0);
  r.states[layers - 1] = static_cast<int>(best);
  for (std::size_t k = layers - 1; k > 0; --k) {
    r.states[k - 1] = back[k][static_cast<std::size_t>(r.states[k])];
  }
  return r;
}

double path_score(const Lattice& lattice, std::span<const int> states) {
  if (states.size() != lattice.layers() || states.empty()) throw InputError("state sequence length mismatch");
  double s = lattice.emission[0][states[0]];
  for (std::size_t k = 0; k + 1 < states.size(); ++k) {
    s += lattice.transition[k](states[k], states[k + 1]);
    s += lattice.emission[k + 1][states[k + 1]];
  }
  return s;
}

// ---------------------------------------------------------------------------

namespace {

struct Route {
  double length = 0.0;
  double time = 0.0;
  std::vector<std::size_t> segments;  // includes both end segments
  bool ok = false;
};

struct Layer {
  std::size_t point;  // index in the trace
  std::vector<Candidate> cands;
};

class PieceBuilder {
 public:
  PieceBuilder(const RoadNetwork& net, const SegmentVector& times, const MatchParams& params)
      : net_(net), times_(times), params_(params) {}

  // Routes from every candidate of `a` to every candidate of `b`.
  std::vector<std::vector<Route>> routes(const Layer& a, const Layer& b) const {
    std::vector<std::size_t> targets;
    for (const auto& c : b.cands) targets.push_back(net_.from_index(c.segment));
    std::map<std::size_t, ShortestPathTree> trees;

    std::vector<std::vector<Route>> out(a.cands.size(), std::vector<Route>(b.cands.size()));
    for (std::size_t i = 0; i < a.cands.size(); ++i) {
      const auto& ca = a.cands[i];
      const auto sa = ca.segment;
      const double len_a = net_.segment(sa).length;
      const double t_a = times_[static_cast<Eigen::Index>(sa)];
      for (std::size_t j = 0; j < b.cands.size(); ++j) {
        const auto& cb = b.cands[j];
        const auto sb = cb.segment;
        Route& r = out[i][j];
        if (sa == sb && cb.offset >= ca.offset - params_.backtrack_tolerance) {
          const double d = std::max(0.0, cb.offset - ca.offset);
          r = {d, d / len_a * t_a, {sa}, true};
          continue;
        }
        const auto start = net_.to_index(sa);
        auto it = trees.find(start);
        if (it == trees.end()) {
          it = trees.emplace(start, ShortestPathTree(net_, start, times_, {.targets = targets})).first;
        }
        const auto goal = net_.from_index(sb);
        if (!it->second.reachable(goal)) continue;
        const double len_b = net_.segment(sb).length;
        r.ok = true;
        r.length = (len_a - ca.offset) + cb.offset;
        r.time = (len_a - ca.offset) / len_a * t_a + cb.offset / len_b * times_[static_cast<Eigen::Index>(sb)];
        r.segments.push_back(sa);
        for (auto s : it->second.path_to(goal)) {
          r.length += net_.segment(s).length;
          r.time += times_[static_cast<Eigen::Index>(s)];
          r.segments.push_back(s);
        }
        r.segments.push_back(sb);
      }
    }
    return out;
  }

  Eigen::MatrixXd transition(const std::vector<std::vector<Route>>& routes, const GpsPoint& pa,
                             const GpsPoint& pb) const {
    const double gc = haversine({pa.lat, pa.lon}, {pb.lat, pb.lon});
    const double dt = pb.t - pa.t;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(routes.size()),
                      static_cast<Eigen::Index>(routes.empty() ? 0 : routes[0].size()));
    for (std::size_t i = 0; i < routes.size(); ++i)
      for (std::size_t j = 0; j < routes[i].size(); ++j) {
        const auto& r = routes[i][j];
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            r.ok ? transition_logp(r.length, gc, r.time, dt, params_) : kNegInf;
      }
    return m;
  }

  Eigen::VectorXd emission(const Layer& l) const {
    Eigen::VectorXd e(static_cast<Eigen::Index>(l.cands.size()));
    for (std::size_t i = 0; i < l.cands.size(); ++i)
      e[static_cast<Eigen::Index>(i)] = emission_logp(l.cands[i].distance, params_.gps_sigma);
    return e;
  }

 private:
  const RoadNetwork& net_;
  const SegmentVector& times_;
  const MatchParams& params_;
};

double median_dt(const GpsTrace& trace) {
  std::vector<double> dts;
  for (std::size_t i = 1; i < trace.points.size(); ++i) dts.push_back(trace.points[i].t - trace.points[i - 1].t);
  if (dts.empty()) return 0.0;
  std::nth_element(dts.begin(), dts.begin() + static_cast<std::ptrdiff_t>(dts.size() / 2), dts.end());
  return dts[dts.size() / 2];
}

// Cumulative expected time along the path at a path position + offset.
class ExpectedClock {
 public:
  ExpectedClock(const RoadNetwork& net, const std::vector<std::size_t>& path, const SegmentVector& times)
      : net_(net), path_(path), times_(times), cum_(path.size() + 1, 0.0) {
    for (std::size_t i = 0; i < path.size(); ++i) cum_[i + 1] = cum_[i] + times[static_cast<Eigen::Index>(path[i])];
  }
  double at(std::size_t pos, double offset) const {
    const auto s = path_[pos];
    return cum_[pos] + offset / net_.segment(s).length * times_[static_cast<Eigen::Index>(s)];
  }
  double boundary(std::size_t pos) const { return cum_[pos]; }

 private:
  const RoadNetwork& net_;
  const std::vector<std::size_t>& path_;
  const SegmentVector& times_;
  std::vector<double> cum_;
};

// Drops an end segment whose points all sit on its node at the path side,
// moving them onto the neighbouring segment.
void trim_node_ends(const RoadNetwork& net, MatchedPath& m) {
  auto at_end = [&](std::size_t k, bool downstream) {
    const double len = net.segment(m.path[m.point_path_pos[k]]).length;
    const double eps = 1e-9 * std::max(1.0, len);
    return downstream ? m.points[k].offset >= len - eps : m.points[k].offset <= eps;
  };
  while (m.path.size() > 1) {
    bool all = true;
    for (std::size_t k = 0; k < m.points.size() && m.point_path_pos[k] == 0; ++k) all = all && at_end(k, true);
    if (!all) break;
    m.path.erase(m.path.begin());
    for (std::size_t k = 0; k < m.points.size(); ++k) {
      if (m.point_path_pos[k] == 0) {
        m.points[k] = {m.path.front(), 0.0};
      } else {
        --m.point_path_pos[k];
      }
    }
  }
  while (m.path.size() > 1) {
    const std::size_t last = m.path.size() - 1;
    bool all = true;
    for (std::size_t k = m.points.size(); k-- > 0 && m.point_path_pos[k] == last;) all = all && at_end(k, false);
    if (!all) break;
    m.path.pop_back();
    for (std::size_t k = 0; k < m.points.size(); ++k) {
      if (m.point_path_pos[k] == last) m.points[k] = {m.path.back(), net.segment(m.path.back()).length};
      if (m.point_path_pos[k] == last) m.point_path_pos[k] = last - 1;
    }
  }
}

MatchedPath assemble(const RoadNetwork& net, const GpsTrace& trace, const std::vector<Layer>& layers,
                     const std::vector<std::vector<std::vector<Route>>>& routes, const ViterbiResult& vr,
                     const SegmentVector& times) {
  MatchedPath m;
  m.vehicle_id = trace.vehicle_id;
  m.states = vr.states;
  m.log_score = vr.score;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& c = layers[k].cands[static_cast<std::size_t>(vr.states[k])];
    m.point_indices.push_back(layers[k].point);
    m.points.push_back({c.segment, c.offset});
    if (k == 0) {
      m.path.push_back(c.segment);
      m.point_path_pos.push_back(0);
      continue;
    }
    const auto& r = routes[k - 1][static_cast<std::size_t>(vr.states[k - 1])][static_cast<std::size_t>(vr.states[k])];
    // r.segments starts with the previous point's segment, already on the path.
    m.path.insert(m.path.end(), r.segments.begin() + 1, r.segments.end());
    m.point_path_pos.push_back(m.path.size() - 1);
  }
  trim_node_ends(net, m);

  // Entry times: interpolate observation times against expected time along
  // the path; extrapolate at expected pace outside the observed span.
  const ExpectedClock clock(net, m.path, times);
  std::vector<double> cx, ct;
  for (std::size_t k = 0; k < m.points.size(); ++k) {
    double c = clock.at(m.point_path_pos[k], m.points[k].offset);
    if (!cx.empty()) c = std::max(c, cx.back());
    cx.push_back(c);
    ct.push_back(trace.points[m.point_indices[k]].t);
  }
  auto time_at = [&](double c) {
    if (c <= cx.front()) return ct.front() - (cx.front() - c);
    if (c >= cx.back()) return ct.back() + (c - cx.back());
    auto k = static_cast<std::size_t>(std::upper_bound(cx.begin(), cx.end(), c) - cx.begin());
    const double span = cx[k] - cx[k - 1];
    return span > 0 ? ct[k - 1] + (c - cx[k - 1]) / span * (ct[k] - ct[k - 1]) : ct[k - 1];
  };
  for (std::size_t i = 0; i < m.path.size(); ++i) m.entry_times.push_back(time_at(clock.boundary(i)));
  m.exit_time = time_at(clock.boundary(m.path.size()));
  return m;
}

}  // namespace

MapMatcher::MapMatcher(const RoadNetwork& net) : net_(&net), index_(net) {}

MatchResult MapMatcher::match(const GpsTrace& trace, const SegmentVector& segment_times, const MatchParams& params,
                              std::span<const MatchedPath> previous) const {
  params.validate();
  if (trace.points.size() < 2) throw InputError("trace " + std::to_string(trace.vehicle_id) + " has < 2 points");
  if (segment_times.size() != static_cast<Eigen::Index>(net_->segment_count()) || !(segment_times.array() > 0).all() ||
      !segment_times.allFinite()) {
    throw InputError("segment times must be positive for every segment");
  }

  MatchResult result;
  const PieceBuilder builder(*net_, segment_times, params);
  const double gap_limit = params.gap_factor * median_dt(trace);

  std::vector<Layer> layers;
  std::vector<std::vector<std::vector<Route>>> routes;
  Lattice lattice;
  Eigen::VectorXd forward;  // running Viterbi scores, used only to detect breaks

  auto flush = [&]() {
    if (layers.size() >= 2) {
      const auto vr = viterbi(lattice);
      auto m = assemble(*net_, trace, layers, routes, vr, segment_times);
      m.piece = static_cast<int>(result.pieces.size());
      for (const auto& p : previous) {
        if (p.vehicle_id == m.vehicle_id && p.point_indices == m.point_indices) {
          m.previous_states_score = path_score(lattice, p.states);
          break;
        }
      }
      result.pieces.push_back(std::move(m));
    } else if (layers.size() == 1) {
      result.diagnostics.push_back("vehicle " + std::to_string(trace.vehicle_id) + ": dropped single-point piece at point " +
                                   std::to_string(layers[0].point));
    }
    layers.clear();
    routes.clear();
    lattice = {};
  };

  for (std::size_t p = 0; p < trace.points.size(); ++p) {
    const auto& pt = trace.points[p];
    Layer layer{p, index_.candidates({pt.lat, pt.lon}, params.radius, params.max_candidates)};
    if (layer.cands.empty()) {
      result.diagnostics.push_back("vehicle " + std::to_string(trace.vehicle_id) + ": no candidate for point " +
                                   std::to_string(p));
      flush();
      continue;
    }
    Eigen::VectorXd emit = builder.emission(layer);
    if (!layers.empty()) {
      const auto& prev_pt = trace.points[layers.back().point];
      bool split = gap_limit > 0 && pt.t - prev_pt.t > gap_limit;
      if (!split) {
        auto r = builder.routes(layers.back(), layer);
        Eigen::MatrixXd trans = builder.transition(r, prev_pt, pt);
        Eigen::VectorXd next = Eigen::VectorXd::Constant(emit.size(), kNegInf);
        for (Eigen::Index j = 0; j < emit.size(); ++j)
          for (Eigen::Index i = 0; i < forward.size(); ++i) next[j] = std::max(next[j], forward[i] + trans(i, j));
        if ((next.array() > kNegInf).any()) {
          lattice.transition.push_back(std::move(trans));
          lattice.emission.push_back(emit);
          routes.push_back(std::move(r));
          layers.push_back(std::move(layer));
          forward = next + emit;
          continue;
        }
      }
      flush();
    }
    lattice.emission.push_back(emit);
    layers.push_back(std::move(layer));
    forward = emit;
  }
  flush();
  return result;
}

MatchResult match_trace(const RoadNetwork& net, const GpsTrace& trace, const SegmentVector& segment_times,
                        const MatchParams& params) {
  return MapMatcher(net).match(trace, segment_times, params);
}

std::vector<SubTrip> sub_trips(const MatchedPath& m) {
  std::vector<SubTrip> out;
  const auto n = m.path.size();
  std::vector<std::size_t> bounds;
  for (auto pos : m.point_path_pos) {
    if (pos + 1 < n && (bounds.empty() || bounds.back() != pos + 1)) bounds.push_back(pos + 1);
  }
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
    SubTrip st;
    st.segments.assign(m.path.begin() + static_cast<std::ptrdiff_t>(bounds[k]),
                       m.path.begin() + static_cast<std::ptrdiff_t>(bounds[k + 1]));
    const double t0 = m.entry_times[bounds[k]], t1 = m.entry_times[bounds[k + 1]];
    st.duration = t1 - t0;
    st.midpoint = 0.5 * (t0 + t1);
    if (st.duration > 0) out.push_back(std::move(st));
  }
  return out;
}

void attach_points(const RoadNetwork& net, std::span<const GpsTrace> traces, std::vector<MatchedPath>& matched) {
  std::map<std::int64_t, const GpsTrace*> by_vehicle;
  for (const auto& t : traces) by_vehicle.emplace(t.vehicle_id, &t);
  for (std::size_t i = 0; i < matched.size(); ++i) {
    auto& m = matched[i];
    if (m.path.empty() || m.entry_times.size() != m.path.size()) throw InputError("matched piece without segments");
    auto it = by_vehicle.find(m.vehicle_id);
    if (it == by_vehicle.end()) {
      throw InputError("no trace for matched vehicle " + std::to_string(m.vehicle_id));
    }
    const bool has_next = i + 1 < matched.size() && matched[i + 1].vehicle_id == m.vehicle_id;
    const double until = has_next ? matched[i + 1].entry_times.front() : std::numeric_limits<double>::infinity();
    m.points.clear();
    m.point_indices.clear();
    m.point_path_pos.clear();
    const auto& pts = it->second->points;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (pts[k].t < m.entry_times.front() || pts[k].t >= until) continue;
      const auto up = std::upper_bound(m.entry_times.begin(), m.entry_times.end(), pts[k].t);
      const auto pos = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, up - m.entry_times.begin() - 1));
      const auto c = project_onto(net, m.path[pos], {pts[k].lat, pts[k].lon});
      m.point_indices.push_back(k);
      m.points.push_back({m.path[pos], c.offset});
      m.point_path_pos.push_back(pos);
    }
    const auto last = m.path.back();
    m.exit_time = m.entry_times.back() + net.segment(last).free_flow_time();
  }
}

void write_matched_csv(const RoadNetwork& net, std::span<const MatchedPath> matched, std::ostream& out) {
  CsvWriter csv(out, {"vehicle_id", "piece", "segment_id", "entry_time_s"});
  for (const auto& m : matched)
    for (std::size_t i = 0; i < m.path.size(); ++i) {
      csv << m.vehicle_id << m.piece << net.segment(m.path[i]).id << m.entry_times[i];
      csv.end_row();
    }
}

std::vector<MatchedPath> read_matched_csv(std::istream& in, const RoadNetwork& net) {
  CsvReader csv(in, {"vehicle_id", "piece", "segment_id", "entry_time_s"}, "matched file");
  std::vector<MatchedPath> out;
  while (csv.next()) {
    const auto vid = csv.get_int(0);
    const auto piece = static_cast<int>(csv.get_int(1));
    auto seg = net.find_segment(csv.get_int(2));
    if (!seg) throw ParseError("matched file: unknown segment", csv.line());
    if (out.empty() || out.back().vehicle_id != vid || out.back().piece != piece) {
      out.push_back({});
      out.back().vehicle_id = vid;
      out.back().piece = piece;
    }
    out.back().path.push_back(*seg);
    out.back().entry_times.push_back(csv.get_double(3));
  }
  return out;
}

}  // namespace cityest
