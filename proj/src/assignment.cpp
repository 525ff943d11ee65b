#include "cityest/assignment.hpp"

#include "cityest/csv.hpp"
#include "cityest/errors.hpp"
#include "cityest/routing.hpp"

#include <algorithm>
#include <unordered_map>

namespace cityest {

void DemandMatrix::set(TazId origin, TazId dest, double trips_per_hour) {
  if (!std::isfinite(trips_per_hour) || trips_per_hour < 0) {
    throw InputError("demand entries must be finite and nonnegative");
  }
  entries_[{origin, dest}] = trips_per_hour;
}

double DemandMatrix::get(TazId origin, TazId dest) const {
  auto it = entries_.find({origin, dest});
  return it == entries_.end() ? 0.0 : it->second;
}

double DemandMatrix::total() const {
  double t = 0;
  for (const auto& [k, v] : entries_) t += v;
  return t;
}

DemandMatrix DemandMatrix::scaled(double factor) const {
  DemandMatrix d;
  for (const auto& [k, v] : entries_) d.set(k.first, k.second, v * factor);
  return d;
}

DemandMatrix read_demand_csv(std::istream& in) {
  CsvReader csv(in, {"origin_taz", "dest_taz", "trips_per_hour"}, "demand file");
  DemandMatrix d;
  while (csv.next()) {
    const double v = csv.get_double(2);
    if (v < 0) throw ParseError("demand file: negative trips_per_hour", csv.line());
    d.set(csv.get_int(0), csv.get_int(1), v);
  }
  return d;
}

void write_demand_csv(const DemandMatrix& d, std::ostream& out) {
  CsvWriter csv(out, {"origin_taz", "dest_taz", "trips_per_hour"});
  for (const auto& [k, v] : d.entries()) {
    csv << k.first << k.second << v;
    csv.end_row();
  }
}

BprDelay::BprDelay(const RoadNetwork& net, VdfParams params)
    : t0_(net.free_flow_times()), cap_(net.capacities()), p_(params) {
  if (!(p_.alpha >= 0) || !(p_.beta >= 1)) throw ConfigError("BPR needs alpha >= 0 and beta >= 1");
}

SegmentVector BprDelay::time(const SegmentVector& flow) const {
  return t0_.array() * (1.0 + p_.alpha * (flow.array() / cap_.array()).pow(p_.beta));
}

SegmentVector BprDelay::derivative(const SegmentVector& flow) const {
  return t0_.array() * p_.alpha * p_.beta * (flow.array() / cap_.array()).pow(p_.beta - 1) / cap_.array();
}

SegmentVector BprDelay::flow_second_derivative(const SegmentVector& flow) const {
  return t0_.array() * p_.alpha * p_.beta * (p_.beta - 1) * (flow.array() / cap_.array()).pow(p_.beta - 1) /
         cap_.array();
}

SegmentVector BprDelay::integral(const SegmentVector& flow) const {
  return t0_.array() *
         (flow.array() + p_.alpha * cap_.array() / (p_.beta + 1) * (flow.array() / cap_.array()).pow(p_.beta + 1));
}

OdTable::OdTable(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& demand) {
  std::unordered_map<TazId, std::size_t> centroid;
  for (const auto& t : tazs) centroid[t.id] = net.node_index(t.centroid_node);
  std::map<TazId, Origin> by_origin;
  for (const auto& [key, trips] : demand.entries()) {
    auto o = centroid.find(key.first);
    auto d = centroid.find(key.second);
    if (o == centroid.end() || d == centroid.end()) {
      throw InputError("demand references unknown TAZ " +
                       std::to_string(o == centroid.end() ? key.first : key.second));
    }
    if (key.first == key.second || trips <= 0 || o->second == d->second) continue;
    auto& origin = by_origin[key.first];
    origin.node = o->second;
    origin.dests.push_back({d->second, trips, key.first, key.second});
  }
  for (auto& [id, o] : by_origin) origins_.push_back(std::move(o));
}

AonLoad all_or_nothing(const RoadNetwork& net, const OdTable& od, const SegmentVector& cost) {
  AonLoad load;
  load.flow = SegmentVector::Zero(static_cast<Eigen::Index>(net.segment_count()));
  std::vector<std::size_t> targets;
  for (const auto& origin : od.origins()) {
    targets.clear();
    for (const auto& d : origin.dests) targets.push_back(d.node);
    ShortestPathTree tree(net, origin.node, cost, {.targets = targets});
    for (const auto& d : origin.dests) {
      if (!tree.reachable(d.node)) {
        load.unreachable.emplace_back(d.origin_taz, d.dest_taz);
        load.dropped_demand += d.demand;
        continue;
      }
      for (auto v = d.node; v != origin.node;) {
        const auto s = tree.incoming(v);
        load.flow[static_cast<Eigen::Index>(s)] += d.demand;
        v = net.from_index(s);
      }
    }
  }
  return load;
}

AonLoad all_or_nothing(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& demand,
                       const SegmentVector& cost) {
  return all_or_nothing(net, OdTable(net, tazs, demand), cost);
}

double relative_gap(const RoadNetwork& net, const OdTable& od, const SegmentVector& flow, const SegmentVector& cost) {
  const double current = flow.dot(cost);
  if (current == 0.0) return 0.0;
  const double best = all_or_nothing(net, od, cost).flow.dot(cost);
  return (current - best) / current;
}

double relative_gap(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& demand,
                    const SegmentVector& flow, const SegmentVector& cost) {
  return relative_gap(net, OdTable(net, tazs, demand), flow, cost);
}

namespace {

SegmentVector link_cost(const VolumeDelay& delay, Objective obj, const SegmentVector& flow) {
  if (obj == Objective::user_equilibrium) return delay.time(flow);
  return delay.time(flow) + flow.cwiseProduct(delay.derivative(flow));
}

// Diagonal of the cost Jacobian.
SegmentVector cost_slope(const VolumeDelay& delay, Objective obj, const SegmentVector& flow) {
  if (obj == Objective::user_equilibrium) return delay.derivative(flow);
  return 2.0 * delay.derivative(flow) + delay.flow_second_derivative(flow);
}

// Minimizes the objective along x + lambda*d, lambda in [0,1], by bisection on
// its derivative sum_s cost_s(x + lambda d) * d_s.
double line_search(const VolumeDelay& delay, Objective obj, const SegmentVector& x, const SegmentVector& d,
                   double precision) {
  auto slope = [&](double lambda) {
    SegmentVector v = (x + lambda * d).cwiseMax(0.0);
    return link_cost(delay, obj, v).dot(d);
  };
  if (slope(1.0) <= 0) return 1.0;
  if (slope(0.0) >= 0) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (hi - lo > precision) {
    const double mid = 0.5 * (lo + hi);
    (slope(mid) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

AssignmentResult solve(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& demand,
                       const VolumeDelay& delay, const AssignmentOptions& opts) {
  if (!(opts.tol > 0) || opts.max_iter < 1) throw ConfigError("assignment needs tol > 0 and max_iter >= 1");
  const OdTable od(net, tazs, demand);
  const auto n = static_cast<Eigen::Index>(net.segment_count());

  AssignmentResult r;
  SegmentVector x = all_or_nothing(net, od, link_cost(delay, opts.objective, SegmentVector::Zero(n))).flow;
  SegmentVector best = x;
  double best_gap = std::numeric_limits<double>::infinity();
  // Previous two search targets and the last step size, for the
  // conjugate and bi-conjugate directions.
  SegmentVector s1, s2;
  double tau1 = 0.0;

  for (int k = 1; k <= opts.max_iter; ++k) {
    const SegmentVector cost = link_cost(delay, opts.objective, x);
    AonLoad aon = all_or_nothing(net, od, cost);
    const double current = x.dot(cost);
    const double gap = current == 0.0 ? 0.0 : std::max(0.0, (current - aon.flow.dot(cost)) / current);
    r.iterations = k;
    r.unreachable = std::move(aon.unreachable);
    if (gap < best_gap) {
      best_gap = gap;
      best = x;
    }
    if (gap <= opts.tol) break;
    if (k == opts.max_iter) break;

    const SegmentVector& y = aon.flow;
    SegmentVector target = y;
    const SegmentVector h = s1.size() == n ? cost_slope(delay, opts.objective, x) : SegmentVector();
    bool mixed = false;
    if (s2.size() == n && tau1 > 0.0 && tau1 < 1.0 - 1e-6) {
      const SegmentVector d1 = s1 - x;
      const SegmentVector d2 = tau1 * s1 - x + (1.0 - tau1) * s2;
      const double den_mu = d2.dot(h.cwiseProduct(s2 - s1));
      const double den_nu = d1.dot(h.cwiseProduct(d1));
      if (den_mu != 0.0 && den_nu != 0.0) {
        const double mu = std::max(0.0, -d2.dot(h.cwiseProduct(y - x)) / den_mu);
        const double nu = std::max(0.0, -d1.dot(h.cwiseProduct(y - x)) / den_nu + mu * tau1 / (1.0 - tau1));
        const double b0 = 1.0 / (1.0 + mu + nu);
        SegmentVector cand = b0 * y + nu * b0 * s1 + mu * b0 * s2;
        if (std::isfinite(b0) && cost.dot(cand - x) < 0.0) {
          target = std::move(cand);
          mixed = true;
        }
      }
    }
    if (!mixed && s1.size() == n) {
      const SegmentVector a = s1 - x;
      const double num = a.dot(h.cwiseProduct(y - x));
      const double den = a.dot(h.cwiseProduct(y - s1));
      double mix = den != 0.0 ? num / den : 0.0;
      if (!(mix >= 0.0)) mix = 0.0;
      mix = std::min(mix, 1.0 - 1e-2);
      SegmentVector cand = mix * s1 + (1.0 - mix) * y;
      if (cost.dot(cand - x) < 0.0) target = std::move(cand);
    }
    const SegmentVector dir = target - x;
    const double lambda = line_search(delay, opts.objective, x, dir, opts.line_search_precision);
    x = (x + lambda * dir).cwiseMax(0.0);
    s2 = std::move(s1);
    s1 = std::move(target);
    tau1 = lambda;
  }

  r.flow = best;
  r.relative_gap = best_gap;
  r.converged = best_gap <= opts.tol;
  r.time = delay.time(r.flow);
  r.total_system_travel_time = r.flow.dot(r.time);
  return r;
}

AssignmentResult solve(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& demand,
                       const AssignmentOptions& opts) {
  return solve(net, tazs, demand, BprDelay(net, opts.vdf), opts);
}

void write_assignment_csv(const RoadNetwork& net, const AssignmentResult& r, std::ostream& out) {
  CsvWriter csv(out, {"segment_id", "flow_vph", "time_s"});
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const auto i = static_cast<Eigen::Index>(s);
    csv << net.segment(s).id << r.flow[i] << r.time[i];
    csv.end_row();
  }
}

}  // namespace cityest
