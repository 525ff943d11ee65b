#include "cityest/odestim.hpp"

#include "cityest/csv.hpp"
#include "cityest/errors.hpp"
#include "cityest/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace cityest {

DemandMatrix seed_gravity(const RoadNetwork& net, std::span<const Taz> tazs, double deterrence_scale,
                          double total_trips) {
  if (tazs.size() < 2 || !(deterrence_scale > 0) || !(total_trips >= 0)) {
    throw ConfigError("gravity seed needs >= 2 TAZs, deterrence_scale > 0, total_trips >= 0");
  }
  std::vector<LatLon> pos;
  for (const auto& t : tazs) pos.push_back(net.node(net.node_index(t.centroid_node)).position());
  double sum = 0.0;
  std::vector<double> w(tazs.size() * tazs.size(), 0.0);
  for (std::size_t i = 0; i < tazs.size(); ++i)
    for (std::size_t j = 0; j < tazs.size(); ++j) {
      if (i == j) continue;
      w[i * tazs.size() + j] = std::exp(-haversine(pos[i], pos[j]) / deterrence_scale);
      sum += w[i * tazs.size() + j];
    }
  DemandMatrix d;
  for (std::size_t i = 0; i < tazs.size(); ++i)
    for (std::size_t j = 0; j < tazs.size(); ++j)
      d.set(tazs[i].id, tazs[j].id, i == j || sum == 0 ? 0.0 : total_trips * w[i * tazs.size() + j] / sum);
  return d;
}

double upper_objective(const AssignmentResult& assigned, const SegmentTimeEstimate& observed,
                       const DemandMatrix& demand, const DemandMatrix& seed, double mu, bool weight_by_support) {
  double fit = 0.0, weight = 0.0;
  for (Eigen::Index s = 0; s < observed.support.size(); ++s) {
    if (observed.support[s] <= 0) continue;
    const double w = weight_by_support ? observed.support[s] : 1.0;
    const double r = assigned.time[s] - observed.time[s];
    fit += w * r * r;
    weight += w;
  }
  if (weight == 0.0) throw InputError("upper objective needs at least one observed segment");

  double dev = 0.0, norm = 0.0;
  for (const auto& [key, v] : seed.entries()) norm += v * v;
  auto acc = [&](const DemandMatrix& a, const DemandMatrix& b, bool skip_shared) {
    for (const auto& [key, v] : a.entries()) {
      if (skip_shared && b.entries().contains(key)) continue;
      const double diff = v - b.get(key.first, key.second);
      dev += diff * diff;
    }
  };
  acc(demand, seed, false);
  acc(seed, demand, true);
  const double reg = norm > 0 ? mu * dev / norm : 0.0;
  return fit / weight + reg;
}

void SpsaParams::validate() const {
  if ((a0 && !(*a0 > 0)) || !(c0 > 0) || !(alpha_decay > 0 && alpha_decay <= 1) ||
      !(gamma_decay > 0 && gamma_decay <= 1) || max_outer < 0 || !(mu >= 0) || record_every < 1 ||
      !(max_log_step > 0) || !(initial_step > 0) || !(reset_factor > 1)) {
    throw ConfigError("invalid SPSA parameters");
  }
}

namespace {

class UpperLevel {
 public:
  UpperLevel(const RoadNetwork& net, std::span<const Taz> tazs, const SegmentTimeEstimate& observed,
             const DemandMatrix& seed, const OdOptions& opts)
      : net_(net), tazs_(tazs), observed_(observed), seed_(seed), opts_(opts) {
    for (const auto& [key, v] : seed.entries()) {
      if (key.first != key.second && v > 0) keys_.push_back(key);
    }
  }

  std::size_t dim() const { return keys_.size(); }

  Eigen::VectorXd initial() const {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(keys_.size()));
    for (std::size_t i = 0; i < keys_.size(); ++i)
      theta[static_cast<Eigen::Index>(i)] = std::log(seed_.get(keys_[i].first, keys_[i].second));
    return theta;
  }

  DemandMatrix demand(const Eigen::VectorXd& theta) const {
    DemandMatrix d;
    for (const auto& [key, v] : seed_.entries()) d.set(key.first, key.second, 0.0);
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      const double v = std::exp(theta[static_cast<Eigen::Index>(i)]);
      if (!(v > 0) || !std::isfinite(v)) throw SolverError("SPSA iterate left the positive demand range");
      d.set(keys_[i].first, keys_[i].second, v);
    }
    return d;
  }

  AssignmentResult lower(const DemandMatrix& d) const {
    auto r = solve(net_, tazs_, d, opts_.ue);
    if (r.converged) return r;
    auto loose = opts_.ue;
    loose.tol *= 10.0;
    r = solve(net_, tazs_, d, loose);
    if (!r.converged) {
      throw SolverError("lower-level UE did not reach relative gap " + format_double(loose.tol) + " (gap " +
                        format_double(r.relative_gap) + " after " + std::to_string(r.iterations) +
                        " iterations, total demand " + format_double(d.total()) + " trips/h over " +
                        std::to_string(keys_.size()) + " OD pairs)");
    }
    return r;
  }

  double objective(const Eigen::VectorXd& theta) const {
    const auto d = demand(theta);
    return upper_objective(lower(d), observed_, d, seed_, opts_.spsa.mu, opts_.spsa.weight_by_support);
  }

 private:
  const RoadNetwork& net_;
  std::span<const Taz> tazs_;
  const SegmentTimeEstimate& observed_;
  const DemandMatrix& seed_;
  const OdOptions& opts_;
  std::vector<DemandMatrix::Key> keys_;
};

}  // namespace

OdEstimate estimate_od(const RoadNetwork& net, std::span<const Taz> tazs, const SegmentTimeEstimate& observed,
                       const DemandMatrix& seed, const OdOptions& opts) {
  const auto& sp = opts.spsa;
  sp.validate();
  if ((observed.support.array() > 0).count() == 0) throw InputError("OD estimation needs observed segments");
  if (observed.time.size() != static_cast<Eigen::Index>(net.segment_count())) {
    throw InputError("observed times do not cover the network");
  }

  const UpperLevel upper(net, tazs, observed, seed, opts);
  const auto n = static_cast<Eigen::Index>(upper.dim());
  std::mt19937_64 rng(sp.rng_seed);
  std::bernoulli_distribution coin(0.5);
  auto rademacher = [&] {
    Eigen::VectorXd delta(n);
    for (Eigen::Index i = 0; i < n; ++i) delta[i] = coin(rng) ? 1.0 : -1.0;
    return delta;
  };
  const double A = sp.stability >= 0 ? sp.stability : 0.1 * sp.max_outer;
  auto c_k = [&](int k) { return sp.c0 / std::pow(k + 1.0, sp.gamma_decay); };

  auto gradient = [&](const Eigen::VectorXd& theta, int k) {
    const Eigen::VectorXd delta = rademacher();
    const double c = c_k(k);
    double f[2];
    parallel_for(2, opts.threads, [&](std::size_t side) {
      f[side] = upper.objective(theta + (side == 0 ? c : -c) * delta);
    });
    return Eigen::VectorXd((f[0] - f[1]) / (2.0 * c) * delta);
  };

  OdEstimate est;
  Eigen::VectorXd theta = upper.initial();
  DemandMatrix best = seed;
  Eigen::VectorXd best_theta = theta;
  est.seed_objective = upper.objective(theta);
  double best_f = est.seed_objective;
  est.objective_trace.push_back(best_f);
  est.trace_iterations.push_back(0);

  double a0 = sp.a0.value_or(0.0);
  if (!sp.a0 && n > 0 && sp.max_outer > 0) {
    // Size the first step from the mean gradient magnitude at the seed.
    const Eigen::VectorXd g1 = gradient(theta, 0);
    const Eigen::VectorXd g2 = gradient(theta, 0);
    const double mag = 0.5 * (g1.cwiseAbs().mean() + g2.cwiseAbs().mean());
    a0 = mag > 0 ? sp.initial_step * std::pow(1.0 + A, sp.alpha_decay) / mag : sp.initial_step;
  }

  for (int k = 0; k < sp.max_outer && n > 0; ++k) {
    const double a = a0 / std::pow(k + 1.0 + A, sp.alpha_decay);
    const Eigen::VectorXd step = (a * gradient(theta, k)).cwiseMax(-sp.max_log_step).cwiseMin(sp.max_log_step);
    theta -= step;
    est.outer_iterations = k + 1;
    if ((k + 1) % sp.record_every == 0 || k + 1 == sp.max_outer) {
      const double f = upper.objective(theta);
      est.objective_trace.push_back(f);
      est.trace_iterations.push_back(k + 1);
      if (f < best_f) {
        best_f = f;
        best = upper.demand(theta);
        best_theta = theta;
      } else if (f > sp.reset_factor * best_f) {
        theta = best_theta;
        a0 *= 0.5;
      }
    }
  }

  est.demand = std::move(best);
  est.result = upper.lower(est.demand);
  est.objective = upper_objective(est.result, observed, est.demand, seed, sp.mu, sp.weight_by_support);
  return est;
}

void write_state_csv(const RoadNetwork& net, const AssignmentResult& r, std::ostream& out) {
  CsvWriter csv(out, {"segment_id", "flow_vph", "time_s", "voc"});
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const auto i = static_cast<Eigen::Index>(s);
    csv << net.segment(s).id << r.flow[i] << r.time[i] << r.flow[i] / net.segment(s).capacity;
    csv.end_row();
  }
}

AssignmentResult read_state_csv(std::istream& in, const RoadNetwork& net, const std::string& source) {
  CsvReader csv(in, {"segment_id", "flow_vph", "time_s", "voc"}, source);
  const auto n = static_cast<Eigen::Index>(net.segment_count());
  AssignmentResult r;
  r.flow = SegmentVector::Zero(n);
  r.time = SegmentVector::Zero(n);
  std::vector<bool> seen(net.segment_count(), false);
  while (csv.next()) {
    const auto seg = net.find_segment(csv.get_int(0));
    if (!seg) throw ParseError(source + ": unknown segment " + csv.get(0), csv.line());
    if (seen[*seg]) throw ParseError(source + ": duplicate segment", csv.line());
    seen[*seg] = true;
    r.flow[static_cast<Eigen::Index>(*seg)] = csv.get_double(1);
    r.time[static_cast<Eigen::Index>(*seg)] = csv.get_double(2);
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw InputError(source + ": state does not cover every segment");
  }
  return r;
}

void write_objective_csv(const OdEstimate& e, std::ostream& out) {
  CsvWriter csv(out, {"outer_iter", "objective"});
  for (std::size_t i = 0; i < e.objective_trace.size(); ++i) {
    csv << e.trace_iterations[i] << e.objective_trace[i];
    csv.end_row();
  }
}

}  // namespace cityest
