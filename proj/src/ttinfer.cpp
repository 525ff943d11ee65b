#include "cityest/ttinfer.hpp"

#include "cityest/csv.hpp"
#include "cityest/errors.hpp"

#include <algorithm>
#include <cmath>

namespace cityest {

TravelTimeSystem build_system(const IntervalObservations& obs, const RoadNetwork& net) {
  TravelTimeSystem sys;
  std::vector<int> col_of(net.segment_count(), -1);
  for (const auto& row : obs.rows)
    for (auto s : row.segments) {
      if (s >= net.segment_count()) throw InputError("observation references unknown segment");
      col_of[s] = 0;
    }
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    if (col_of[s] == 0) {
      col_of[s] = static_cast<int>(sys.columns.size());
      sys.columns.push_back(s);
    }
  }

  std::vector<Eigen::Triplet<double>> trip;
  sys.b.resize(static_cast<Eigen::Index>(obs.rows.size()));
  for (std::size_t r = 0; r < obs.rows.size(); ++r) {
    const auto& row = obs.rows[r];
    if (!(row.duration > 0) || !std::isfinite(row.duration)) throw InputError("observed durations must be positive");
    for (auto s : row.segments) trip.emplace_back(static_cast<int>(r), col_of[s], 1.0);  // duplicates are summed
    sys.b[static_cast<Eigen::Index>(r)] = row.duration;
  }
  sys.A.resize(static_cast<Eigen::Index>(obs.rows.size()), static_cast<Eigen::Index>(sys.columns.size()));
  sys.A.setFromTriplets(trip.begin(), trip.end());
  return sys;
}

namespace {

Eigen::VectorXd gather(const SegmentVector& v, const std::vector<std::size_t>& cols) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(cols[i])];
  return out;
}

struct Program {
  const Eigen::SparseMatrix<double>& A;
  const Eigen::VectorXd& b;
  Eigen::VectorXd prior, lower;
  double lambda;

  double value(const Eigen::VectorXd& x) const {
    return (A * x - b).squaredNorm() + lambda * (x - prior).squaredNorm();
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    return 2.0 * (A.transpose() * (A * x - b)) + 2.0 * lambda * (x - prior);
  }
  double violation(const Eigen::VectorXd& x, const Eigen::VectorXd& g) const {
    double v = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) v = std::max(v, x[i] > lower[i] ? std::abs(g[i]) : std::max(0.0, -g[i]));
    return v;
  }
};

// Largest eigenvalue of A^T A by power iteration.
double spectral_sq(const Eigen::SparseMatrix<double>& A) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(A.cols()).normalized();
  double est = 0.0;
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd w = A.transpose() * (A * v);
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    v = w / n;
    if (std::abs(n - est) <= 1e-6 * n) return n;
    est = n;
  }
  return est;
}

}  // namespace

double residual_sq(const TravelTimeSystem& sys, const SegmentVector& x) {
  return (sys.A * gather(x, sys.columns) - sys.b).squaredNorm();
}

double infer_objective(const TravelTimeSystem& sys, const SegmentVector& x, const SegmentVector& prior, double lambda) {
  return residual_sq(sys, x) + lambda * (gather(x, sys.columns) - gather(prior, sys.columns)).squaredNorm();
}

double kkt_violation(const TravelTimeSystem& sys, const SegmentVector& x, const SegmentVector& prior,
                     const SegmentVector& lower, double lambda) {
  const Program prog{sys.A, sys.b, gather(prior, sys.columns), gather(lower, sys.columns), lambda};
  const Eigen::VectorXd xs = gather(x, sys.columns);
  return prog.violation(xs, prog.gradient(xs)) / (1.0 + sys.b.norm());
}

SegmentTimeEstimate infer_times(const IntervalObservations& obs, const RoadNetwork& net, const SegmentVector& prior,
                                const InferOptions& opts) {
  if (!(opts.lambda >= 0) || !(opts.tol > 0)) throw ConfigError("infer needs lambda >= 0 and tol > 0");
  const auto n = static_cast<Eigen::Index>(net.segment_count());
  if (prior.size() != n || !prior.allFinite()) throw InputError("prior must be finite for every segment");
  const SegmentVector ff = net.free_flow_times();

  SegmentTimeEstimate est{obs.interval_index, prior.cwiseMax(ff), Eigen::VectorXi::Zero(n)};
  if (obs.rows.empty()) return est;
  for (const auto& row : obs.rows)
    for (auto s : row.segments) {
      if (s >= net.segment_count()) throw InputError("observation references unknown segment");
      ++est.support[static_cast<Eigen::Index>(s)];
    }

  const auto sys = build_system(obs, net);
  const Program prog{sys.A, sys.b, gather(est.time, sys.columns), gather(ff, sys.columns), opts.lambda};
  const double scale = 1.0 + sys.b.norm();
  auto project = [&](Eigen::VectorXd v) { return v.cwiseMax(prog.lower); };

  Eigen::VectorXd x = prog.prior;  // feasible start
  Eigen::VectorXd best = x;
  double best_f = prog.value(x);
  Eigen::VectorXd y = x;
  double t = 1.0;
  double L = std::max(2.0 * (spectral_sq(sys.A) + opts.lambda), 1e-12);

  for (int it = 0; it < opts.max_iter; ++it) {
    const Eigen::VectorXd gy = prog.gradient(y);
    const double fy = prog.value(y);
    Eigen::VectorXd xn;
    for (;;) {  // backtracking on the Lipschitz estimate
      xn = project(y - gy / L);
      const Eigen::VectorXd d = xn - y;
      if (prog.value(xn) <= fy + gy.dot(d) + 0.5 * L * d.squaredNorm() + 1e-12 * std::abs(fy)) break;
      L *= 2.0;
    }
    const double fx = prog.value(xn);
    if (fx < best_f) {
      best_f = fx;
      best = xn;
    }
    // Restart momentum whenever it points uphill.
    if ((y - xn).dot(xn - x) > 0) {
      t = 1.0;
      y = xn;
    } else {
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = xn + ((t - 1.0) / tn) * (xn - x);
      t = tn;
    }
    x = xn;
    if (it % 10 == 9 && prog.violation(best, prog.gradient(best)) <= opts.tol * scale) break;
  }

  for (std::size_t i = 0; i < sys.columns.size(); ++i)
    est.time[static_cast<Eigen::Index>(sys.columns[i])] = best[static_cast<Eigen::Index>(i)];
  return est;
}

std::map<int, IntervalObservations> observations_from_matches(std::span<const MatchedPath> matched,
                                                              const TimeGrid& grid) {
  std::map<int, IntervalObservations> out;
  for (const auto& m : matched)
    for (auto& st : sub_trips(m)) {
      const int k = grid.interval_of(st.midpoint);
      auto& obs = out[k];
      obs.interval_index = k;
      obs.rows.push_back({std::move(st.segments), st.duration});
    }
  return out;
}

void write_estimates_csv(const RoadNetwork& net, std::span<const SegmentTimeEstimate> est, std::ostream& out) {
  CsvWriter csv(out, {"interval", "segment_id", "time_s", "support"});
  for (const auto& e : est)
    for (std::size_t s = 0; s < net.segment_count(); ++s) {
      const auto i = static_cast<Eigen::Index>(s);
      csv << e.interval_index << net.segment(s).id << e.time[i] << e.support[i];
      csv.end_row();
    }
}

std::vector<SegmentTimeEstimate> read_estimates_csv(std::istream& in, const RoadNetwork& net) {
  CsvReader csv(in, {"interval", "segment_id", "time_s", "support"}, "estimate file");
  std::map<int, SegmentTimeEstimate> by_interval;
  const auto n = static_cast<Eigen::Index>(net.segment_count());
  while (csv.next()) {
    const int k = static_cast<int>(csv.get_int(0));
    auto s = net.find_segment(csv.get_int(1));
    if (!s) throw ParseError("estimate file: unknown segment", csv.line());
    auto [it, fresh] = by_interval.try_emplace(k);
    if (fresh) it->second = {k, net.free_flow_times(), Eigen::VectorXi::Zero(n)};
    it->second.time[static_cast<Eigen::Index>(*s)] = csv.get_double(2);
    it->second.support[static_cast<Eigen::Index>(*s)] = static_cast<int>(csv.get_int(3));
  }
  std::vector<SegmentTimeEstimate> out;
  for (auto& [k, e] : by_interval) out.push_back(std::move(e));
  return out;
}

}  // namespace cityest
