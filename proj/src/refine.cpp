#include "cityest/refine.hpp"

#include "cityest/csv.hpp"
#include "cityest/errors.hpp"
#include "cityest/parallel.hpp"

#include <algorithm>
#include <map>

namespace cityest {

const SegmentTimeEstimate* RefineResult::estimate_for(int interval) const {
  auto it = std::lower_bound(estimates.begin(), estimates.end(), interval,
                             [](const SegmentTimeEstimate& e, int k) { return e.interval_index < k; });
  return it != estimates.end() && it->interval_index == interval ? &*it : nullptr;
}

RefineResult refine(std::span<const GpsTrace> traces, const RoadNetwork& net, const TimeGrid& grid,
                    const RefineOptions& opts) {
  if (traces.empty()) throw InputError("refine needs at least one trace");
  if (opts.max_iters < 1 || !(opts.stop_tol >= 0) || !(opts.damping > 0 && opts.damping <= 1)) {
    throw ConfigError("refine needs max_iters >= 1, stop_tol >= 0, damping in (0, 1]");
  }
  opts.match.validate();

  const MapMatcher matcher(net);
  const SegmentVector ff = net.free_flow_times();
  std::map<int, SegmentTimeEstimate> current;
  std::vector<std::vector<MatchedPath>> pieces(traces.size());
  std::vector<int> trace_interval(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& pts = traces[i].points;
    if (pts.size() < 2) throw InputError("trace " + std::to_string(traces[i].vehicle_id) + " has < 2 points");
    trace_interval[i] = grid.interval_of(0.5 * (pts.front().t + pts.back().t));
  }

  RefineResult out;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    IterationRecord rec;
    rec.iteration = iter;

    // Match every trace under the times of the interval holding its midpoint.
    std::vector<MatchResult> results(traces.size());
    parallel_for(traces.size(), opts.threads, [&](std::size_t i) {
      auto it = current.find(trace_interval[i]);
      const SegmentVector& times = it == current.end() ? ff : it->second.time;
      results[i] = matcher.match(traces[i], times, opts.match, pieces[i]);
    });

    for (std::size_t i = 0; i < traces.size(); ++i) {
      auto& fresh = results[i].pieces;
      if (iter == 0) {
        for (auto& d : results[i].diagnostics) out.warnings.push_back(std::move(d));
      } else {
        const auto& old = pieces[i];
        const std::size_t common = std::min(old.size(), fresh.size());
        for (std::size_t p = 0; p < common; ++p) rec.changed_paths += old[p].path != fresh[p].path;
        rec.changed_paths += static_cast<int>(std::max(old.size(), fresh.size()) - common);
      }
      for (const auto& m : fresh) {
        rec.viterbi_score += m.log_score;
        if (m.previous_states_score) {
          rec.viterbi_comparable += m.log_score;
          rec.viterbi_previous += *m.previous_states_score;
        }
      }
      pieces[i] = std::move(fresh);
    }

    std::vector<MatchedPath> all;
    for (const auto& ps : pieces) all.insert(all.end(), ps.begin(), ps.end());
    const auto observations = observations_from_matches(all, grid);

    std::map<int, SegmentTimeEstimate> next;
    for (const auto& [k, obs] : observations) {
      auto prev = current.find(k);
      const SegmentVector& prior = prev == current.end() ? ff : prev->second.time;
      auto est = infer_times(obs, net, prior, opts.infer);
      if (opts.damping < 1.0) est.time = opts.damping * est.time + (1.0 - opts.damping) * prior;
      const auto sys = build_system(obs, net);
      rec.residual_before += residual_sq(sys, prior);
      rec.residual += residual_sq(sys, est.time);
      for (Eigen::Index s = 0; s < est.time.size(); ++s) {
        if (est.support[s] > 0) {
          rec.max_rel_change = std::max(rec.max_rel_change, std::abs(est.time[s] - prior[s]) / prior[s]);
        }
      }
      next.emplace(k, std::move(est));
    }
    current = std::move(next);
    out.diagnostics.push_back(rec);
    if (opts.keep_history) {
      auto& h = out.history.emplace_back();
      for (const auto& [k, e] : current) h.push_back(e);
    }
    if (iter > 0 && (rec.changed_paths == 0 || rec.max_rel_change < opts.stop_tol)) break;
  }

  for (auto& ps : pieces)
    for (auto& m : ps) out.matched.push_back(std::move(m));
  std::sort(out.matched.begin(), out.matched.end(), [](const MatchedPath& a, const MatchedPath& b) {
    return a.vehicle_id != b.vehicle_id ? a.vehicle_id < b.vehicle_id : a.piece < b.piece;
  });
  for (auto& [k, e] : current) out.estimates.push_back(std::move(e));
  return out;
}

void write_diagnostics_csv(std::span<const IterationRecord> diag, std::ostream& out) {
  CsvWriter csv(out, {"iteration", "residual", "viterbi_score", "changed_paths", "max_rel_change"});
  for (const auto& d : diag) {
    csv << d.iteration << d.residual << d.viterbi_score << d.changed_paths << d.max_rel_change;
    csv.end_row();
  }
}

}  // namespace cityest
