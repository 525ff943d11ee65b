#include "cityest/eval.hpp"

#include "cityest/csv.hpp"
#include "cityest/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace cityest {

double mse(const SegmentVector& est, const SegmentVector& truth) {
  if (est.size() != truth.size()) throw InputError("mse needs estimates and truth over the same segments");
  if (est.size() == 0) throw InputError("mse over zero segments");
  return (est - truth).squaredNorm() / static_cast<double>(est.size());
}

double gain_pct(double mse_ours, double mse_baseline) {
  if (!(mse_baseline > 0)) throw InputError("gain is undefined for a zero baseline MSE");
  return 100.0 * (mse_baseline - mse_ours) / mse_baseline;
}

double aggregate_error_pct(const SegmentVector& est, const SegmentVector& truth) {
  if (est.size() != truth.size()) throw InputError("aggregate error needs matching segment sets");
  const double t = truth.sum();
  if (t == 0.0) throw InputError("aggregate error is undefined for a zero truth sum");
  return 100.0 * std::abs(est.sum() - t) / t;
}

AccuracyReport matching_accuracy(std::span<const MatchedPath> matched, std::span<const TruthTrip> truth,
                                 const RoadNetwork& net) {
  std::map<std::int64_t, std::set<std::size_t>> by_vehicle;
  for (const auto& m : matched) by_vehicle[m.vehicle_id].insert(m.path.begin(), m.path.end());

  AccuracyReport r;
  std::set<std::int64_t> seen;
  for (const auto& trip : truth) {
    seen.insert(trip.vehicle_id);
    auto it = by_vehicle.find(trip.vehicle_id);
    if (it == by_vehicle.end()) {
      ++r.missing_matched;
      continue;
    }
    const std::set<std::size_t> want(trip.path.begin(), trip.path.end());
    double inter = 0.0, uni = 0.0;
    for (auto s : want) {
      const double len = net.segment(s).length;
      uni += len;
      if (it->second.contains(s)) inter += len;
    }
    for (auto s : it->second)
      if (!want.contains(s)) uni += net.segment(s).length;
    r.per_trip_pct.push_back(uni > 0 ? 100.0 * inter / uni : 100.0);
  }
  for (const auto& [v, segs] : by_vehicle) r.missing_truth += !seen.contains(v);
  r.scored = static_cast<int>(r.per_trip_pct.size());
  if (r.scored > 0) {
    r.accuracy_pct = std::accumulate(r.per_trip_pct.begin(), r.per_trip_pct.end(), 0.0) / r.scored;
  }
  return r;
}

double matching_accuracy_pct(std::span<const MatchedPath> matched, std::span<const TruthTrip> truth,
                             const RoadNetwork& net) {
  return matching_accuracy(matched, truth, net).accuracy_pct;
}

RefineResult run_baseline(std::span<const GpsTrace> traces, const RoadNetwork& net, const TimeGrid& grid,
                          RefineOptions opts) {
  opts.max_iters = 1;
  opts.match.tt_tau = 0.0;
  return refine(traces, net, grid, opts);
}

std::vector<double> voc_series(std::span<const SegmentVector> flows, const RoadNetwork& net, const TimeGrid& grid,
                               std::optional<RoadClass> filter) {
  if (static_cast<int>(flows.size()) != grid.interval_count()) {
    throw InputError("VOC series needs one flow vector per interval");
  }
  std::vector<std::size_t> segs;
  for (std::size_t s = 0; s < net.segment_count(); ++s)
    if (!filter || net.segment(s).road_class == *filter) segs.push_back(s);
  if (segs.empty()) throw InputError("no segments match the road class filter");

  std::vector<double> out;
  out.reserve(flows.size());
  for (const auto& f : flows) {
    if (f.size() != static_cast<Eigen::Index>(net.segment_count())) {
      throw InputError("flow vector does not cover the network");
    }
    double sum = 0.0;
    for (auto s : segs) sum += f[static_cast<Eigen::Index>(s)] / net.segment(s).capacity;
    out.push_back(sum / static_cast<double>(segs.size()));
  }
  return out;
}

Autocorrelation lag_autocorrelation(std::span<const double> series, int lag) {
  if (lag < 0 || static_cast<std::size_t>(lag) >= series.size()) {
    throw InputError("autocorrelation needs 0 <= lag < series length");
  }
  const auto n = series.size() - static_cast<std::size_t>(lag);
  const auto a = series.first(n), b = series.subspan(static_cast<std::size_t>(lag));
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0) || !(sbb > 0)) return {};
  return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), true};
}

std::vector<SegmentVector> interpolate_intervals(const std::map<int, SegmentVector>& known, int interval_count) {
  if (known.empty()) throw InputError("no estimated intervals to interpolate from");
  for (const auto& [k, v] : known) {
    if (k < 0 || k >= interval_count) throw InputError("interval index out of range");
  }
  std::vector<SegmentVector> out(static_cast<std::size_t>(interval_count));
  for (int k = 0; k < interval_count; ++k) {
    auto hi = known.lower_bound(k);
    if (hi != known.end() && hi->first == k) {
      out[static_cast<std::size_t>(k)] = hi->second;
      continue;
    }
    auto next = hi == known.end() ? known.begin() : hi;
    auto prev = hi == known.begin() ? std::prev(known.end()) : std::prev(hi);
    const int span = (next->first - prev->first + interval_count - 1) % interval_count + 1;
    const int off = (k - prev->first + interval_count) % interval_count;
    const double w = static_cast<double>(off) / span;
    out[static_cast<std::size_t>(k)] = (1.0 - w) * prev->second + w * next->second;
  }
  return out;
}

void summarize(MetricReport& report) {
  const auto n = static_cast<double>(report.scenarios.size());
  report.mean_scenario_mse = report.mean_scenario_gain_pct = report.mean_scenario_aggregate_error_pct = 0.0;
  for (const auto& s : report.scenarios) {
    report.mean_scenario_mse += s.mse / n;
    report.mean_scenario_gain_pct += s.gain_pct / n;
    report.mean_scenario_aggregate_error_pct += s.aggregate_error_pct / n;
  }
}

void write_report_json(const MetricReport& r, std::ostream& out) {
  nlohmann::ordered_json j;
  j["mse"] = r.mse;
  j["baseline_mse"] = r.baseline_mse;
  j["gain_pct"] = r.gain_pct;
  j["aggregate_error_pct"] = r.aggregate_error_pct;
  j["baseline_aggregate_error_pct"] = r.baseline_aggregate_error_pct;
  j["matching_accuracy_pct"] = r.matching_accuracy_pct;
  j["baseline_matching_accuracy_pct"] = r.baseline_matching_accuracy_pct;
  j["trips_scored"] = r.trips_scored;
  j["trips_excluded"] = r.trips_excluded;
  j["mean_scenario_mse"] = r.mean_scenario_mse;
  j["mean_scenario_gain_pct"] = r.mean_scenario_gain_pct;
  j["mean_scenario_aggregate_error_pct"] = r.mean_scenario_aggregate_error_pct;
  auto& arr = j["scenarios"] = nlohmann::ordered_json::array();
  for (const auto& s : r.scenarios) {
    arr.push_back({{"scenario", s.scenario},
                   {"demand_multiplier", s.demand_multiplier},
                   {"mse", s.mse},
                   {"baseline_mse", s.baseline_mse},
                   {"gain_pct", s.gain_pct},
                   {"aggregate_error_pct", s.aggregate_error_pct},
                   {"baseline_aggregate_error_pct", s.baseline_aggregate_error_pct}});
  }
  out << j.dump(2) << '\n';
}

void write_voc_csv(std::span<const SegmentVector> flows, const RoadNetwork& net, const TimeGrid& grid,
                   std::ostream& out) {
  std::vector<RoadClass> present;
  for (const auto& s : net.segments())
    if (std::find(present.begin(), present.end(), s.road_class) == present.end()) present.push_back(s.road_class);
  std::sort(present.begin(), present.end());

  std::vector<std::vector<double>> series{voc_series(flows, net, grid)};
  for (auto c : present) series.push_back(voc_series(flows, net, grid, c));
  CsvWriter csv(out, {"interval", "road_class", "mean_voc"});
  for (int k = 0; k < grid.interval_count(); ++k) {
    for (std::size_t c = 0; c < series.size(); ++c) {
      csv << k << (c == 0 ? std::string_view("all") : to_string(present[c - 1]))
          << series[c][static_cast<std::size_t>(k)];
      csv.end_row();
    }
  }
}

int voc_bucket(double voc) {
  if (voc < 0.4) return 0;
  if (voc < 0.7) return 1;
  if (voc < 0.9) return 2;
  return 3;
}

void write_geojson(const RoadNetwork& net, const SegmentVector& flow, std::ostream& out) {
  if (flow.size() != static_cast<Eigen::Index>(net.segment_count())) {
    throw InputError("flow vector does not cover the network");
  }
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const auto& seg = net.segment(s);
    const auto a = net.node(net.from_index(s)).position();
    const auto b = net.node(net.to_index(s)).position();
    const double voc = flow[static_cast<Eigen::Index>(s)] / seg.capacity;
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "LineString"}, {"coordinates", {{a.lon, a.lat}, {b.lon, b.lat}}}}},
                        {"properties", {{"segment_id", seg.id}, {"voc", voc}, {"voc_bucket", voc_bucket(voc)}}}});
  }
  nlohmann::ordered_json doc{{"type", "FeatureCollection"}, {"features", std::move(features)}};
  out << doc.dump() << '\n';
}

}  // namespace cityest
