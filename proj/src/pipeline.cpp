#include "cityest/pipeline.hpp"

#include "cityest/csv.hpp"
#include "cityest/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace cityest {

std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) {
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : stage) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  // splitmix64 finalizer over the combined value
  std::uint64_t z = h ^ (seed + 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<IntervalScenario> periodic_schedule(std::span<const GroundTruthScenario> scenarios, const TimeGrid& grid,
                                                int period) {
  if (scenarios.empty()) throw ConfigError("periodic schedule needs at least one scenario");
  if (period < 1) throw ConfigError("schedule period must be >= 1");
  double lo = scenarios.front().demand_multiplier, hi = lo;
  for (const auto& s : scenarios) {
    lo = std::min(lo, s.demand_multiplier);
    hi = std::max(hi, s.demand_multiplier);
  }
  std::vector<IntervalScenario> out;
  for (int k = 0; k < grid.interval_count(); ++k) {
    const double phase = 2.0 * std::numbers::pi * (k % period) / period;
    const double target = lo + (hi - lo) * 0.5 * (1.0 - std::cos(phase));
    std::size_t best = 0;
    for (std::size_t i = 1; i < scenarios.size(); ++i) {
      if (std::abs(scenarios[i].demand_multiplier - target) < std::abs(scenarios[best].demand_multiplier - target)) {
        best = i;
      }
    }
    out.push_back({k, scenarios[best].demand_multiplier, &scenarios[best].time});
  }
  return out;
}

std::vector<ScheduleRow> schedule_rows(std::span<const IntervalScenario> schedule,
                                       std::span<const GroundTruthScenario> scenarios) {
  std::vector<ScheduleRow> rows;
  for (const auto& slot : schedule) {
    auto it = std::find_if(scenarios.begin(), scenarios.end(),
                           [&](const GroundTruthScenario& s) { return &s.time == slot.time; });
    if (it == scenarios.end()) throw ConfigError("schedule refers to an unknown scenario");
    rows.push_back({slot.interval, it->id, slot.demand_multiplier});
  }
  return rows;
}

void write_schedule_csv(std::span<const ScheduleRow> rows, std::ostream& out) {
  CsvWriter csv(out, {"interval", "scenario", "demand_multiplier"});
  for (const auto& r : rows) {
    csv << r.interval << r.scenario << r.demand_multiplier;
    csv.end_row();
  }
}

std::vector<ScheduleRow> read_schedule_csv(std::istream& in, const TimeGrid& grid) {
  CsvReader csv(in, {"interval", "scenario", "demand_multiplier"}, "schedule file");
  std::vector<ScheduleRow> rows;
  while (csv.next()) {
    ScheduleRow r{static_cast<int>(csv.get_int(0)), static_cast<int>(csv.get_int(1)), csv.get_double(2)};
    if (r.interval < 0 || r.interval >= grid.interval_count()) {
      throw ParseError("schedule file: interval out of range", csv.line());
    }
    if (!rows.empty() && r.interval <= rows.back().interval) {
      throw ParseError("schedule file: intervals must increase", csv.line());
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<TruthTrip> generate_trips_target(const RoadNetwork& net, std::span<const Taz> tazs,
                                             const DemandMatrix& base, std::span<const IntervalScenario> schedule,
                                             const TimeGrid& grid, const ProbeConfig& cfg, std::size_t target) {
  double rate = 0.0;
  for (const auto& [key, v] : base.entries())
    if (key.first != key.second && v > 0) rate += v;
  double expected = 0.0;
  for (const auto& slot : schedule) expected += rate * slot.demand_multiplier * grid.interval_seconds() / 3600.0;
  if (!(expected > 0)) throw ConfigError("schedule and demand produce no trips");
  auto scaled = cfg;
  scaled.penetration = std::min(1.0, 1.03 * static_cast<double>(target) / expected);
  auto trips = generate_trips(net, tazs, base, schedule, grid, scaled);
  if (trips.size() <= target) return trips;

  std::vector<std::size_t> keep(trips.size());
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  std::mt19937_64 rng(stage_seed(cfg.rng_seed, "trip-subset"));
  for (std::size_t i = 0; i < target; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, keep.size() - 1);
    std::swap(keep[i], keep[pick(rng)]);
  }
  keep.resize(target);
  std::sort(keep.begin(), keep.end());
  std::vector<TruthTrip> out;
  out.reserve(target);
  for (auto i : keep) out.push_back(std::move(trips[i]));
  return out;
}

void estimate_intervals(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& seed,
                        std::span<const SegmentTimeEstimate> estimates, const OdOptions& opts,
                        std::uint64_t global_seed,
                        std::map<int, OdEstimate>& out,
                        const std::function<void(int, const OdEstimate&)>& on_interval) {
  for (const auto& est : estimates) {
    auto o = opts;
    o.spsa.rng_seed = stage_seed(global_seed, "estimate-od/" + std::to_string(est.interval_index));
    auto [it, fresh] = out.insert_or_assign(est.interval_index, estimate_od(net, tazs, est, seed, o));
    if (on_interval) on_interval(it->first, it->second);
  }
}

TravelTimeMatrix assemble_matrix(const RoadNetwork& net, const TimeGrid& grid, const std::map<int, OdEstimate>& od) {
  auto m = TravelTimeMatrix::empty(net, grid);
  for (const auto& [k, e] : od) {
    if (k < 0 || k >= grid.interval_count()) throw InputError("estimated interval out of range");
    m.values.col(k) = e.result.time;
    m.mask.col(k).setConstant(true);
  }
  return m;
}

std::vector<SegmentVector> interval_flows(const std::map<int, OdEstimate>& od, const TimeGrid& grid) {
  std::map<int, SegmentVector> known;
  for (const auto& [k, e] : od) known.emplace(k, e.result.flow);
  return interpolate_intervals(known, grid.interval_count());
}

void run_pipeline(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& seed,
                  std::span<const GpsTrace> traces, const TimeGrid& grid, const PipelineOptions& opts,
                  PipelineResult& out) {
  out.refined = refine(traces, net, grid, opts.refine);
  estimate_intervals(net, tazs, seed, out.refined.estimates, opts.od, opts.seed, out.od);
  out.matrix = assemble_matrix(net, grid, out.od);
  out.completed = complete(out.matrix, row_lower_bounds(out.matrix, net), opts.completion);
  out.flows = interval_flows(out.od, grid);
}

std::vector<SegmentVector> times_by_interval(std::span<const SegmentTimeEstimate> est, const RoadNetwork& net,
                                             const TimeGrid& grid) {
  std::vector<SegmentVector> out(static_cast<std::size_t>(grid.interval_count()), net.free_flow_times());
  for (const auto& e : est) {
    if (e.interval_index < 0 || e.interval_index >= grid.interval_count()) {
      throw InputError("estimate interval out of range");
    }
    out[static_cast<std::size_t>(e.interval_index)] = e.time;
  }
  return out;
}

std::vector<SegmentVector> times_by_interval(const TravelTimeMatrix& m, const RoadNetwork& net) {
  if (m.segment_ids.size() != net.segment_count()) throw InputError("matrix rows do not cover the network");
  std::vector<SegmentVector> out;
  for (Eigen::Index k = 0; k < m.values.cols(); ++k) {
    SegmentVector v(static_cast<Eigen::Index>(net.segment_count()));
    for (std::size_t i = 0; i < m.segment_ids.size(); ++i) {
      v[static_cast<Eigen::Index>(net.segment_index(m.segment_ids[i]))] = m.values(static_cast<Eigen::Index>(i), k);
    }
    out.push_back(std::move(v));
  }
  return out;
}

MetricReport evaluate(const RoadNetwork& net, const EvaluationInput& in) {
  if (in.schedule.empty()) throw InputError("evaluation needs a non-empty schedule");
  if (!in.truth_time) throw InputError("evaluation needs scenario truth times");
  const auto n = static_cast<Eigen::Index>(net.segment_count());

  struct Pool {
    double sq = 0.0, base_sq = 0.0, est_sum = 0.0, base_sum = 0.0, truth_sum = 0.0;
    long cells = 0;
    double multiplier = 1.0;
  };
  Pool all;
  std::map<int, Pool> by_scenario;
  for (const auto& row : in.schedule) {
    const auto k = static_cast<std::size_t>(row.interval);
    if (k >= in.estimate.size() || k >= in.baseline.size()) throw InputError("estimates do not cover the schedule");
    auto t = in.truth_time->find(row.scenario);
    if (t == in.truth_time->end()) {
      throw InputError("no truth times for scenario " + std::to_string(row.scenario));
    }
    const auto& truth = t->second;
    const auto& est = in.estimate[k];
    const auto& base = in.baseline[k];
    if (truth.size() != n || est.size() != n || base.size() != n) throw InputError("time vectors do not cover the network");
    auto& sc = by_scenario[row.scenario];
    sc.multiplier = row.demand_multiplier;
    for (Pool* p : {&all, &sc}) {
      p->sq += (est - truth).squaredNorm();
      p->base_sq += (base - truth).squaredNorm();
      p->est_sum += est.sum();
      p->base_sum += base.sum();
      p->truth_sum += truth.sum();
      p->cells += n;
    }
  }

  auto agg = [](double est, double truth) {
    if (truth == 0.0) throw InputError("aggregate error needs a nonzero truth sum");
    return 100.0 * std::abs(est - truth) / truth;
  };
  MetricReport r;
  r.mse = all.sq / static_cast<double>(all.cells);
  r.baseline_mse = all.base_sq / static_cast<double>(all.cells);
  r.gain_pct = gain_pct(r.mse, r.baseline_mse);
  r.aggregate_error_pct = agg(all.est_sum, all.truth_sum);
  r.baseline_aggregate_error_pct = agg(all.base_sum, all.truth_sum);
  for (const auto& [id, p] : by_scenario) {
    ScenarioMetrics s;
    s.scenario = id;
    s.demand_multiplier = p.multiplier;
    s.mse = p.sq / static_cast<double>(p.cells);
    s.baseline_mse = p.base_sq / static_cast<double>(p.cells);
    s.gain_pct = gain_pct(s.mse, s.baseline_mse);
    s.aggregate_error_pct = agg(p.est_sum, p.truth_sum);
    s.baseline_aggregate_error_pct = agg(p.base_sum, p.truth_sum);
    r.scenarios.push_back(s);
  }
  summarize(r);

  if (!in.trips.empty()) {
    const auto acc = matching_accuracy(in.matched, in.trips, net);
    r.matching_accuracy_pct = acc.accuracy_pct;
    r.trips_scored = acc.scored;
    r.trips_excluded = acc.missing_matched + acc.missing_truth;
    r.baseline_matching_accuracy_pct = matching_accuracy_pct(in.baseline_matched, in.trips, net);
  }
  return r;
}

}  // namespace cityest
