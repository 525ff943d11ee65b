#include "cityest/tracegen.hpp"

#include "cityest/csv.hpp"
#include "cityest/errors.hpp"
#include "cityest/routing.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

namespace cityest {

std::vector<double> default_multipliers() {
  constexpr int n = 34;
  std::vector<double> m(n);
  for (int i = 0; i < n; ++i) m[static_cast<std::size_t>(i)] = 0.2 + (2.0 - 0.2) * i / (n - 1);
  return m;
}

std::vector<GroundTruthScenario> gen_scenarios(const RoadNetwork& net, std::span<const Taz> tazs,
                                               const DemandMatrix& base, std::span<const double> multipliers,
                                               const AssignmentOptions& opts) {
  std::vector<GroundTruthScenario> out;
  int id = 0;
  for (double m : multipliers) {
    if (!(m > 0) || !std::isfinite(m)) throw ConfigError("scenario multipliers must be positive");
    auto r = solve(net, tazs, base.scaled(m), opts);
    out.push_back({id++, m, std::move(r.time), std::move(r.flow)});
  }
  return out;
}

TruthTrip simulate_trip(const RoadNetwork& net, std::span<const Taz> tazs, TazId origin, TazId dest,
                        const SegmentVector& scenario_time, double departure, std::int64_t vehicle_id) {
  auto centroid = [&](TazId id) {
    for (const auto& t : tazs)
      if (t.id == id) return t.centroid_node;
    throw InputError("unknown TAZ " + std::to_string(id));
  };
  auto path = shortest_path(net, centroid(origin), centroid(dest), scenario_time);
  if (!path) {
    throw InputError("TAZ " + std::to_string(dest) + " unreachable from TAZ " + std::to_string(origin));
  }
  TruthTrip trip{vehicle_id, departure, std::move(path->segments), {}, departure};
  double t = departure;
  for (auto s : trip.path) {
    trip.entry_times.push_back(t);
    t += scenario_time[static_cast<Eigen::Index>(s)];
  }
  trip.arrival = t;
  return trip;
}

void ProbeConfig::validate() const {
  if (!(sampling_period > 0) || !(gps_sigma >= 0) || !(penetration > 0 && penetration <= 1)) {
    throw ConfigError("probe config needs sampling_period > 0, gps_sigma >= 0, 0 < penetration <= 1");
  }
}

LatLon position_at(const TruthTrip& trip, const RoadNetwork& net, double t) {
  if (trip.path.empty()) throw InputError("trip without path");
  t = std::clamp(t, trip.departure, trip.arrival);
  auto it = std::upper_bound(trip.entry_times.begin(), trip.entry_times.end(), t);
  auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - trip.entry_times.begin()) - 1));
  const double entry = trip.entry_times[i];
  const double exit = i + 1 < trip.path.size() ? trip.entry_times[i + 1] : trip.arrival;
  const auto seg = trip.path[i];
  const double frac = exit > entry ? (t - entry) / (exit - entry) : 1.0;
  return net.point_on(seg, frac * net.segment(seg).length);
}

GpsTrace sample_trace(const TruthTrip& trip, const RoadNetwork& net, const ProbeConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed + static_cast<std::uint64_t>(trip.vehicle_id));
  std::normal_distribution<double> noise(0.0, 1.0);
  GpsTrace trace{trip.vehicle_id, {}};

  auto emit = [&](double t) {
    LatLon p = position_at(trip, net, t);
    if (cfg.gps_sigma > 0) {
      const auto mpd = meters_per_degree(p.lat);
      const double east = cfg.gps_sigma * noise(rng);
      const double north = cfg.gps_sigma * noise(rng);
      p.lat += north / mpd.lat;
      p.lon += east / mpd.lon;
    }
    trace.points.push_back({t, p.lat, p.lon});
  };
  for (long k = 0;; ++k) {
    const double t = trip.departure + static_cast<double>(k) * cfg.sampling_period;
    if (t >= trip.arrival) break;
    emit(t);
  }
  emit(trip.arrival);
  return trace;
}

TimestampTruth derive_truth_timestamp(std::span<const GpsTrace> traces, std::span<const TruthTrip> trips,
                                      const RoadNetwork& net, int min_traversals) {
  const auto n = net.segment_count();
  std::vector<double> sum(n, 0.0);
  TimestampTruth out;
  out.traversals.assign(n, 0);

  std::unordered_map<std::int64_t, const TruthTrip*> by_vehicle;
  for (const auto& t : trips) by_vehicle[t.vehicle_id] = &t;

  for (const auto& trace : traces) {
    auto it = by_vehicle.find(trace.vehicle_id);
    if (it == by_vehicle.end() || trace.points.size() < 2) continue;
    const auto& path = it->second->path;
    std::vector<double> cum(path.size() + 1, 0.0);
    for (std::size_t i = 0; i < path.size(); ++i) cum[i + 1] = cum[i] + net.segment(path[i]).length;

    // Along-path distance of every sample, monotone along the known path.
    std::vector<double> along;
    std::size_t j0 = 0;
    for (const auto& p : trace.points) {
      double best = std::numeric_limits<double>::infinity(), pos = 0.0;
      std::size_t best_j = j0;
      for (std::size_t j = j0; j < path.size(); ++j) {
        auto c = project_onto(net, path[j], {p.lat, p.lon});
        if (c.distance < best) {
          best = c.distance;
          pos = cum[j] + c.offset;
          best_j = j;
        }
      }
      j0 = best_j;
      along.push_back(along.empty() ? pos : std::max(pos, along.back()));
    }

    auto time_at = [&](double dist) -> std::optional<double> {
      if (dist < along.front() - 1e-9 || dist > along.back() + 1e-9) return std::nullopt;
      auto k = static_cast<std::size_t>(std::upper_bound(along.begin(), along.end(), dist) - along.begin());
      if (k == 0) return trace.points.front().t;
      if (k >= along.size()) {
        // dist equals the last sample's position: first sample reaching it.
        k = static_cast<std::size_t>(std::lower_bound(along.begin(), along.end(), dist) - along.begin());
        return trace.points[k].t;
      }
      const double a0 = along[k - 1], a1 = along[k];
      const double t0 = trace.points[k - 1].t, t1 = trace.points[k].t;
      return a1 > a0 ? t0 + (dist - a0) / (a1 - a0) * (t1 - t0) : t0;
    };

    for (std::size_t i = 0; i < path.size(); ++i) {
      auto entry = time_at(cum[i]);
      auto exit = time_at(cum[i + 1]);
      if (!entry || !exit) continue;
      sum[path[i]] += *exit - *entry;
      ++out.traversals[path[i]];
    }
  }

  out.time = net.free_flow_times();
  out.low_coverage.assign(n, false);
  for (std::size_t s = 0; s < n; ++s) {
    if (out.traversals[s] > 0) out.time[static_cast<Eigen::Index>(s)] = sum[s] / out.traversals[s];
    out.low_coverage[s] = out.traversals[s] < min_traversals;
  }
  return out;
}

std::vector<TruthTrip> generate_trips(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& base,
                                      std::span<const IntervalScenario> schedule, const TimeGrid& grid,
                                      const ProbeConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed);
  const double hours = grid.interval_seconds() / 3600.0;
  std::vector<TruthTrip> trips;
  std::int64_t next_vehicle = 1;
  for (const auto& slot : schedule) {
    if (!slot.time) throw ConfigError("interval schedule entry without scenario times");
    const double start = grid.interval_start(slot.interval);
    std::uniform_real_distribution<double> depart(start, start + grid.interval_seconds());
    for (const auto& [key, rate] : base.entries()) {
      if (key.first == key.second || rate <= 0) continue;
      const double mean = rate * slot.demand_multiplier * hours * cfg.penetration;
      std::poisson_distribution<long> count(mean);
      const long k = count(rng);
      for (long i = 0; i < k; ++i) {
        const double dep = depart(rng);
        trips.push_back(simulate_trip(net, tazs, key.first, key.second, *slot.time, dep, next_vehicle++));
      }
    }
  }
  return trips;
}

std::vector<GpsTrace> read_traces_csv(std::istream& in, const std::string& source) {
  CsvReader csv(in, {"vehicle_id", "timestamp", "lat", "lon"}, source);
  std::vector<GpsTrace> traces;
  std::unordered_map<std::int64_t, std::size_t> pos;
  while (csv.next()) {
    const auto id = csv.get_int(0);
    GpsPoint p{csv.get_double(1), csv.get_double(2), csv.get_double(3)};
    if (p.lat < -90 || p.lat > 90 || p.lon < -180 || p.lon > 180) throw ParseError(source + ": bad coordinate", csv.line());
    auto [it, fresh] = pos.emplace(id, traces.size());
    if (fresh) traces.push_back({id, {}});
    auto& pts = traces[it->second].points;
    if (!pts.empty() && !(p.t > pts.back().t)) {
      throw ParseError(source + ": timestamps must increase within vehicle " + std::to_string(id), csv.line());
    }
    pts.push_back(p);
  }
  std::sort(traces.begin(), traces.end(), [](const auto& a, const auto& b) { return a.vehicle_id < b.vehicle_id; });
  return traces;
}

void write_traces_csv(std::span<const GpsTrace> traces, std::ostream& out) {
  CsvWriter csv(out, {"vehicle_id", "timestamp", "lat", "lon"});
  for (const auto& tr : traces)
    for (const auto& p : tr.points) {
      csv << tr.vehicle_id << p.t << p.lat << p.lon;
      csv.end_row();
    }
}

std::vector<TruthTrip> read_trips_csv(std::istream& in, const RoadNetwork& net) {
  CsvReader csv(in, {"vehicle_id", "departure_s", "path"}, "trip file");
  std::vector<TruthTrip> trips;
  while (csv.next()) {
    TruthTrip t;
    t.vehicle_id = csv.get_int(0);
    t.departure = csv.get_double(1);
    for (const auto& part : split(csv.get(2), '/')) {
      if (part.empty()) continue;
      auto s = net.find_segment(std::stoll(part));
      if (!s) throw ParseError("trip file: unknown segment " + part, csv.line());
      t.path.push_back(*s);
    }
    trips.push_back(std::move(t));
  }
  return trips;
}

void write_trips_csv(std::span<const TruthTrip> trips, const RoadNetwork& net, std::ostream& out) {
  CsvWriter csv(out, {"vehicle_id", "departure_s", "path"});
  for (const auto& t : trips) {
    std::string path;
    for (std::size_t i = 0; i < t.path.size(); ++i) {
      if (i) path += '/';
      path += std::to_string(net.segment(t.path[i]).id);
    }
    csv << t.vehicle_id << t.departure << path;
    csv.end_row();
  }
}

void write_truth_csv(const RoadNetwork& net, const SegmentVector& time, const SegmentVector& flow, std::ostream& out) {
  CsvWriter csv(out, {"segment_id", "time_s", "flow_vph"});
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    const auto i = static_cast<Eigen::Index>(s);
    csv << net.segment(s).id << time[i] << flow[i];
    csv.end_row();
  }
}

std::pair<SegmentVector, SegmentVector> read_truth_csv(std::istream& in, const RoadNetwork& net) {
  CsvReader csv(in, {"segment_id", "time_s", "flow_vph"}, "truth file");
  const auto n = static_cast<Eigen::Index>(net.segment_count());
  SegmentVector time = SegmentVector::Constant(n, std::nan("")), flow = SegmentVector::Zero(n);
  while (csv.next()) {
    auto s = net.find_segment(csv.get_int(0));
    if (!s) throw ParseError("truth file: unknown segment", csv.line());
    time[static_cast<Eigen::Index>(*s)] = csv.get_double(1);
    flow[static_cast<Eigen::Index>(*s)] = csv.get_double(2);
  }
  if (!time.allFinite()) throw InputError("truth file does not cover every segment");
  return {time, flow};
}

}  // namespace cityest
