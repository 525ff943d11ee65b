#pragma once

#include "cityest/assignment.hpp"
#include "cityest/network.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

namespace cityest {

struct GroundTruthScenario {
  int id = 0;
  double demand_multiplier = 1.0;
  SegmentVector time;
  SegmentVector flow;
};

/// 34 multipliers on a uniform grid over [0.2, 2.0].
std::vector<double> default_multipliers();

/// One system-optimal assignment per demand multiplier, in multiplier order.
std::vector<GroundTruthScenario> gen_scenarios(const RoadNetwork& net, std::span<const Taz> tazs,
                                               const DemandMatrix& base, std::span<const double> multipliers,
                                               const AssignmentOptions& opts = {Objective::system_optimum, {}, 1e-5,
                                                                                2000});

struct TruthTrip {
  std::int64_t vehicle_id = 0;
  double departure = 0.0;
  std::vector<std::size_t> path;     // segment indices
  std::vector<double> entry_times;   // one per path position
  double arrival = 0.0;
};

/// Routes a trip on the scenario's shortest-time path; throws InputError when
/// the destination is unreachable.
TruthTrip simulate_trip(const RoadNetwork& net, std::span<const Taz> tazs, TazId origin, TazId dest,
                        const SegmentVector& scenario_time, double departure, std::int64_t vehicle_id);

struct GpsPoint {
  double t = 0.0;
  double lat = 0.0;
  double lon = 0.0;
};

struct GpsTrace {
  std::int64_t vehicle_id = 0;
  std::vector<GpsPoint> points;
};

struct ProbeConfig {
  double sampling_period = 60.0;
  double gps_sigma = 10.0;
  double penetration = 1.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Exact on-path position of the trip at time t (clamped to departure/arrival).
LatLon position_at(const TruthTrip& trip, const RoadNetwork& net, double t);

/// Samples at departure, departure + period, ... and at arrival; Gaussian noise
/// seeded with rng_seed + vehicle_id.
GpsTrace sample_trace(const TruthTrip& trip, const RoadNetwork& net, const ProbeConfig& cfg);

struct TimestampTruth {
  SegmentVector time;
  std::vector<int> traversals;  // per segment
  std::vector<bool> low_coverage;
};

/// Timestamp-model ground truth: per-segment mean of interpolated exit-minus-entry
/// times over dense traces of known paths. Untraversed segments fall back to
/// free-flow time and are flagged.
TimestampTruth derive_truth_timestamp(std::span<const GpsTrace> traces, std::span<const TruthTrip> trips,
                                      const RoadNetwork& net, int min_traversals = 1);

/// Which scenario drives each interval of the week.
struct IntervalScenario {
  int interval = 0;
  double demand_multiplier = 1.0;
  const SegmentVector* time = nullptr;
};

/// Probe trips for the scheduled intervals: Poisson counts with mean
/// demand * multiplier * interval hours * penetration, uniform departures.
std::vector<TruthTrip> generate_trips(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& base,
                                      std::span<const IntervalScenario> schedule, const TimeGrid& grid,
                                      const ProbeConfig& cfg);

std::vector<GpsTrace> read_traces_csv(std::istream& in, const std::string& source = "trace file");
void write_traces_csv(std::span<const GpsTrace> traces, std::ostream& out);

std::vector<TruthTrip> read_trips_csv(std::istream& in, const RoadNetwork& net);
void write_trips_csv(std::span<const TruthTrip> trips, const RoadNetwork& net, std::ostream& out);

void write_truth_csv(const RoadNetwork& net, const SegmentVector& time, const SegmentVector& flow, std::ostream& out);
/// Returns (time, flow).
std::pair<SegmentVector, SegmentVector> read_truth_csv(std::istream& in, const RoadNetwork& net);

}  // namespace cityest
