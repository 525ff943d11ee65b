#pragma once

#include "cityest/network.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

namespace cityest {

/// Origin-destination trip rates (trips/hour) keyed by TAZ id pair.
class DemandMatrix {
 public:
  using Key = std::pair<TazId, TazId>;

  void set(TazId origin, TazId dest, double trips_per_hour);
  double get(TazId origin, TazId dest) const;
  const std::map<Key, double>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  double total() const;

  DemandMatrix scaled(double factor) const;
  bool operator==(const DemandMatrix&) const = default;

 private:
  std::map<Key, double> entries_;
};

DemandMatrix read_demand_csv(std::istream& in);
void write_demand_csv(const DemandMatrix& d, std::ostream& out);

struct VdfParams {
  double alpha = 0.15;
  double beta = 4.0;
};

/// BPR volume-delay: t0 * (1 + alpha * (flow / capacity)^beta).
template <typename Scalar>
Scalar bpr_time(Scalar free_flow_time, Scalar flow, Scalar capacity, const VdfParams& p) {
  using std::pow;
  return free_flow_time * (Scalar(1) + Scalar(p.alpha) * pow(flow / capacity, Scalar(p.beta)));
}

/// Link performance functions, evaluated for all segments at once.
class VolumeDelay {
 public:
  virtual ~VolumeDelay() = default;
  virtual SegmentVector time(const SegmentVector& flow) const = 0;
  virtual SegmentVector derivative(const SegmentVector& flow) const = 0;
  /// flow * second derivative of time.
  virtual SegmentVector flow_second_derivative(const SegmentVector& flow) const = 0;
  /// Integral of time from 0 to flow (Beckmann terms).
  virtual SegmentVector integral(const SegmentVector& flow) const = 0;
};

class BprDelay final : public VolumeDelay {
 public:
  BprDelay(const RoadNetwork& net, VdfParams params);

  SegmentVector time(const SegmentVector& flow) const override;
  SegmentVector derivative(const SegmentVector& flow) const override;
  SegmentVector flow_second_derivative(const SegmentVector& flow) const override;
  SegmentVector integral(const SegmentVector& flow) const override;

 private:
  SegmentVector t0_, cap_;
  VdfParams p_;
};

enum class Objective { user_equilibrium, system_optimum };

/// Demand resolved to centroid node indices, grouped by origin in TAZ-id order.
class OdTable {
 public:
  struct Destination {
    std::size_t node;
    double demand;
    TazId origin_taz, dest_taz;
  };
  struct Origin {
    std::size_t node;
    std::vector<Destination> dests;
  };

  /// Throws InputError for demand referencing unknown TAZs or invalid values.
  OdTable(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& demand);
  const std::vector<Origin>& origins() const { return origins_; }

 private:
  std::vector<Origin> origins_;
};

struct AonLoad {
  SegmentVector flow;
  std::vector<std::pair<TazId, TazId>> unreachable;
  double dropped_demand = 0.0;
};

/// Loads every OD pair's demand onto its current least-cost path.
AonLoad all_or_nothing(const RoadNetwork& net, const OdTable& od, const SegmentVector& cost);
AonLoad all_or_nothing(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& demand,
                       const SegmentVector& cost);

/// (sum v*t - sum aon(t)*t) / sum v*t; zero when sum v*t is zero.
double relative_gap(const RoadNetwork& net, const OdTable& od, const SegmentVector& flow, const SegmentVector& cost);
double relative_gap(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& demand,
                    const SegmentVector& flow, const SegmentVector& cost);

struct AssignmentOptions {
  Objective objective = Objective::user_equilibrium;
  VdfParams vdf{};
  double tol = 1e-4;
  int max_iter = 500;
  double line_search_precision = 1e-10;
};

struct AssignmentResult {
  SegmentVector flow;  // veh/h
  SegmentVector time;  // s
  double relative_gap = 0.0;
  int iterations = 0;
  double total_system_travel_time = 0.0;  // veh*s/h
  bool converged = false;
  std::vector<std::pair<TazId, TazId>> unreachable;
};

/// Bi-conjugate Frank-Wolfe with exact (bisection) line search. Returns the
/// iterate with the smallest relative gap.
AssignmentResult solve(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& demand,
                       const AssignmentOptions& opts);
/// Same, with a caller-supplied link performance model (times come from it).
AssignmentResult solve(const RoadNetwork& net, std::span<const Taz> tazs, const DemandMatrix& demand,
                       const VolumeDelay& delay, const AssignmentOptions& opts);

void write_assignment_csv(const RoadNetwork& net, const AssignmentResult& r, std::ostream& out);

}  // namespace cityest
