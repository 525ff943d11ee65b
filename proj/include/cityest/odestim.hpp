#pragma once

#include "cityest/assignment.hpp"
#include "cityest/ttinfer.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace cityest {

/// Gravity seed: T_ij proportional to exp(-d_ij / deterrence_scale) over
/// centroid great-circle distances, normalized to total_trips; T_ii = 0.
DemandMatrix seed_gravity(const RoadNetwork& net, std::span<const Taz> tazs, double deterrence_scale,
                          double total_trips);

/// Mean squared time residual over observed segments plus
/// mu * ||demand - seed||^2 / ||seed||^2.
double upper_objective(const AssignmentResult& assigned, const SegmentTimeEstimate& observed,
                       const DemandMatrix& demand, const DemandMatrix& seed, double mu,
                       bool weight_by_support = false);

struct SpsaParams {
  std::optional<double> a0;  // step scale; calibrated from the initial gradient when unset
  double c0 = 0.1;           // perturbation scale in log-demand
  double alpha_decay = 0.602;
  double gamma_decay = 0.101;
  int max_outer = 100;
  double mu = 0.01;
  double stability = -1.0;        // A in a0 / (k + 1 + A)^alpha; < 0 means 10% of max_outer
  int record_every = 5;
  double max_log_step = 0.5;      // per-iteration clip on each log-demand change
  double reset_factor = 2.0;      // recorded objective above reset_factor * best: back to best, half the step
  double initial_step = 0.1;      // target first-step size when calibrating a0
  std::uint64_t rng_seed = 0;
  bool weight_by_support = false;

  void validate() const;
};

struct OdOptions {
  SpsaParams spsa{};
  AssignmentOptions ue{Objective::user_equilibrium, {}, 1e-4, 1000};
  unsigned threads = 1;
};

struct OdEstimate {
  DemandMatrix demand;
  AssignmentResult result;  // every segment
  std::vector<double> objective_trace;
  std::vector<int> trace_iterations;  // outer iteration of each recorded objective
  int outer_iterations = 0;
  double seed_objective = 0.0;
  double objective = 0.0;
};

/// Bi-level fit: SPSA over log-demand upstairs, UE assignment downstairs.
/// Returns the best recorded iterate with a final UE solve. A recorded
/// objective above reset_factor times the best sends the iterate back to the
/// best one and halves the step scale.
OdEstimate estimate_od(const RoadNetwork& net, std::span<const Taz> tazs, const SegmentTimeEstimate& observed,
                       const DemandMatrix& seed, const OdOptions& opts);

void write_state_csv(const RoadNetwork& net, const AssignmentResult& r, std::ostream& out);
/// Flow and time of every segment; other result fields are left at defaults.
AssignmentResult read_state_csv(std::istream& in, const RoadNetwork& net, const std::string& source = "state file");
void write_objective_csv(const OdEstimate& e, std::ostream& out);

}  // namespace cityest
