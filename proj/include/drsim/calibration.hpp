#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "drsim/dispatch.hpp"

namespace drsim {

enum class CalibrationMode {
  Joint,       // all charge caps rise by alpha together
  Sequential,  // one aggregator at a time, in model order
};

struct CalibrationConfig {
  // MW. Unset: 1% of each aggregator's peak responsive load.
  std::optional<double> alpha;
  // MWh, first step of the loss search. Unset: epsilon.
  std::optional<double> beta;
  double epsilon = 1.0;  // MWh
  std::size_t max_outer_iters = 400;
  std::size_t max_inner_iters = 20000;
  CalibrationMode mode = CalibrationMode::Joint;
  double soc_tolerance = 1e-6;  // MWh
};

void check_config(const CalibrationConfig& config);

// Per-aggregator steps after resolving the defaults against the model.
std::vector<double> resolve_alpha(const CalibrationConfig& config, const NetworkModel& model,
                                  const Horizon& horizon);
std::vector<double> resolve_beta(const CalibrationConfig& config, const NetworkModel& model);

// SOC(0) = soc_initial, SOC(h) = SOC(h-1) + P_B(h-1) * dh.
std::vector<double> soc_trajectory(const DispatchSolution& solution, std::size_t agg);

// (1 - eta) * sum of positive battery power * dh.
double battery_energy_loss(const DispatchSolution& solution, std::size_t agg);

// SOC limits are enforced from the second step on; the first value is the
// initial condition.
bool soc_within_limits(const std::vector<double>& soc, const StorageParams& storage,
                       double tolerance = 1e-6);

struct LossCalibration {
  std::vector<double> battery_loss;  // per aggregator
  std::vector<double> gap;           // recomputed minus guess at exit
  std::size_t iterations = 0;
  DispatchSolution solution;
};

/// Fixed-point search for the battery loss of every aggregator flagged in
/// `active`: start from zero, solve, recompute the loss and move the guess
/// towards it by beta while they differ by more than epsilon. The step halves
/// each time an aggregator's guess reverses direction.
/// If the steps shrink below epsilon / 1000 while a gap is still above
/// epsilon (the loss jumps across the guess), returns the closest iterate
/// seen, with its gap.
/// Throws NonConvergence after max_inner_iters.
LossCalibration calibrate_loss(DispatchSession& session, const std::vector<bool>& active,
                               const std::vector<double>& beta, const CalibrationConfig& config);

// Single aggregator with a given charge cap; the others keep the template's losses.
LossCalibration calibrate_loss(const DispatchProblem& problem, std::size_t agg, double charge_cap,
                               const CalibrationConfig& config);

enum class CalibrationStatus {
  Converged,          // charge_cap + alpha violates the SOC limits
  IterationCap,       // still within limits after max_outer_iters
  DegenerateStorage,  // soc_min == soc_max
  ViolatedAtZero,     // limits already violated with a zero charge cap
};

const char* to_string(CalibrationStatus status);

struct AggregatorCalibration {
  std::string region;
  double charge_cap = 0.0;    // MW
  double battery_loss = 0.0;  // MWh, from the first calibration day
  double loss_gap = 0.0;      // MWh, largest |recomputed - guess| over the days
  double alpha = 0.0;
  std::vector<std::vector<double>> soc;  // [day][step]
  CalibrationStatus status = CalibrationStatus::Converged;
  std::size_t iterations = 0;  // outer iterations spent on this aggregator
  std::size_t inner_iterations = 0;

  bool converged() const { return status == CalibrationStatus::Converged; }
};

struct StorageCalibration {
  std::vector<AggregatorCalibration> aggregators;
  // Final solutions, one per calibration day.
  std::vector<DispatchSolution> solutions;
};

/// Heuristic search for the largest charge caps whose SOC trajectories stay
/// within limits on every calibration day. Each trial runs the loss search
/// and reconstructs SOC; the caps reported are those of the last trial with
/// no violation.
StorageCalibration calibrate_charge_cap(const std::vector<DispatchProblem>& days,
                                        const CalibrationConfig& config);
StorageCalibration calibrate_charge_cap(const DispatchProblem& problem,
                                        const CalibrationConfig& config);

// aggregator,charge_cap,battery_loss,iterations,converged
void write_calibration_csv(std::ostream& out, const StorageCalibration& calibration);

}  // namespace drsim
