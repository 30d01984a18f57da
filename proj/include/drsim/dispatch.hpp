#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "drsim/grid_model.hpp"
#include "drsim/lp.hpp"

namespace drsim {

// [entity][step]
using Series2D = std::vector<std::vector<double>>;

inline constexpr double kDefaultValueOfLostLoad = 14500.0;  // $/MWh

struct DispatchProblem {
  NetworkModel model;
  Horizon horizon;
  std::vector<double> battery_loss;  // MWh, one per aggregator (model order)
  double value_of_lost_load = kDefaultValueOfLostLoad;
  double spill_price = 0.0;
  // Per aggregator: when non-empty, P_F is pinned to these values and the
  // aggregator's horizon energy row is dropped.
  std::vector<std::vector<double>> frozen_flex;

  bool is_frozen(std::size_t agg) const {
    return agg < frozen_flex.size() && !frozen_flex[agg].empty();
  }
};

// Checks the problem-level invariants and the interval feasibility of every
// aggregator's energy row. Throws ValidationError.
void check_problem(const DispatchProblem& problem);

// Column and row indices of the assembled LP.
struct LpLayout {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::vector<std::vector<std::size_t>>> block;  // [step][generator][block]
  // P_F = base + up - down; frozen aggregators have a single pinned column in
  // `flex` and npos in `flex_down`.
  std::vector<std::vector<std::size_t>> flex;                // [step][aggregator], up part
  std::vector<std::vector<std::size_t>> flex_down;           // [step][aggregator]
  std::vector<std::vector<double>> flex_base;                // [step][aggregator], MW
  std::vector<std::vector<std::size_t>> angle;               // [step][region]
  std::vector<std::vector<std::size_t>> unserved;            // [step][region]
  std::vector<std::vector<std::size_t>> spill;               // [step][region]
  std::vector<std::vector<std::size_t>> balance_row;         // [step][region]
  std::vector<std::vector<std::size_t>> line_row;            // [step][line], npos if unlimited
  std::vector<std::size_t> energy_row;                       // [aggregator], npos if frozen
};

struct BuiltProblem {
  lp::Problem lp;
  LpLayout layout;
};

BuiltProblem build(const DispatchProblem& problem);

struct DispatchSolution {
  Horizon horizon;
  std::vector<std::string> generator_ids;
  std::vector<GeneratorKind> generator_kinds;
  std::vector<std::string> generator_regions;
  std::vector<std::string> region_ids;
  std::vector<AggregatorProfile> aggregators;
  std::vector<double> battery_loss;

  Series2D generation;       // [generator][step], MW
  Series2D flexible_demand;  // [aggregator][step], MW
  Series2D angles;           // [region][step], rad
  Series2D line_flows;       // [line][step], MW
  Series2D unserved;         // [region][step], MW
  Series2D spill;            // [region][step], MW
  Series2D nodal_price;      // [region][step], $/MWh
  double objective = 0.0;    // $
  std::size_t iterations = 0;

  std::size_t aggregator(const std::string& region) const;
  bool has_unserved(double tol = 1e-3) const;
};

// Charging is positive, discharging negative.
double battery_power(const DispatchSolution& solution, const std::string& region, std::size_t step);
double nett_demand(const DispatchSolution& solution, const std::string& region, std::size_t step);

/// Keeps the LP and its simplex basis alive so that bound-only changes
/// (battery losses, charge caps) re-solve from the previous optimum.
class DispatchSession {
 public:
  explicit DispatchSession(DispatchProblem problem, lp::SolverOptions options = {});
  ~DispatchSession();
  DispatchSession(DispatchSession&&) noexcept;
  DispatchSession& operator=(DispatchSession&&) noexcept;

  const DispatchProblem& problem() const { return problem_; }

  void set_battery_loss(std::size_t agg, double loss);
  void set_charge_cap(std::size_t agg, double cap);

  DispatchSolution solve();

  void write_mps(std::ostream& out) const;

 private:
  DispatchProblem problem_;
  LpLayout layout_;
  std::unique_ptr<lp::Simplex> simplex_;
};

DispatchSolution solve(const DispatchProblem& problem);

struct BalanceResiduals {
  double nodal_balance = 0.0;     // max |supply - demand| over buses and steps, MW
  double flow_consistency = 0.0;  // max |reported flow - B * angle difference|, MW
  double flow_limit = 0.0;        // max line-limit violation, MW
  double energy_neutrality = 0.0; // max |sum P_F dh - sum(P_U - P_PV) dh - E_loss|, MWh (unfrozen only)
};

BalanceResiduals check_residuals(const DispatchProblem& problem, const DispatchSolution& solution);

}  // namespace drsim
