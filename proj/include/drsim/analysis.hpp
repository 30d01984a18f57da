#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "drsim/dispatch.hpp"

namespace drsim {

inline constexpr double kActiveSlack = 1e-3;  // MW; smaller spill or unserved is noise

struct BalancingMetrics {
  double spilled_energy = 0.0;     // MWh
  double spilled_hours_pct = 0.0;  // percent of steps with any spill
  double unserved_energy = 0.0;    // MWh
  std::size_t unserved_hours = 0;
  double backup_energy = 0.0;  // MWh from gas turbines
  std::size_t spilled_hours = 0;
  std::size_t hours = 0;  // steps covered

  BalancingMetrics& operator+=(const BalancingMetrics& other);
};

BalancingMetrics balancing_metrics(const DispatchSolution& solution);
BalancingMetrics balancing_metrics(const std::vector<DispatchSolution>& solutions);

struct LoadabilityResult {
  std::vector<double> per_hour;  // MW, total system demand at the last feasible step
  double average = 0.0;          // MW
  std::string target_region;
  double step_size = 10.0;  // MW

  // Appends another run's hours and refreshes the average.
  void append(const LoadabilityResult& other);
};

inline constexpr double kDefaultLoadabilityStep = 10.0;  // MW

/// Raises the nett demand of `target_region` in steps of `step_size` MW from
/// the solved operating point. The extra load is shared equally by the
/// generators of `pickup_region` (default: the target region); a generator
/// that reaches its available output drops out and its share goes to the
/// rest. A step is feasible while the pickup generators can cover it and the
/// recomputed DC flows respect every line limit. Demand is counted as P_L + P_U
/// summed over regions, plus the added load.
LoadabilityResult loadability(const NetworkModel& model, const DispatchSolution& solution,
                              const std::string& target_region,
                              double step_size = kDefaultLoadabilityStep,
                              const std::optional<std::string>& pickup_region = std::nullopt);

}  // namespace drsim
