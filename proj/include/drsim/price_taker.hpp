#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "drsim/dispatch.hpp"

namespace drsim {

enum class PriceMode {
  Nodal,   // each region sees its own balance-row dual
  System,  // one demand-weighted price for every region
};

const char* to_string(PriceMode mode);
PriceMode parse_price_mode(const std::string& text);

struct PriceSignal {
  std::vector<std::string> regions;
  Series2D price;  // [region][step], $/MWh

  const std::vector<double>& region(const std::string& id) const;
};

// Throws ValidationError unless every price is finite and nonnegative.
void check_signal(const PriceSignal& signal);

// P_F pinned to the users' own consumption nett of PV, clipped to the flex bounds.
std::vector<double> unshifted_flex(const AggregatorProfile& agg, const Horizon& horizon);

// Copy of the problem with every aggregator's P_F pinned at unshifted_flex.
DispatchProblem without_flexibility(const DispatchProblem& problem);

PriceSignal derive_price_signal(const DispatchSolution& base, PriceMode mode);

// Solves the problem with flexibility disabled and reads its prices.
PriceSignal derive_price_signal(const DispatchProblem& problem, PriceMode mode);

/// Cheapest schedule for one aggregator against a fixed price: P_F starts at
/// flex_min and the cheapest steps are filled to flex_max until the horizon
/// energy row is met. Equal prices fill the earlier step first.
std::vector<double> taker_response(const AggregatorProfile& agg, const std::vector<double>& price,
                                   const Horizon& horizon, double battery_loss);

std::vector<std::vector<double>> taker_responses(const DispatchProblem& problem,
                                                 const PriceSignal& signal);

// Redispatch with P_F frozen at the responses.
DispatchSolution taker_dispatch(const DispatchProblem& problem,
                                const std::vector<std::vector<double>>& responses);

// region,step,price
void write_price_csv(std::ostream& out, const PriceSignal& signal);
PriceSignal read_price_csv(std::istream& in, const std::string& source = "price signal");

}  // namespace drsim
