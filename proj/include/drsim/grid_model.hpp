#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace drsim {

// Time discretization of one dispatch horizon.
struct Horizon {
  std::size_t steps = 24;
  double step_length = 1.0;  // hours
};

struct Region {
  std::string id;
  std::string name;
};

// Inter-region corridor. Flow from -> to is susceptance * (angle_from - angle_to).
struct Line {
  std::string from;
  std::string to;
  double susceptance = 1.0;  // MW per radian
  double flow_min = 0.0;     // MW
  double flow_max = 0.0;     // MW
};

struct BidBlock {
  double price = 0.0;     // $/MWh
  double capacity = 0.0;  // MW
};

enum class GeneratorKind { Coal, GasTurbine, Hydro, Biomass, Wind, Csp };

const char* to_string(GeneratorKind kind);
std::optional<GeneratorKind> parse_generator_kind(const std::string& text);

struct Generator {
  std::string id;
  std::string region;
  double p_min = 0.0;  // MW
  double p_max = 0.0;  // MW
  std::vector<BidBlock> blocks;
  GeneratorKind kind = GeneratorKind::Coal;
  // Per-step availability factor in [0, 1]; empty means always 1.
  std::vector<double> availability;
  // Renewable output that is injected whenever available; surplus shows up as spill.
  bool must_take = false;

  bool renewable() const { return kind == GeneratorKind::Wind || kind == GeneratorKind::Csp; }
  double max_output(std::size_t step) const;
  double min_output(std::size_t step) const;
};

// Splits p_max into equal-width blocks, one per price.
std::vector<BidBlock> equal_blocks(double p_max, const std::vector<double>& prices);

// Bid-curve cost of producing `output` MW for one hour, filling blocks in order.
double generation_cost(const Generator& gen, double output);

struct StorageParams {
  double soc_min = 0.0;      // MWh
  double soc_max = 0.0;      // MWh
  double soc_initial = 0.0;  // MWh
  double round_trip_efficiency = 1.0;
};

struct AggregatorProfile {
  std::string region;
  std::vector<double> inflexible_load;  // P_L, MW
  std::vector<double> responsive_load;  // P_U, MW (pre-DR demand of responsive users)
  std::vector<double> pv;               // MW
  StorageParams storage;
  std::vector<double> flex_min;  // MW
  double charge_cap = 0.0;       // MW, set by calibration

  double flex_max(std::size_t step) const { return charge_cap + responsive_load.at(step); }
};

struct NetworkModel {
  std::vector<Region> regions;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  std::vector<AggregatorProfile> aggregators;
  std::string reference_region;

  std::optional<std::size_t> region_index(const std::string& id) const;
  std::optional<std::size_t> aggregator_index(const std::string& region) const;
  std::optional<std::size_t> generator_index(const std::string& id) const;
};

struct Violation {
  std::string entity;
  std::string rule;
};

// Checks every structural invariant of the model against the horizon. An empty
// result means the model is well formed.
std::vector<Violation> validate(const NetworkModel& model, const Horizon& horizon = {});

// Throws ValidationError listing all violations.
void require_valid(const NetworkModel& model, const Horizon& horizon = {});

// Energy the aggregator's users need over the horizon: sum (P_L + P_U) dh.
double total_required_energy(const AggregatorProfile& agg, const Horizon& horizon);

}  // namespace drsim
