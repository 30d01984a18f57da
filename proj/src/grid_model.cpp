#include "drsim/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "drsim/errors.hpp"

namespace drsim {

const char* to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::Coal: return "coal";
    case GeneratorKind::GasTurbine: return "gas_turbine";
    case GeneratorKind::Hydro: return "hydro";
    case GeneratorKind::Biomass: return "biomass";
    case GeneratorKind::Wind: return "wind";
    case GeneratorKind::Csp: return "csp";
  }
  return "unknown";
}

std::optional<GeneratorKind> parse_generator_kind(const std::string& text) {
  static const std::map<std::string, GeneratorKind> kinds = {
      {"coal", GeneratorKind::Coal},   {"gas_turbine", GeneratorKind::GasTurbine},
      {"gt", GeneratorKind::GasTurbine}, {"hydro", GeneratorKind::Hydro},
      {"biomass", GeneratorKind::Biomass}, {"wind", GeneratorKind::Wind},
      {"csp", GeneratorKind::Csp}};
  auto it = kinds.find(text);
  if (it == kinds.end()) return std::nullopt;
  return it->second;
}

double Generator::max_output(std::size_t step) const {
  if (availability.empty()) return p_max;
  return p_max * availability.at(step);
}

double Generator::min_output(std::size_t step) const {
  const double cap = max_output(step);
  return must_take ? cap : std::min(p_min, cap);
}

std::vector<BidBlock> equal_blocks(double p_max, const std::vector<double>& prices) {
  std::vector<BidBlock> blocks;
  if (prices.empty()) return blocks;
  const double width = p_max / static_cast<double>(prices.size());
  double assigned = 0.0;
  for (std::size_t b = 0; b < prices.size(); ++b) {
    // Last block takes the rounding remainder so capacities sum to p_max exactly.
    const double cap = (b + 1 == prices.size()) ? p_max - assigned : width;
    blocks.push_back(BidBlock{prices[b], cap});
    assigned += cap;
  }
  return blocks;
}

double generation_cost(const Generator& gen, double output) {
  double remaining = std::max(0.0, output);
  double cost = 0.0;
  for (const auto& block : gen.blocks) {
    const double used = std::min(remaining, block.capacity);
    cost += used * block.price;
    remaining -= used;
    if (remaining <= 0.0) break;
  }
  return cost;
}

std::optional<std::size_t> NetworkModel::region_index(const std::string& id) const {
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].id == id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> NetworkModel::aggregator_index(const std::string& region) const {
  for (std::size_t i = 0; i < aggregators.size(); ++i) {
    if (aggregators[i].region == region) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> NetworkModel::generator_index(const std::string& id) const {
  for (std::size_t i = 0; i < generators.size(); ++i) {
    if (generators[i].id == id) return i;
  }
  return std::nullopt;
}

namespace {

constexpr double kCapacityTol = 1e-6;

void check_series(std::vector<Violation>& out, const std::string& entity, const char* name,
                  const std::vector<double>& series, std::size_t steps, bool nonnegative) {
  if (series.size() != steps) {
    std::ostringstream msg;
    msg << name << " has " << series.size() << " steps, horizon has " << steps;
    out.push_back({entity, msg.str()});
    return;
  }
  for (std::size_t h = 0; h < series.size(); ++h) {
    if (!std::isfinite(series[h])) {
      out.push_back({entity, std::string(name) + " is not finite at step " + std::to_string(h)});
      return;
    }
    if (nonnegative && series[h] < 0.0) {
      out.push_back({entity, std::string(name) + " is negative at step " + std::to_string(h)});
      return;
    }
  }
}

}  // namespace

std::vector<Violation> validate(const NetworkModel& model, const Horizon& horizon) {
  std::vector<Violation> out;
  if (horizon.steps < 1) out.push_back({"horizon", "steps must be at least 1"});
  if (!(horizon.step_length > 0.0)) out.push_back({"horizon", "step_length must be positive"});

  std::set<std::string> region_ids;
  for (const auto& r : model.regions) {
    if (!region_ids.insert(r.id).second) out.push_back({"region " + r.id, "duplicate region id"});
  }
  if (!region_ids.count(model.reference_region)) {
    out.push_back({"model", "reference region '" + model.reference_region + "' does not exist"});
  }

  for (std::size_t l = 0; l < model.lines.size(); ++l) {
    const auto& line = model.lines[l];
    const std::string entity = "line " + line.from + "-" + line.to;
    if (!region_ids.count(line.from) || !region_ids.count(line.to)) {
      out.push_back({entity, "endpoint region does not exist"});
    }
    if (line.from == line.to) out.push_back({entity, "from and to must differ"});
    if (line.flow_min > line.flow_max) out.push_back({entity, "flow_min exceeds flow_max"});
    if (!(line.susceptance > 0.0)) out.push_back({entity, "susceptance must be positive"});
  }

  std::set<std::string> gen_ids;
  for (const auto& g : model.generators) {
    const std::string entity = "generator " + g.id;
    if (!gen_ids.insert(g.id).second) out.push_back({entity, "duplicate generator id"});
    if (!region_ids.count(g.region)) out.push_back({entity, "region does not exist"});
    if (g.p_min < 0.0 || g.p_min > g.p_max) out.push_back({entity, "requires 0 <= p_min <= p_max"});
    double total = 0.0;
    for (std::size_t b = 0; b < g.blocks.size(); ++b) {
      const auto& block = g.blocks[b];
      if (block.price < 0.0) out.push_back({entity, "block " + std::to_string(b) + " has negative price"});
      if (block.capacity < 0.0) {
        out.push_back({entity, "block " + std::to_string(b) + " has negative capacity"});
      }
      if (b > 0 && block.price < g.blocks[b - 1].price) {
        out.push_back({entity, "block prices must be nondecreasing"});
      }
      total += block.capacity;
    }
    if (std::abs(total - g.p_max) > kCapacityTol * std::max(1.0, g.p_max)) {
      std::ostringstream msg;
      msg << "block capacities sum to " << total << " MW, p_max is " << g.p_max << " MW";
      out.push_back({entity, msg.str()});
    }
    if (g.renewable() && (g.blocks.size() != 1 || g.blocks[0].price != 0.0)) {
      out.push_back({entity, "renewable generators bid a single zero-price block"});
    }
    if (!g.availability.empty()) {
      if (g.availability.size() != horizon.steps) {
        out.push_back({entity, "availability length does not match horizon"});
      } else if (std::any_of(g.availability.begin(), g.availability.end(),
                             [](double a) { return !(a >= 0.0 && a <= 1.0); })) {
        out.push_back({entity, "availability must lie in [0, 1]"});
      }
    }
  }

  std::map<std::string, int> per_region;
  for (const auto& agg : model.aggregators) {
    const std::string entity = "aggregator " + agg.region;
    if (!region_ids.count(agg.region)) out.push_back({entity, "region does not exist"});
    ++per_region[agg.region];
    check_series(out, entity, "inflexible_load", agg.inflexible_load, horizon.steps, true);
    check_series(out, entity, "responsive_load", agg.responsive_load, horizon.steps, true);
    check_series(out, entity, "pv", agg.pv, horizon.steps, true);
    check_series(out, entity, "flex_min", agg.flex_min, horizon.steps, false);
    if (agg.charge_cap < 0.0) out.push_back({entity, "charge_cap must be nonnegative"});
    if (agg.flex_min.size() == horizon.steps && agg.responsive_load.size() == horizon.steps) {
      for (std::size_t h = 0; h < horizon.steps; ++h) {
        if (agg.flex_min[h] > agg.flex_max(h)) {
          out.push_back({entity, "flex_min exceeds flex_max at step " + std::to_string(h)});
          break;
        }
      }
    }
    const auto& s = agg.storage;
    if (!(0.0 <= s.soc_min && s.soc_min <= s.soc_initial && s.soc_initial <= s.soc_max)) {
      out.push_back({entity, "storage requires 0 <= soc_min <= soc_initial <= soc_max"});
    }
    if (!(s.round_trip_efficiency > 0.0 && s.round_trip_efficiency <= 1.0)) {
      out.push_back({entity, "round_trip_efficiency must lie in (0, 1]"});
    }
  }
  for (const auto& r : model.regions) {
    const int count = per_region.count(r.id) ? per_region[r.id] : 0;
    if (count != 1) {
      out.push_back({"region " + r.id, "needs exactly one aggregator, found " + std::to_string(count)});
    }
  }

  // Connectivity of the line graph.
  if (!model.regions.empty()) {
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& line : model.lines) {
      adj[line.from].push_back(line.to);
      adj[line.to].push_back(line.from);
    }
    std::set<std::string> seen{model.regions.front().id};
    std::queue<std::string> frontier;
    frontier.push(model.regions.front().id);
    while (!frontier.empty()) {
      const auto cur = frontier.front();
      frontier.pop();
      for (const auto& next : adj[cur]) {
        if (seen.insert(next).second) frontier.push(next);
      }
    }
    for (const auto& r : model.regions) {
      if (!seen.count(r.id)) out.push_back({"region " + r.id, "not connected to the network"});
    }
  }
  return out;
}

void require_valid(const NetworkModel& model, const Horizon& horizon) {
  const auto violations = validate(model, horizon);
  if (violations.empty()) return;
  std::ostringstream msg;
  msg << "invalid network model:";
  for (const auto& v : violations) msg << "\n  " << v.entity << ": " << v.rule;
  throw ValidationError(msg.str());
}

double total_required_energy(const AggregatorProfile& agg, const Horizon& horizon) {
  double total = 0.0;
  for (std::size_t h = 0; h < horizon.steps; ++h) {
    total += (agg.inflexible_load.at(h) + agg.responsive_load.at(h)) * horizon.step_length;
  }
  return total;
}

}  // namespace drsim
