#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "drsim/grid_model.hpp"

namespace drsim::testing {

inline Generator make_generator(std::string id, std::string region, std::vector<BidBlock> blocks,
                                GeneratorKind kind = GeneratorKind::Coal) {
  Generator g;
  g.id = std::move(id);
  g.region = std::move(region);
  g.blocks = std::move(blocks);
  for (const auto& b : g.blocks) g.p_max += b.capacity;
  g.kind = kind;
  return g;
}

inline Generator make_wind(std::string id, std::string region, double p_max,
                           std::vector<double> availability) {
  auto g = make_generator(std::move(id), std::move(region), {{0.0, p_max}}, GeneratorKind::Wind);
  g.availability = std::move(availability);
  g.must_take = true;
  return g;
}

// Aggregator with no flexibility: P_U = PV = 0 and flex pinned at zero.
inline AggregatorProfile rigid_aggregator(std::string region, std::vector<double> load) {
  AggregatorProfile a;
  a.region = std::move(region);
  const std::size_t n = load.size();
  a.inflexible_load = std::move(load);
  a.responsive_load.assign(n, 0.0);
  a.pv.assign(n, 0.0);
  a.flex_min.assign(n, 0.0);
  return a;
}

inline NetworkModel single_region(std::vector<Generator> gens, std::vector<double> load) {
  NetworkModel m;
  m.regions = {{"A", "A"}};
  m.reference_region = "A";
  m.generators = std::move(gens);
  m.aggregators = {rigid_aggregator("A", std::move(load))};
  return m;
}

inline NetworkModel two_regions(std::vector<Generator> gens, std::vector<double> load_a,
                                std::vector<double> load_b, double limit) {
  NetworkModel m;
  m.regions = {{"A", "A"}, {"B", "B"}};
  m.reference_region = "A";
  m.lines = {{"A", "B", 2.0, -limit, limit}};
  m.generators = std::move(gens);
  m.aggregators = {rigid_aggregator("A", std::move(load_a)), rigid_aggregator("B", std::move(load_b))};
  return m;
}

// One region over a day: evening-peaking load, midday PV, three-band supply.
inline NetworkModel daily_region(std::string id = "A", double scale = 1.0) {
  NetworkModel m;
  m.regions = {{id, id}};
  m.reference_region = id;
  m.generators = {make_generator(id + "_base", id, {{20, 950 * scale}}),
                  make_generator(id + "_mid", id, {{35, 400 * scale}}),
                  make_generator(id + "_peak", id, {{80, 800 * scale}}, GeneratorKind::GasTurbine)};
  AggregatorProfile a;
  a.region = id;
  const double pi = 3.14159265358979323846;
  for (int h = 0; h < 24; ++h) {
    const double evening = std::exp(-0.5 * std::pow((h - 18.0) / 3.0, 2));
    const double solar = std::max(0.0, std::sin(pi * (h - 6) / 12.0));
    a.inflexible_load.push_back(scale * (550 + 300 * evening));
    a.responsive_load.push_back(scale * (250 + 200 * evening));
    a.pv.push_back(scale * 60 * solar);
    a.flex_min.push_back(0.0);
  }
  a.storage = {100 * scale, 1500 * scale, 800 * scale, 0.9};
  m.aggregators = {a};
  return m;
}

}  // namespace drsim::testing
