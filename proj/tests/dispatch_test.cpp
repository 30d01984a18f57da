#include "drsim/dispatch.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "drsim/errors.hpp"
#include "support/enumeration_oracle.hpp"
#include "support/models.hpp"

namespace drsim {
namespace {

using testing::make_generator;
using testing::make_wind;
using testing::single_region;
using testing::two_regions;

DispatchProblem problem_for(NetworkModel model, std::size_t steps) {
  DispatchProblem p;
  p.model = std::move(model);
  p.horizon.steps = steps;
  p.battery_loss.assign(p.model.aggregators.size(), 0.0);
  return p;
}

TEST(Build, SingleRegionWithoutFlexibility) {
  auto p = problem_for(single_region({make_generator("G", "A", {{10, 100}})}, {50, 60}), 2);
  const auto built = build(p);
  // Per step: 1 block, flex up and down, 1 angle, unserved, spill. One balance
  // row per step plus the energy row.
  EXPECT_EQ(built.lp.num_columns(), 2u * 6u);
  EXPECT_EQ(built.lp.num_rows(), 2u + 1u);
  const auto sol = solve(p);
  EXPECT_NEAR(sol.generation[0][0], 50, 1e-9);
  EXPECT_NEAR(sol.generation[0][1], 60, 1e-9);
}

TEST(Build, TwoRegionsOneLine) {
  auto p = problem_for(two_regions({make_generator("G", "A", {{10, 500}})},
                                   std::vector<double>(24, 10.0), std::vector<double>(24, 20.0), 50),
                       24);
  const auto built = build(p);
  std::size_t balance = 0, flow = 0;
  for (const auto& row : built.lp.rows()) {
    if (row.name.rfind("balance_", 0) == 0) ++balance;
    if (row.name.rfind("flow_", 0) == 0) ++flow;
  }
  EXPECT_EQ(balance, 2u * 24u);
  EXPECT_EQ(flow, 24u);
  for (std::size_t h = 0; h < 24; ++h) {
    EXPECT_EQ(built.lp.column(built.layout.angle[h][0]).lower, 0.0);
    EXPECT_EQ(built.lp.column(built.layout.angle[h][0]).upper, 0.0);
  }
}

TEST(Solve, BlockFillCost) {
  auto p = problem_for(
      single_region({make_generator("G", "A", {{10, 100}, {20, 100}, {30, 100}})},
                    std::vector<double>(24, 150.0)),
      24);
  const auto sol = solve(p);
  for (std::size_t h = 0; h < 24; ++h) {
    EXPECT_NEAR(sol.generation[0][h], 150, 1e-9);
    EXPECT_NEAR(sol.nodal_price[0][h], 20, 1e-9);
  }
  EXPECT_NEAR(sol.objective, 24 * 2000.0, 1e-6);
}

TEST(Solve, UnservedWhenLoadExceedsCapacity) {
  std::vector<double> load(24, 100.0);
  load[7] = 350;
  auto p = problem_for(
      single_region({make_generator("G", "A", {{10, 100}, {20, 100}, {30, 100}})}, load), 24);
  const auto sol = solve(p);
  EXPECT_NEAR(sol.unserved[0][7], 50, 1e-9);
  EXPECT_TRUE(sol.has_unserved());
  EXPECT_NEAR(sol.nodal_price[0][7], kDefaultValueOfLostLoad, 1e-6);
  for (std::size_t h = 0; h < 24; ++h) {
    if (h != 7) EXPECT_NEAR(sol.unserved[0][h], 0, 1e-9);
  }
}

TEST(Solve, SurplusWindIsSpilledAtZeroPrice) {
  auto model = two_regions({make_wind("W", "A", 300, std::vector<double>(2, 1.0)),
                            make_generator("G", "B", {{25, 500}})},
                           {100, 100}, {50, 50}, 0.0);
  auto p = problem_for(model, 2);
  const auto sol = solve(p);
  EXPECT_NEAR(sol.spill[0][0], 200, 1e-9);
  EXPECT_NEAR(sol.nodal_price[0][0], 0, 1e-9);
  EXPECT_NEAR(sol.nodal_price[1][0], 25, 1e-9);
  EXPECT_NEAR(sol.line_flows[0][0], 0, 1e-9);
}

TEST(Solve, LineLimitSeparatesPrices) {
  auto model = two_regions({make_generator("cheap", "A", {{10, 500}}),
                            make_generator("dear", "B", {{40, 500}})},
                           {100}, {200}, 80);
  auto p = problem_for(model, 1);
  const auto sol = solve(p);
  EXPECT_NEAR(sol.line_flows[0][0], 80, 1e-9);
  EXPECT_NEAR(sol.generation[0][0], 180, 1e-9);
  EXPECT_NEAR(sol.nodal_price[0][0], 10, 1e-9);
  EXPECT_NEAR(sol.nodal_price[1][0], 40, 1e-9);
  const auto res = check_residuals(p, sol);
  EXPECT_LE(res.nodal_balance, 1e-6);
  EXPECT_LE(res.flow_consistency, 1e-6);
  EXPECT_LE(res.flow_limit, 1e-6);
}

DispatchProblem flexible_problem() {
  auto model = single_region({make_generator("G", "A", {{10, 100}, {50, 200}})},
                             {60, 90, 90, 60});
  auto& agg = model.aggregators[0];
  agg.responsive_load = {20, 60, 60, 20};
  agg.pv = {0, 10, 10, 0};
  agg.flex_min = {0, 0, 0, 0};
  agg.charge_cap = 30;
  auto p = problem_for(model, 4);
  p.battery_loss = {4.0};
  return p;
}

TEST(Solve, FlexibleDemandMovesToCheapSteps) {
  const auto p = flexible_problem();
  const auto sol = solve(p);
  // Block 1 (100 MW at 10) is the cheap band: steps 0 and 3 fill to 100 MW.
  EXPECT_NEAR(sol.flexible_demand[0][0] + 60, 100, 1e-9);
  EXPECT_NEAR(sol.flexible_demand[0][3] + 60, 100, 1e-9);
  const auto res = check_residuals(p, sol);
  EXPECT_LE(res.energy_neutrality, 1e-6);
  EXPECT_LE(res.nodal_balance, 1e-6);
  double energy = 0;
  for (double v : sol.flexible_demand[0]) energy += v;
  EXPECT_NEAR(energy, 20 + 50 + 50 + 20 + 4, 1e-9);
}

TEST(Solve, FlatPricesLeaveFlexibleDemandUnshifted) {
  // One generator at a single price: moving energy between steps gains nothing,
  // so the battery stays idle.
  auto model = single_region({make_generator("G", "A", {{30, 1000}})}, {50, 50, 50, 50});
  auto& agg = model.aggregators[0];
  agg.responsive_load = {80, 100, 120, 90};
  agg.pv = {0, 40, 60, 0};
  agg.flex_min.assign(4, 0.0);
  agg.charge_cap = 50;
  auto p = problem_for(model, 4);
  const auto sol = solve(p);
  for (std::size_t h = 0; h < 4; ++h) EXPECT_NEAR(battery_power(sol, "A", h), 0.0, 1e-9) << h;
}

TEST(Solve, BatteryPowerAndNettDemand) {
  const auto p = flexible_problem();
  auto sol = solve(p);
  for (std::size_t h = 0; h < 4; ++h) {
    const auto& a = sol.aggregators[0];
    EXPECT_DOUBLE_EQ(battery_power(sol, "A", h),
                     sol.flexible_demand[0][h] - a.responsive_load[h] + a.pv[h]);
    EXPECT_DOUBLE_EQ(nett_demand(sol, "A", h), a.inflexible_load[h] + sol.flexible_demand[0][h]);
    EXPECT_GE(nett_demand(sol, "A", h), a.inflexible_load[h] - 1e-9);
  }
  sol.flexible_demand[0] = {500, 0, 0, 0};
  sol.aggregators[0].responsive_load[0] = 300;
  sol.aggregators[0].pv[0] = 100;
  EXPECT_DOUBLE_EQ(battery_power(sol, "A", 0), 300);
  EXPECT_THROW(battery_power(sol, "Z", 0), ValidationError);
}

TEST(Solve, NegativeFlexMinLetsNettDemandFallBelowInflexible) {
  auto p = flexible_problem();
  p.model.aggregators[0].flex_min = {-30, -30, -30, -30};
  // Make the middle steps expensive enough that exporting pays.
  p.model.aggregators[0].inflexible_load = {10, 120, 120, 10};
  const auto sol = solve(p);
  bool below = false;
  for (std::size_t h = 0; h < 4; ++h) {
    below = below || nett_demand(sol, "A", h) < p.model.aggregators[0].inflexible_load[h] - 1e-6;
  }
  EXPECT_TRUE(below);
}

TEST(Solve, RejectsUnreachableEnergyTarget) {
  auto p = flexible_problem();
  p.battery_loss = {1e6};
  EXPECT_THROW(build(p), ValidationError);
  p = flexible_problem();
  p.value_of_lost_load = 40;
  EXPECT_THROW(build(p), ValidationError);
  p = flexible_problem();
  p.battery_loss = {-1};
  EXPECT_THROW(build(p), ValidationError);
}

TEST(Solve, MatchesEnumerationOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = testing::random_small_instance(rng);
    SCOPED_TRACE(trial);
    const auto sol = solve(p);
    const double oracle = testing::enumerate_optimum(p);
    EXPECT_NEAR(sol.objective, oracle, 1e-3);
  }
}

TEST(Solve, EnlargingFlexIntervalNeverRaisesCost) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    auto p = testing::random_small_instance(rng);
    const double base = solve(p).objective;
    for (auto& agg : p.model.aggregators) {
      agg.charge_cap += 5;
      for (auto& v : agg.flex_min) v -= 3;
    }
    EXPECT_LE(solve(p).objective, base + 1e-7);
  }
}

TEST(Solve, PriceScalingScalesObjective) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    auto p = testing::random_small_instance(rng);
    const auto a = solve(p);
    for (auto& g : p.model.generators) {
      for (auto& b : g.blocks) b.price *= 3.0;
    }
    p.value_of_lost_load *= 3.0;
    const auto b = solve(p);
    EXPECT_NEAR(b.objective, 3.0 * a.objective, 1e-6 * (1 + std::abs(a.objective)));
    EXPECT_EQ(a.generation, b.generation);
    EXPECT_EQ(a.flexible_demand, b.flexible_demand);
  }
}

TEST(Solve, DeterministicAcrossRepeats) {
  const auto p = flexible_problem();
  const auto a = solve(p);
  const auto b = solve(p);
  EXPECT_EQ(a.flexible_demand, b.flexible_demand);
  EXPECT_EQ(a.nodal_price, b.nodal_price);
}

TEST(Session, WarmUpdatesMatchFreshSolve) {
  auto p = flexible_problem();
  DispatchSession session(p);
  session.solve();
  session.set_battery_loss(0, 9.0);
  session.set_charge_cap(0, 45.0);
  const auto warm = session.solve();
  p.battery_loss = {9.0};
  p.model.aggregators[0].charge_cap = 45.0;
  const auto cold = solve(p);
  EXPECT_NEAR(warm.objective, cold.objective, 1e-7);
  EXPECT_LE(check_residuals(p, warm).energy_neutrality, 1e-6);
}

TEST(Session, FrozenFlexPinsDemandAndDropsEnergyRow) {
  auto p = flexible_problem();
  p.frozen_flex = {{10, 20, 30, 40}};
  const auto built = build(p);
  EXPECT_EQ(built.layout.energy_row[0], LpLayout::npos);
  const auto sol = solve(p);
  EXPECT_EQ(sol.flexible_demand[0], (std::vector<double>{10, 20, 30, 40}));
}

TEST(Session, WritesMps) {
  DispatchSession session(flexible_problem());
  std::ostringstream out;
  session.write_mps(out);
  EXPECT_NE(out.str().find("energy_A"), std::string::npos);
  EXPECT_NE(out.str().find("ENDATA"), std::string::npos);
}

}  // namespace
}  // namespace drsim
