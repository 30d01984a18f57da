#include "drsim/calibration.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "drsim/errors.hpp"
#include "support/models.hpp"

namespace drsim {
namespace {

DispatchProblem daily_problem(double soc_min = 100, double soc_max = 1500) {
  DispatchProblem p;
  p.model = testing::daily_region();
  auto& s = p.model.aggregators[0].storage;
  s.soc_min = soc_min;
  s.soc_max = soc_max;
  s.soc_initial = 0.5 * (soc_min + soc_max);
  p.battery_loss = {0.0};
  return p;
}

DispatchSolution hand_solution(std::vector<double> flex, double soc_initial, double eta) {
  DispatchSolution s;
  s.horizon.steps = flex.size();
  AggregatorProfile a;
  a.region = "A";
  a.inflexible_load.assign(flex.size(), 0.0);
  a.responsive_load.assign(flex.size(), 0.0);
  a.pv.assign(flex.size(), 0.0);
  a.storage = {0, 1e9, soc_initial, eta};
  s.aggregators = {a};
  s.flexible_demand = {std::move(flex)};
  return s;
}

TEST(Soc, CumulativeSum) {
  const auto s = hand_solution({100, 100, 100, -100, -100, -100}, 1000, 1.0);
  EXPECT_EQ(soc_trajectory(s, 0), (std::vector<double>{1000, 1100, 1200, 1300, 1200, 1100}));
  const auto flat = hand_solution(std::vector<double>(24, 0.0), 750, 1.0);
  EXPECT_EQ(soc_trajectory(flat, 0), std::vector<double>(24, 750));
}

TEST(Soc, HalfHourStepsScalePower) {
  auto s = hand_solution({100, 100, -50}, 10, 1.0);
  s.horizon.step_length = 0.5;
  EXPECT_EQ(soc_trajectory(s, 0), (std::vector<double>{10, 60, 110}));
}

TEST(Soc, LimitsIgnoreTheInitialValue) {
  const StorageParams s{100, 200, 150, 1.0};
  EXPECT_TRUE(soc_within_limits({50, 150, 200}, s));
  EXPECT_FALSE(soc_within_limits({150, 150, 201}, s));
  EXPECT_FALSE(soc_within_limits({150, 99, 150}, s));
}

TEST(Loss, Arithmetic) {
  EXPECT_EQ(battery_energy_loss(hand_solution({500, -300, 200}, 0, 1.0), 0), 0.0);
  EXPECT_NEAR(battery_energy_loss(hand_solution({400, -300, 600, -700}, 0, 0.9), 0), 100.0, 1e-9);
}

TEST(LossSearch, LosslessConvergesImmediately) {
  auto p = daily_problem();
  p.model.aggregators[0].storage.round_trip_efficiency = 1.0;
  const auto r = calibrate_loss(p, 0, 80.0, {});
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_EQ(r.battery_loss[0], 0.0);
}

// Three steps with distinct marginal prices, so every loss guess has a unique
// optimal schedule. The schedule is found by enumeration on a 1 MW grid.
struct ThreeStep {
  std::vector<double> load{0, 60, 120};
  std::vector<double> pu{20, 20, 20};
  std::vector<double> pv{0, 10, 0};
  double cap = 30;
  double eta = 0.8;

  DispatchProblem problem() const {
    auto model = testing::single_region(
        {testing::make_generator("G", "A", {{10, 60}, {20, 60}, {30, 60}, {40, 500}})}, load);
    auto& a = model.aggregators[0];
    a.responsive_load = pu;
    a.pv = pv;
    a.charge_cap = cap;
    a.storage = {0, 1e6, 5e5, eta};
    DispatchProblem p;
    p.model = model;
    p.horizon.steps = 3;
    p.battery_loss = {0.0};
    return p;
  }

  double cost(double total) const {
    double c = 0, left = total;
    for (auto [price, width] : {std::pair{10.0, 60.0}, {20.0, 60.0}, {30.0, 60.0}, {40.0, 500.0}}) {
      const double used = std::min(left, width);
      c += used * price;
      left -= used;
    }
    return c;
  }

  double loss_of_best(double guess) const {
    const double target = (pu[0] - pv[0]) + (pu[1] - pv[1]) + (pu[2] - pv[2]) + guess;
    double best = std::numeric_limits<double>::infinity(), loss = 0;
    for (int a = 0; a <= pu[0] + cap; ++a) {
      for (int b = 0; b <= pu[1] + cap; ++b) {
        const double c = target - a - b;
        if (c < 0 || c > pu[2] + cap) continue;
        const double total = cost(load[0] + a) + cost(load[1] + b) + cost(load[2] + c);
        if (total < best - 1e-9) {
          best = total;
          const double pb[3] = {a - pu[0] + pv[0], b - pu[1] + pv[1], c - pu[2] + pv[2]};
          loss = (1 - eta) * (std::max(0.0, pb[0]) + std::max(0.0, pb[1]) + std::max(0.0, pb[2]));
        }
      }
    }
    return loss;
  }
};

TEST(LossSearch, MatchesEnumerationFixedPoint) {
  ThreeStep inst;
  double guess = 0;
  while (inst.loss_of_best(guess) - guess > 1.0) guess += 1.0;
  const auto r = calibrate_loss(inst.problem(), 0, inst.cap, {});
  EXPECT_NEAR(r.battery_loss[0], guess, 1.0);
  EXPECT_LE(std::abs(battery_energy_loss(r.solution, 0) - r.battery_loss[0]), 1.0);
}

TEST(LossSearch, LargeBetaStepsBackWithinEpsilon) {
  CalibrationConfig cfg;
  cfg.beta = 1000.0;
  const auto r = calibrate_loss(daily_problem(), 0, 60.0, cfg);
  EXPECT_GT(r.iterations, 2u);
  EXPECT_LE(std::abs(r.gap[0]), cfg.epsilon);
}

TEST(LossSearch, ReportsNonConvergence) {
  CalibrationConfig cfg;
  cfg.max_inner_iters = 2;
  cfg.epsilon = 1e-3;
  cfg.beta = 1e-3;
  try {
    calibrate_loss(daily_problem(), 0, 100.0, cfg);
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergence& e) {
    EXPECT_GT(e.last_gap(), cfg.epsilon);
  }
}

TEST(ChargeCap, DegenerateStorageGivesZero) {
  const auto c = calibrate_charge_cap(daily_problem(800, 800), {});
  EXPECT_EQ(c.aggregators[0].charge_cap, 0.0);
  EXPECT_EQ(c.aggregators[0].status, CalibrationStatus::DegenerateStorage);
  EXPECT_FALSE(c.aggregators[0].converged());
}

TEST(ChargeCap, WideBoundsHitIterationCap) {
  CalibrationConfig cfg;
  cfg.max_outer_iters = 4;
  const auto c = calibrate_charge_cap(daily_problem(-1e6 + 1e6, 2e6), cfg);
  EXPECT_EQ(c.aggregators[0].status, CalibrationStatus::IterationCap);
  EXPECT_NEAR(c.aggregators[0].charge_cap, 4 * c.aggregators[0].alpha, 1e-9);
}

void expect_valid(const DispatchProblem& base, const StorageCalibration& c,
                  const CalibrationConfig& cfg) {
  for (std::size_t m = 0; m < c.aggregators.size(); ++m) {
    const auto& a = c.aggregators[m];
    ASSERT_TRUE(a.converged()) << a.region << " " << to_string(a.status);
    const auto& storage = base.model.aggregators[m].storage;
    for (const auto& soc : a.soc) EXPECT_TRUE(soc_within_limits(soc, storage));
    EXPECT_LE(a.loss_gap, cfg.epsilon);
  }
  // One step further for any single aggregator must break the limits somewhere.
  for (std::size_t k = 0; k < c.aggregators.size(); ++k) {
    DispatchProblem next = base;
    for (std::size_t m = 0; m < c.aggregators.size(); ++m) {
      next.model.aggregators[m].charge_cap = c.aggregators[m].charge_cap;
    }
    next.model.aggregators[k].charge_cap += c.aggregators[k].alpha;
    DispatchSession session(next);
    std::vector<bool> active(c.aggregators.size(), true);
    const auto lc = calibrate_loss(session, active, resolve_beta(cfg, next.model), cfg);
    bool violated = false;
    for (std::size_t m = 0; m < c.aggregators.size(); ++m) {
      violated = violated || !soc_within_limits(soc_trajectory(lc.solution, m),
                                                next.model.aggregators[m].storage);
    }
    EXPECT_TRUE(violated) << c.aggregators[k].region;
  }
}

TEST(ChargeCap, ReturnsLastFeasibleCap) {
  const auto p = daily_problem();
  const CalibrationConfig cfg;
  const auto c = calibrate_charge_cap(p, cfg);
  EXPECT_GT(c.aggregators[0].charge_cap, 0.0);
  expect_valid(p, c, cfg);
}

TEST(ChargeCap, ShrinkingSocWindowNeverRaisesCap) {
  double previous = std::numeric_limits<double>::infinity();
  for (double width : {1400.0, 1000.0, 600.0, 300.0}) {
    const double mid = 800;
    const auto c = calibrate_charge_cap(daily_problem(mid - width / 2, mid + width / 2), {});
    EXPECT_LE(c.aggregators[0].charge_cap, previous + 1e-9) << width;
    previous = c.aggregators[0].charge_cap;
  }
}

DispatchProblem two_region_problem() {
  auto a = testing::daily_region("A", 1.0);
  auto b = testing::daily_region("B", 0.5);
  NetworkModel m = a;
  m.regions.push_back(b.regions[0]);
  for (auto& g : b.generators) m.generators.push_back(g);
  m.aggregators.push_back(b.aggregators[0]);
  m.lines = {{"A", "B", 5.0, -150, 150}};
  DispatchProblem p;
  p.model = m;
  p.battery_loss = {0.0, 0.0};
  return p;
}

TEST(ChargeCap, JointAndSequentialModesBothValid) {
  const auto p = two_region_problem();
  CalibrationConfig joint;
  const auto cj = calibrate_charge_cap(p, joint);
  expect_valid(p, cj, joint);
  CalibrationConfig seq;
  seq.mode = CalibrationMode::Sequential;
  const auto cs = calibrate_charge_cap(p, seq);
  for (const auto& a : cs.aggregators) {
    EXPECT_TRUE(a.converged());
    for (const auto& soc : a.soc) {
      EXPECT_TRUE(soc_within_limits(soc, p.model.aggregators[a.region == "A" ? 0 : 1].storage));
    }
  }
}

TEST(ChargeCap, ViolationAtZeroDoesNotStopTheOthers) {
  auto p = two_region_problem();
  // B's window is a sliver around its start, so storing any PV breaks it.
  auto& sb = p.model.aggregators[1].storage;
  sb.soc_min = sb.soc_initial - 0.5;
  sb.soc_max = sb.soc_initial + 0.5;
  const auto c = calibrate_charge_cap(p, {});
  EXPECT_EQ(c.aggregators[1].status, CalibrationStatus::ViolatedAtZero);
  EXPECT_EQ(c.aggregators[1].charge_cap, 0.0);
  EXPECT_TRUE(c.aggregators[0].converged());
  EXPECT_GT(c.aggregators[0].charge_cap, 0.0);
  for (const auto& soc : c.aggregators[0].soc) {
    EXPECT_TRUE(soc_within_limits(soc, p.model.aggregators[0].storage));
  }
}

TEST(ChargeCap, MultipleDaysTakeTheBindingDay) {
  auto calm = daily_problem();
  auto peaky = daily_problem();
  for (auto& v : peaky.model.aggregators[0].pv) v *= 1.8;
  const auto c1 = calibrate_charge_cap(calm, {});
  const auto c2 = calibrate_charge_cap(peaky, {});
  const auto both = calibrate_charge_cap(std::vector<DispatchProblem>{calm, peaky}, {});
  EXPECT_LE(both.aggregators[0].charge_cap,
            std::min(c1.aggregators[0].charge_cap, c2.aggregators[0].charge_cap) + 1e-9);
  EXPECT_EQ(both.aggregators[0].soc.size(), 2u);
  EXPECT_EQ(both.solutions.size(), 2u);
}

TEST(ChargeCap, RejectsBadConfig) {
  CalibrationConfig cfg;
  cfg.alpha = 0.0;
  EXPECT_THROW(calibrate_charge_cap(daily_problem(), cfg), ValidationError);
  cfg = {};
  cfg.epsilon = -1;
  EXPECT_THROW(calibrate_charge_cap(daily_problem(), cfg), ValidationError);
}

TEST(ChargeCap, CsvReport) {
  StorageCalibration c;
  AggregatorCalibration a;
  a.region = "NSW";
  a.charge_cap = 620;
  a.battery_loss = 12.5;
  a.iterations = 31;
  c.aggregators = {a};
  std::ostringstream out;
  write_calibration_csv(out, c);
  EXPECT_EQ(out.str(),
            "aggregator,charge_cap,battery_loss,iterations,converged\n"
            "NSW,620.000000,12.500000,31,true\n");
}

}  // namespace
}  // namespace drsim
