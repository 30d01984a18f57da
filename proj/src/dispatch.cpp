#include "drsim/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "drsim/errors.hpp"

namespace drsim {

namespace {

double energy_target(const AggregatorProfile& agg, const Horizon& horizon, double loss) {
  double total = 0.0;
  for (std::size_t h = 0; h < horizon.steps; ++h) {
    total += (agg.responsive_load[h] - agg.pv[h]) * horizon.step_length;
  }
  return total + loss;
}

void check_energy_interval(const DispatchProblem& problem, std::size_t m) {
  if (problem.is_frozen(m)) return;
  const auto& agg = problem.model.aggregators[m];
  const auto& hz = problem.horizon;
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t h = 0; h < hz.steps; ++h) {
    lo += agg.flex_min[h] * hz.step_length;
    hi += agg.flex_max(h) * hz.step_length;
  }
  const double target = energy_target(agg, hz, problem.battery_loss[m]);
  const double tol = 1e-9 * std::max(1.0, std::abs(target));
  if (target < lo - tol || target > hi + tol) {
    std::ostringstream msg;
    msg << "aggregator " << agg.region << ": horizon energy " << target
        << " MWh lies outside the flexible-demand range [" << lo << ", " << hi << "] MWh";
    throw ValidationError(msg.str());
  }
}

// Generators visited in id order so that equal-price blocks tie-break
// lexicographically by generator id, then block index.
std::vector<std::size_t> generator_order(const NetworkModel& model) {
  std::vector<std::size_t> order(model.generators.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return model.generators[a].id < model.generators[b].id;
  });
  return order;
}

// Block bounds at one step: the available output fills blocks in order.
std::pair<double, double> block_bounds(const Generator& gen, std::size_t b, std::size_t step) {
  double before = 0.0;
  for (std::size_t k = 0; k < b; ++k) before += gen.blocks[k].capacity;
  const double cap = gen.blocks[b].capacity;
  const double upper = std::clamp(gen.max_output(step) - before, 0.0, cap);
  const double lower = std::clamp(gen.min_output(step) - before, 0.0, upper);
  return {lower, upper};
}

// Unshifted flexible demand, P_U - P_PV, kept inside [flex_min, flex_max].
double flex_base(const AggregatorProfile& agg, std::size_t h) {
  return std::max(agg.flex_min[h], agg.responsive_load[h] - agg.pv[h]);
}

}  // namespace

void check_problem(const DispatchProblem& problem) {
  require_valid(problem.model, problem.horizon);
  const auto& model = problem.model;
  if (problem.battery_loss.size() != model.aggregators.size()) {
    throw ValidationError("battery_loss needs one entry per aggregator");
  }
  for (std::size_t m = 0; m < problem.battery_loss.size(); ++m) {
    if (!(problem.battery_loss[m] >= 0.0)) {
      throw ValidationError("battery_loss must be nonnegative for aggregator " +
                            model.aggregators[m].region);
    }
  }
  double max_bid = 0.0;
  for (const auto& g : model.generators) {
    for (const auto& b : g.blocks) max_bid = std::max(max_bid, b.price);
  }
  if (!(problem.value_of_lost_load > max_bid)) {
    throw ValidationError("value_of_lost_load must exceed every bid price");
  }
  if (!(problem.spill_price >= 0.0)) throw ValidationError("spill_price must be nonnegative");
  if (!problem.frozen_flex.empty() && problem.frozen_flex.size() != model.aggregators.size()) {
    throw ValidationError("frozen_flex needs one entry per aggregator");
  }
  for (std::size_t m = 0; m < problem.frozen_flex.size(); ++m) {
    if (!problem.frozen_flex[m].empty() && problem.frozen_flex[m].size() != problem.horizon.steps) {
      throw ValidationError("frozen_flex length does not match horizon for aggregator " +
                            model.aggregators[m].region);
    }
  }
  for (std::size_t m = 0; m < model.aggregators.size(); ++m) check_energy_interval(problem, m);
}

BuiltProblem build(const DispatchProblem& problem) {
  check_problem(problem);
  const auto& model = problem.model;
  const auto& hz = problem.horizon;
  const std::size_t H = hz.steps;
  const std::size_t G = model.generators.size();
  const std::size_t R = model.regions.size();
  const std::size_t M = model.aggregators.size();
  const std::size_t L = model.lines.size();
  const double dh = hz.step_length;
  const auto order = generator_order(model);

  BuiltProblem out;
  auto& lp = out.lp;
  auto& lay = out.layout;
  lay.block.assign(H, std::vector<std::vector<std::size_t>>(G));
  lay.flex.assign(H, std::vector<std::size_t>(M));
  lay.flex_down.assign(H, std::vector<std::size_t>(M, LpLayout::npos));
  lay.flex_base.assign(H, std::vector<double>(M, 0.0));
  lay.angle.assign(H, std::vector<std::size_t>(R));
  lay.unserved.assign(H, std::vector<std::size_t>(R));
  lay.spill.assign(H, std::vector<std::size_t>(R));
  lay.balance_row.assign(H, std::vector<std::size_t>(R));
  lay.line_row.assign(H, std::vector<std::size_t>(L, LpLayout::npos));
  lay.energy_row.assign(M, LpLayout::npos);

  const std::size_t ref = *model.region_index(model.reference_region);
  for (std::size_t h = 0; h < H; ++h) {
    const std::string suffix = "_h" + std::to_string(h);
    for (std::size_t g : order) {
      const auto& gen = model.generators[g];
      lay.block[h][g].resize(gen.blocks.size());
      for (std::size_t b = 0; b < gen.blocks.size(); ++b) {
        const auto [lo, hi] = block_bounds(gen, b, h);
        lay.block[h][g][b] = lp.add_column("p_" + gen.id + "_b" + std::to_string(b) + suffix, lo,
                                           hi, gen.blocks[b].price * dh);
      }
    }
    for (std::size_t m = 0; m < M; ++m) {
      const auto& agg = model.aggregators[m];
      if (problem.is_frozen(m)) {
        const double v = problem.frozen_flex[m].at(h);
        lay.flex[h][m] = lp.add_column("pf_" + agg.region + suffix, v, v, 0.0);
        continue;
      }
      const double base = flex_base(agg, h);
      lay.flex_base[h][m] = base;
      lay.flex[h][m] = lp.add_column("pf_up_" + agg.region + suffix, 0.0, agg.flex_max(h) - base, 0.0);
      lay.flex_down[h][m] =
          lp.add_column("pf_down_" + agg.region + suffix, 0.0, base - agg.flex_min[h], 0.0);
    }
    for (std::size_t r = 0; r < R; ++r) {
      const double lo = r == ref ? 0.0 : -lp::kInf;
      const double hi = r == ref ? 0.0 : lp::kInf;
      lay.angle[h][r] = lp.add_column("theta_" + model.regions[r].id + suffix, lo, hi, 0.0);
    }
    for (std::size_t r = 0; r < R; ++r) {
      lay.unserved[h][r] = lp.add_column("unserved_" + model.regions[r].id + suffix, 0.0,
                                         lp::kInf, problem.value_of_lost_load * dh);
    }
    for (std::size_t r = 0; r < R; ++r) {
      lay.spill[h][r] = lp.add_column("spill_" + model.regions[r].id + suffix, 0.0, lp::kInf,
                                      problem.spill_price * dh);
    }
  }

  for (std::size_t h = 0; h < H; ++h) {
    const std::string suffix = "_h" + std::to_string(h);
    for (std::size_t r = 0; r < R; ++r) {
      const std::string& rid = model.regions[r].id;
      std::vector<lp::Entry> entries;
      for (std::size_t g : order) {
        if (model.generators[g].region != rid) continue;
        for (std::size_t col : lay.block[h][g]) entries.push_back({col, 1.0});
      }
      double inflexible = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        if (model.aggregators[m].region != rid) continue;
        entries.push_back({lay.flex[h][m], -1.0});
        if (lay.flex_down[h][m] != LpLayout::npos) entries.push_back({lay.flex_down[h][m], 1.0});
        inflexible += model.aggregators[m].inflexible_load[h] + lay.flex_base[h][m];
      }
      entries.push_back({lay.unserved[h][r], 1.0});
      entries.push_back({lay.spill[h][r], -1.0});
      // Net export: sum over lines of B * (theta_r - theta_other).
      double diag = 0.0;
      std::vector<std::pair<std::size_t, double>> off;
      for (const auto& line : model.lines) {
        if (line.from == rid) {
          diag += line.susceptance;
          off.emplace_back(*model.region_index(line.to), line.susceptance);
        } else if (line.to == rid) {
          diag += line.susceptance;
          off.emplace_back(*model.region_index(line.from), line.susceptance);
        }
      }
      if (diag != 0.0) entries.push_back({lay.angle[h][r], -diag});
      std::sort(off.begin(), off.end());
      for (std::size_t k = 0; k < off.size(); ++k) {
        double b = off[k].second;
        while (k + 1 < off.size() && off[k + 1].first == off[k].first) b += off[++k].second;
        entries.push_back({lay.angle[h][off[k].first], b});
      }
      lay.balance_row[h][r] =
          lp.add_row("balance_" + rid + suffix, inflexible, inflexible, std::move(entries));
    }
    for (std::size_t l = 0; l < L; ++l) {
      const auto& line = model.lines[l];
      if (!std::isfinite(line.flow_min) && !std::isfinite(line.flow_max)) continue;
      const std::size_t a = *model.region_index(line.from);
      const std::size_t b = *model.region_index(line.to);
      lay.line_row[h][l] = lp.add_row(
          "flow_" + line.from + "_" + line.to + "_" + std::to_string(l) + suffix, line.flow_min,
          line.flow_max,
          {{lay.angle[h][a], line.susceptance}, {lay.angle[h][b], -line.susceptance}});
    }
  }

  for (std::size_t m = 0; m < M; ++m) {
    if (problem.is_frozen(m)) continue;
    const auto& agg = model.aggregators[m];
    std::vector<lp::Entry> entries;
    double target = energy_target(agg, hz, problem.battery_loss[m]);
    for (std::size_t h = 0; h < H; ++h) {
      entries.push_back({lay.flex[h][m], dh});
      entries.push_back({lay.flex_down[h][m], -dh});
      target -= lay.flex_base[h][m] * dh;
    }
    lay.energy_row[m] = lp.add_row("energy_" + agg.region, target, target, std::move(entries));
  }
  return out;
}

std::size_t DispatchSolution::aggregator(const std::string& region) const {
  for (std::size_t m = 0; m < aggregators.size(); ++m) {
    if (aggregators[m].region == region) return m;
  }
  throw ValidationError("unknown aggregator '" + region + "'");
}

bool DispatchSolution::has_unserved(double tol) const {
  for (const auto& series : unserved) {
    for (double v : series) {
      if (v > tol) return true;
    }
  }
  return false;
}

double battery_power(const DispatchSolution& solution, const std::string& region,
                     std::size_t step) {
  const std::size_t m = solution.aggregator(region);
  const auto& agg = solution.aggregators[m];
  return solution.flexible_demand[m].at(step) - agg.responsive_load.at(step) + agg.pv.at(step);
}

double nett_demand(const DispatchSolution& solution, const std::string& region, std::size_t step) {
  const std::size_t m = solution.aggregator(region);
  return solution.aggregators[m].inflexible_load.at(step) + solution.flexible_demand[m].at(step);
}

DispatchSession::DispatchSession(DispatchProblem problem, lp::SolverOptions options)
    : problem_(std::move(problem)) {
  auto built = build(problem_);
  layout_ = std::move(built.layout);
  simplex_ = std::make_unique<lp::Simplex>(std::move(built.lp), options);
}

DispatchSession::~DispatchSession() = default;
DispatchSession::DispatchSession(DispatchSession&&) noexcept = default;
DispatchSession& DispatchSession::operator=(DispatchSession&&) noexcept = default;

void DispatchSession::set_battery_loss(std::size_t agg, double loss) {
  if (!(loss >= 0.0)) throw ValidationError("battery_loss must be nonnegative");
  problem_.battery_loss.at(agg) = loss;
  check_energy_interval(problem_, agg);
  const std::size_t row = layout_.energy_row.at(agg);
  if (row == LpLayout::npos) return;
  double target = energy_target(problem_.model.aggregators[agg], problem_.horizon, loss);
  for (std::size_t h = 0; h < problem_.horizon.steps; ++h) {
    target -= layout_.flex_base[h][agg] * problem_.horizon.step_length;
  }
  simplex_->set_row_bounds(row, target, target);
}

void DispatchSession::set_charge_cap(std::size_t agg, double cap) {
  if (!(cap >= 0.0)) throw ValidationError("charge_cap must be nonnegative");
  auto& profile = problem_.model.aggregators.at(agg);
  profile.charge_cap = cap;
  for (std::size_t h = 0; h < problem_.horizon.steps; ++h) {
    if (profile.flex_min[h] > profile.flex_max(h)) {
      throw ValidationError("aggregator " + profile.region + ": flex_min exceeds flex_max");
    }
  }
  check_energy_interval(problem_, agg);
  if (problem_.is_frozen(agg)) return;
  for (std::size_t h = 0; h < problem_.horizon.steps; ++h) {
    simplex_->set_column_bounds(layout_.flex[h][agg], 0.0,
                                profile.flex_max(h) - layout_.flex_base[h][agg]);
  }
}

void DispatchSession::write_mps(std::ostream& out) const { simplex_->problem().write_mps(out); }

DispatchSolution DispatchSession::solve() {
  auto result = simplex_->solve();
  if (result.status == lp::Status::Infeasible) {
    throw InfeasibleModel("dispatch LP reported infeasible; slack variables should prevent this");
  }
  if (result.status != lp::Status::Optimal) {
    throw NumericalFailure(std::string("dispatch LP failed: ") + lp::to_string(result.status) +
                           " after " + std::to_string(result.iterations) + " iterations");
  }
  const auto& model = problem_.model;
  const auto& hz = problem_.horizon;
  const std::size_t H = hz.steps;

  // Flat prices leave many cost-optimal ways to shift flexible demand; take
  // the one that moves the least energy.
  std::vector<double> shift_cost(simplex_->problem().num_columns(), 0.0);
  bool any_shift = false;
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t m = 0; m < model.aggregators.size(); ++m) {
      if (layout_.flex_down[h][m] == LpLayout::npos) continue;
      shift_cost[layout_.flex[h][m]] = hz.step_length;
      shift_cost[layout_.flex_down[h][m]] = hz.step_length;
      any_shift = true;
    }
  }
  if (any_shift) result = simplex_->refine(shift_cost);

  DispatchSolution sol;
  sol.horizon = hz;
  for (const auto& g : model.generators) {
    sol.generator_ids.push_back(g.id);
    sol.generator_kinds.push_back(g.kind);
    sol.generator_regions.push_back(g.region);
  }
  for (const auto& r : model.regions) sol.region_ids.push_back(r.id);
  sol.aggregators = model.aggregators;
  sol.battery_loss = problem_.battery_loss;
  sol.objective = result.objective;
  sol.iterations = result.iterations;

  const auto& x = result.x;
  sol.generation.assign(model.generators.size(), std::vector<double>(H, 0.0));
  sol.flexible_demand.assign(model.aggregators.size(), std::vector<double>(H, 0.0));
  sol.angles.assign(model.regions.size(), std::vector<double>(H, 0.0));
  sol.unserved.assign(model.regions.size(), std::vector<double>(H, 0.0));
  sol.spill.assign(model.regions.size(), std::vector<double>(H, 0.0));
  sol.nodal_price.assign(model.regions.size(), std::vector<double>(H, 0.0));
  sol.line_flows.assign(model.lines.size(), std::vector<double>(H, 0.0));
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t g = 0; g < model.generators.size(); ++g) {
      double total = 0.0;
      for (std::size_t col : layout_.block[h][g]) total += x[col];
      sol.generation[g][h] = total;
    }
    for (std::size_t m = 0; m < model.aggregators.size(); ++m) {
      double pf = x[layout_.flex[h][m]];
      if (layout_.flex_down[h][m] != LpLayout::npos) {
        pf += layout_.flex_base[h][m] - x[layout_.flex_down[h][m]];
      }
      sol.flexible_demand[m][h] = pf;
    }
    for (std::size_t r = 0; r < model.regions.size(); ++r) {
      sol.angles[r][h] = x[layout_.angle[h][r]];
      sol.unserved[r][h] = x[layout_.unserved[h][r]];
      sol.spill[r][h] = x[layout_.spill[h][r]];
      sol.nodal_price[r][h] = result.duals[layout_.balance_row[h][r]] / hz.step_length;
    }
    for (std::size_t l = 0; l < model.lines.size(); ++l) {
      const auto& line = model.lines[l];
      sol.line_flows[l][h] = line.susceptance * (sol.angles[*model.region_index(line.from)][h] -
                                                 sol.angles[*model.region_index(line.to)][h]);
    }
  }
  return sol;
}

DispatchSolution solve(const DispatchProblem& problem) {
  DispatchSession session(problem);
  return session.solve();
}

BalanceResiduals check_residuals(const DispatchProblem& problem, const DispatchSolution& sol) {
  BalanceResiduals res;
  const auto& model = problem.model;
  const auto& hz = problem.horizon;
  for (std::size_t h = 0; h < hz.steps; ++h) {
    for (std::size_t l = 0; l < model.lines.size(); ++l) {
      const auto& line = model.lines[l];
      const double implied = line.susceptance * (sol.angles[*model.region_index(line.from)][h] -
                                                 sol.angles[*model.region_index(line.to)][h]);
      const double f = sol.line_flows[l][h];
      res.flow_consistency = std::max(res.flow_consistency, std::abs(f - implied));
      res.flow_limit = std::max({res.flow_limit, line.flow_min - f, f - line.flow_max});
    }
    for (std::size_t r = 0; r < model.regions.size(); ++r) {
      const std::string& rid = model.regions[r].id;
      double lhs = sol.unserved[r][h] - sol.spill[r][h];
      for (std::size_t g = 0; g < model.generators.size(); ++g) {
        if (model.generators[g].region == rid) lhs += sol.generation[g][h];
      }
      for (std::size_t m = 0; m < model.aggregators.size(); ++m) {
        if (model.aggregators[m].region == rid) {
          lhs -= model.aggregators[m].inflexible_load[h] + sol.flexible_demand[m][h];
        }
      }
      double exports = 0.0;
      for (std::size_t l = 0; l < model.lines.size(); ++l) {
        if (model.lines[l].from == rid) exports += sol.line_flows[l][h];
        if (model.lines[l].to == rid) exports -= sol.line_flows[l][h];
      }
      res.nodal_balance = std::max(res.nodal_balance, std::abs(lhs - exports));
    }
  }
  for (std::size_t m = 0; m < model.aggregators.size(); ++m) {
    if (problem.is_frozen(m)) continue;
    const auto& agg = model.aggregators[m];
    double delivered = 0.0;
    for (std::size_t h = 0; h < hz.steps; ++h) {
      delivered += sol.flexible_demand[m][h] * hz.step_length;
    }
    const double target = energy_target(agg, hz, problem.battery_loss[m]);
    res.energy_neutrality = std::max(res.energy_neutrality, std::abs(delivered - target));
  }
  return res;
}

}  // namespace drsim
