#include "drsim/price_taker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "drsim/errors.hpp"

namespace drsim {

const char* to_string(PriceMode mode) { return mode == PriceMode::Nodal ? "nodal" : "system"; }

PriceMode parse_price_mode(const std::string& text) {
  if (text == "nodal") return PriceMode::Nodal;
  if (text == "system") return PriceMode::System;
  throw ValidationError("unknown price mode '" + text + "' (expected nodal or system)");
}

const std::vector<double>& PriceSignal::region(const std::string& id) const {
  for (std::size_t r = 0; r < regions.size(); ++r) {
    if (regions[r] == id) return price[r];
  }
  throw ValidationError("price signal has no region '" + id + "'");
}

void check_signal(const PriceSignal& signal) {
  if (signal.price.size() != signal.regions.size()) {
    throw ValidationError("price signal needs one series per region");
  }
  for (std::size_t r = 0; r < signal.price.size(); ++r) {
    for (std::size_t h = 0; h < signal.price[r].size(); ++h) {
      const double p = signal.price[r][h];
      if (!std::isfinite(p) || p < 0.0) {
        throw ValidationError("price for " + signal.regions[r] + " at step " + std::to_string(h) +
                              " must be finite and nonnegative");
      }
    }
  }
}

std::vector<double> unshifted_flex(const AggregatorProfile& agg, const Horizon& horizon) {
  std::vector<double> out(horizon.steps);
  for (std::size_t h = 0; h < horizon.steps; ++h) {
    out[h] = std::clamp(agg.responsive_load[h] - agg.pv[h], agg.flex_min[h], agg.flex_max(h));
  }
  return out;
}

DispatchProblem without_flexibility(const DispatchProblem& problem) {
  DispatchProblem p = problem;
  p.frozen_flex.clear();
  for (const auto& agg : p.model.aggregators) p.frozen_flex.push_back(unshifted_flex(agg, p.horizon));
  return p;
}

PriceSignal derive_price_signal(const DispatchSolution& base, PriceMode mode) {
  PriceSignal s;
  s.regions = base.region_ids;
  s.price = base.nodal_price;
  // Duals come back with roundoff; anything this close to zero is zero.
  for (auto& series : s.price) {
    for (auto& p : series) {
      if (std::abs(p) < 1e-7) p = 0.0;
    }
  }
  if (mode == PriceMode::System) {
    const std::size_t H = base.horizon.steps;
    for (std::size_t h = 0; h < H; ++h) {
      double weighted = 0.0, weight = 0.0, plain = 0.0;
      for (std::size_t r = 0; r < s.regions.size(); ++r) {
        double demand = 0.0;
        for (std::size_t m = 0; m < base.aggregators.size(); ++m) {
          if (base.aggregators[m].region == s.regions[r]) {
            demand += base.aggregators[m].inflexible_load[h] + base.flexible_demand[m][h];
          }
        }
        demand = std::max(demand, 0.0);
        weighted += demand * s.price[r][h];
        weight += demand;
        plain += s.price[r][h];
      }
      const double system = weight > 0.0 ? weighted / weight : plain / s.regions.size();
      for (auto& series : s.price) series[h] = system;
    }
  }
  return s;
}

PriceSignal derive_price_signal(const DispatchProblem& problem, PriceMode mode) {
  return derive_price_signal(solve(without_flexibility(problem)), mode);
}

std::vector<double> taker_response(const AggregatorProfile& agg, const std::vector<double>& price,
                                   const Horizon& horizon, double battery_loss) {
  const std::size_t H = horizon.steps;
  const double dh = horizon.step_length;
  if (price.size() != H) throw ValidationError("price signal length does not match horizon");
  std::vector<double> pf(H);
  double target = battery_loss;
  double lo = 0.0, hi = 0.0;
  for (std::size_t h = 0; h < H; ++h) {
    target += (agg.responsive_load[h] - agg.pv[h]) * dh;
    pf[h] = agg.flex_min[h];
    lo += agg.flex_min[h] * dh;
    hi += agg.flex_max(h) * dh;
  }
  const double tol = 1e-9 * std::max(1.0, std::abs(target));
  if (target < lo - tol || target > hi + tol) {
    std::ostringstream msg;
    msg << "aggregator " << agg.region << ": horizon energy " << target
        << " MWh lies outside the flexible-demand range [" << lo << ", " << hi << "] MWh";
    throw ValidationError(msg.str());
  }
  std::vector<std::size_t> order(H);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return price[a] < price[b]; });
  double remaining = target - lo;
  for (std::size_t h : order) {
    if (remaining <= 0.0) break;
    const double room = (agg.flex_max(h) - agg.flex_min[h]) * dh;
    const double take = std::min(room, remaining);
    pf[h] += take / dh;
    remaining -= take;
  }
  return pf;
}

std::vector<std::vector<double>> taker_responses(const DispatchProblem& problem,
                                                 const PriceSignal& signal) {
  check_signal(signal);
  std::vector<std::vector<double>> out;
  for (std::size_t m = 0; m < problem.model.aggregators.size(); ++m) {
    const auto& agg = problem.model.aggregators[m];
    out.push_back(
        taker_response(agg, signal.region(agg.region), problem.horizon, problem.battery_loss.at(m)));
  }
  return out;
}

DispatchSolution taker_dispatch(const DispatchProblem& problem,
                                const std::vector<std::vector<double>>& responses) {
  if (responses.size() != problem.model.aggregators.size()) {
    throw ValidationError("need one taker response per aggregator");
  }
  DispatchProblem p = problem;
  p.frozen_flex = responses;
  return solve(p);
}

void write_price_csv(std::ostream& out, const PriceSignal& signal) {
  out << "region,step,price\n";
  char buf[64];
  for (std::size_t r = 0; r < signal.regions.size(); ++r) {
    for (std::size_t h = 0; h < signal.price[r].size(); ++h) {
      std::snprintf(buf, sizeof buf, "%.17g", signal.price[r][h]);
      out << signal.regions[r] << ',' << h << ',' << buf << '\n';
    }
  }
}

PriceSignal read_price_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line != "region,step,price") {
    throw ValidationError(source + ": expected header 'region,step,price'");
  }
  std::map<std::string, std::map<std::size_t, double>> values;
  std::vector<std::string> order;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string region, step, price;
    if (!std::getline(ss, region, ',') || !std::getline(ss, step, ',') ||
        !std::getline(ss, price)) {
      throw ValidationError(source + ": row " + std::to_string(row) + " needs three columns");
    }
    std::size_t h = 0;
    double p = 0.0;
    try {
      std::size_t used = 0;
      h = std::stoul(step, &used);
      if (used != step.size()) throw std::invalid_argument(step);
      p = std::stod(price, &used);
      if (used != price.size()) throw std::invalid_argument(price);
    } catch (const std::exception&) {
      throw ValidationError(source + ": row " + std::to_string(row) + " is not numeric");
    }
    if (!values.count(region)) order.push_back(region);
    if (!values[region].emplace(h, p).second) {
      throw ValidationError(source + ": duplicate step " + step + " for " + region);
    }
  }
  PriceSignal s;
  for (const auto& region : order) {
    const auto& steps = values[region];
    std::vector<double> series;
    for (const auto& [h, p] : steps) {
      if (h != series.size()) {
        throw ValidationError(source + ": region " + region + " is missing step " +
                              std::to_string(series.size()));
      }
      series.push_back(p);
    }
    s.regions.push_back(region);
    s.price.push_back(std::move(series));
  }
  check_signal(s);
  return s;
}

}  // namespace drsim
