#include "drsim/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "drsim/errors.hpp"

namespace drsim {

BalancingMetrics& BalancingMetrics::operator+=(const BalancingMetrics& other) {
  spilled_energy += other.spilled_energy;
  unserved_energy += other.unserved_energy;
  unserved_hours += other.unserved_hours;
  backup_energy += other.backup_energy;
  spilled_hours += other.spilled_hours;
  hours += other.hours;
  spilled_hours_pct = hours ? 100.0 * static_cast<double>(spilled_hours) / hours : 0.0;
  return *this;
}

BalancingMetrics balancing_metrics(const DispatchSolution& s) {
  BalancingMetrics m;
  const double dh = s.horizon.step_length;
  for (std::size_t h = 0; h < s.horizon.steps; ++h) {
    bool spilled = false, short_supply = false;
    for (std::size_t r = 0; r < s.region_ids.size(); ++r) {
      m.spilled_energy += s.spill[r][h] * dh;
      m.unserved_energy += s.unserved[r][h] * dh;
      spilled = spilled || s.spill[r][h] > kActiveSlack;
      short_supply = short_supply || s.unserved[r][h] > kActiveSlack;
    }
    for (std::size_t g = 0; g < s.generator_kinds.size(); ++g) {
      if (s.generator_kinds[g] == GeneratorKind::GasTurbine) m.backup_energy += s.generation[g][h] * dh;
    }
    m.spilled_hours += spilled;
    m.unserved_hours += short_supply;
  }
  m.hours = s.horizon.steps;
  m.spilled_hours_pct = m.hours ? 100.0 * static_cast<double>(m.spilled_hours) / m.hours : 0.0;
  return m;
}

BalancingMetrics balancing_metrics(const std::vector<DispatchSolution>& solutions) {
  BalancingMetrics total;
  for (const auto& s : solutions) total += balancing_metrics(s);
  return total;
}

void LoadabilityResult::append(const LoadabilityResult& other) {
  per_hour.insert(per_hour.end(), other.per_hour.begin(), other.per_hour.end());
  average = per_hour.empty() ? 0.0
                             : std::accumulate(per_hour.begin(), per_hour.end(), 0.0) /
                                   static_cast<double>(per_hour.size());
}

namespace {

// Line flow per MW injected at each region, withdrawn at the reference.
Eigen::MatrixXd ptdf(const NetworkModel& model) {
  const std::size_t R = model.regions.size();
  const std::size_t L = model.lines.size();
  const std::size_t ref = *model.region_index(model.reference_region);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(R, R);
  for (const auto& line : model.lines) {
    const std::size_t a = *model.region_index(line.from);
    const std::size_t b = *model.region_index(line.to);
    B(a, a) += line.susceptance;
    B(b, b) += line.susceptance;
    B(a, b) -= line.susceptance;
    B(b, a) -= line.susceptance;
  }
  // Reduced system without the reference row/column.
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < R; ++r) {
    if (r != ref) keep.push_back(r);
  }
  Eigen::MatrixXd Bred(keep.size(), keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    for (std::size_t j = 0; j < keep.size(); ++j) Bred(i, j) = B(keep[i], keep[j]);
  }
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(R, R);  // [region][injection region]
  if (!keep.empty()) {
    const Eigen::MatrixXd inv = Bred.fullPivLu().inverse();
    for (std::size_t i = 0; i < keep.size(); ++i) {
      for (std::size_t j = 0; j < keep.size(); ++j) theta(keep[i], keep[j]) = inv(i, j);
    }
  }
  Eigen::MatrixXd out(L, R);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& line = model.lines[l];
    const std::size_t a = *model.region_index(line.from);
    const std::size_t b = *model.region_index(line.to);
    out.row(l) = line.susceptance * (theta.row(a) - theta.row(b));
  }
  return out;
}

// Equal shares of `total`, each capped at its headroom; caps push the excess
// onto the others. Requires total <= sum(headroom).
std::vector<double> share_equally(const std::vector<double>& headroom, double total) {
  std::vector<std::size_t> order(headroom.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return headroom[a] < headroom[b]; });
  std::vector<double> out(headroom.size(), 0.0);
  double left = total;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double share = left / static_cast<double>(order.size() - i);
    const double take = std::min(share, headroom[order[i]]);
    out[order[i]] = take;
    left -= take;
  }
  return out;
}

}  // namespace

LoadabilityResult loadability(const NetworkModel& model, const DispatchSolution& solution,
                              const std::string& target_region, double step_size,
                              const std::optional<std::string>& pickup_region) {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw ValidationError("loadability step_size must be positive");
  }
  const auto target = model.region_index(target_region);
  if (!target) throw ValidationError("loadability target region '" + target_region + "' does not exist");
  const std::string& pickup_id = pickup_region.value_or(target_region);
  if (!model.region_index(pickup_id)) {
    throw ValidationError("loadability pickup region '" + pickup_id + "' does not exist");
  }
  std::vector<std::size_t> pickup;
  for (std::size_t g = 0; g < model.generators.size(); ++g) {
    if (model.generators[g].region == pickup_id) pickup.push_back(g);
  }
  if (pickup.empty()) throw NoGeneratorsInRegion("region " + pickup_id + " has no generators");
  if (solution.generation.size() != model.generators.size() ||
      solution.line_flows.size() != model.lines.size()) {
    throw ValidationError("solution does not belong to this model");
  }

  const Eigen::MatrixXd sens = ptdf(model);
  std::vector<std::size_t> pickup_region_of(pickup.size());
  for (std::size_t i = 0; i < pickup.size(); ++i) {
    pickup_region_of[i] = *model.region_index(model.generators[pickup[i]].region);
  }
  constexpr double tol = 1e-6;

  LoadabilityResult out;
  out.target_region = target_region;
  out.step_size = step_size;
  const std::size_t H = solution.horizon.steps;
  for (std::size_t h = 0; h < H; ++h) {
    // consumption of all users; DR users' PV counts as supply, not as less demand
    double base = 0.0;
    for (const auto& agg : solution.aggregators) base += agg.inflexible_load[h] + agg.responsive_load[h];
    std::vector<double> headroom(pickup.size());
    double room = 0.0;
    for (std::size_t i = 0; i < pickup.size(); ++i) {
      headroom[i] = std::max(0.0, model.generators[pickup[i]].max_output(h) - solution.generation[pickup[i]][h]);
      room += headroom[i];
    }
    const auto kmax = static_cast<std::size_t>(std::floor((room + tol) / step_size));
    std::size_t last = 0;
    for (std::size_t k = 1; k <= kmax; ++k) {
      const double added = static_cast<double>(k) * step_size;
      const auto shares = share_equally(headroom, std::min(added, room));
      Eigen::VectorXd delta = Eigen::VectorXd::Zero(model.regions.size());
      delta(*target) -= added;
      for (std::size_t i = 0; i < pickup.size(); ++i) delta(pickup_region_of[i]) += shares[i];
      bool ok = true;
      if (model.lines.size()) {
        const Eigen::VectorXd change = sens * delta;
        for (std::size_t l = 0; l < model.lines.size() && ok; ++l) {
          const double f = solution.line_flows[l][h] + change(l);
          ok = f <= model.lines[l].flow_max + tol && f >= model.lines[l].flow_min - tol;
        }
      }
      if (!ok) break;
      last = k;
    }
    out.per_hour.push_back(base + static_cast<double>(last) * step_size);
  }
  out.average = H ? std::accumulate(out.per_hour.begin(), out.per_hour.end(), 0.0) / H : 0.0;
  return out;
}

}  // namespace drsim
