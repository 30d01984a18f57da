#include "drsim/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "drsim/errors.hpp"

namespace drsim {

void check_config(const CalibrationConfig& config) {
  if (config.alpha && !(*config.alpha > 0.0)) throw ValidationError("alpha must be positive");
  if (config.beta && !(*config.beta > 0.0)) throw ValidationError("beta must be positive");
  if (!(config.epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  if (config.max_outer_iters < 1 || config.max_inner_iters < 1) {
    throw ValidationError("iteration caps must be at least 1");
  }
}

std::vector<double> resolve_alpha(const CalibrationConfig& config, const NetworkModel& model,
                                  const Horizon& horizon) {
  std::vector<double> out;
  for (const auto& agg : model.aggregators) {
    if (config.alpha) {
      out.push_back(*config.alpha);
      continue;
    }
    double peak = 0.0;
    for (std::size_t h = 0; h < horizon.steps; ++h) peak = std::max(peak, agg.responsive_load.at(h));
    // A region with no responsive load still needs a positive step.
    out.push_back(peak > 0.0 ? 0.01 * peak : 1.0);
  }
  return out;
}

std::vector<double> resolve_beta(const CalibrationConfig& config, const NetworkModel& model) {
  return std::vector<double>(model.aggregators.size(), config.beta.value_or(config.epsilon));
}

std::vector<double> soc_trajectory(const DispatchSolution& solution, std::size_t agg) {
  const auto& profile = solution.aggregators.at(agg);
  const std::size_t H = solution.horizon.steps;
  std::vector<double> soc(H);
  if (H == 0) return soc;
  soc[0] = profile.storage.soc_initial;
  for (std::size_t h = 1; h < H; ++h) {
    soc[h] = soc[h - 1] + battery_power(solution, profile.region, h - 1) * solution.horizon.step_length;
  }
  return soc;
}

double battery_energy_loss(const DispatchSolution& solution, std::size_t agg) {
  const auto& profile = solution.aggregators.at(agg);
  double charged = 0.0;
  for (std::size_t h = 0; h < solution.horizon.steps; ++h) {
    charged += std::max(0.0, battery_power(solution, profile.region, h)) * solution.horizon.step_length;
  }
  return (1.0 - profile.storage.round_trip_efficiency) * charged;
}

bool soc_within_limits(const std::vector<double>& soc, const StorageParams& storage,
                       double tolerance) {
  for (std::size_t h = 1; h < soc.size(); ++h) {
    if (soc[h] < storage.soc_min - tolerance || soc[h] > storage.soc_max + tolerance) return false;
  }
  return true;
}

LossCalibration calibrate_loss(DispatchSession& session, const std::vector<bool>& active,
                               const std::vector<double>& beta, const CalibrationConfig& config) {
  const std::size_t M = session.problem().model.aggregators.size();
  LossCalibration out;
  out.battery_loss = session.problem().battery_loss;
  out.gap.assign(M, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    if (!active.at(m)) continue;
    out.battery_loss[m] = 0.0;
    session.set_battery_loss(m, 0.0);
  }
  // Steps start at beta and halve whenever an aggregator's guess changes
  // direction. Moving the other aggregators can leave a guess that was
  // accepted earlier well above its recomputed loss, so both sides count.
  std::vector<double> step(beta.begin(), beta.end());
  std::vector<int> last_dir(M, 0);
  const double min_step = 1e-3 * config.epsilon;
  LossCalibration best;
  double best_worst = std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t it = 1; it <= config.max_inner_iters; ++it) {
    out.solution = session.solve();
    out.iterations = it;
    bool done = true, stalled = true;
    worst = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      if (!active[m]) continue;
      out.gap[m] = battery_energy_loss(out.solution, m) - out.battery_loss[m];
      worst = std::max(worst, std::abs(out.gap[m]));
      if (std::abs(out.gap[m]) > config.epsilon) {
        done = false;
        stalled = stalled && step[m] < min_step;
      }
    }
    if (done) return out;
    if (worst < best_worst) {
      best_worst = worst;
      best = out;
    }
    // Stalled: the recomputed loss jumps across the guess (degenerate
    // optimum), so no point lies within epsilon. Take the closest seen; the
    // gap goes into the report.
    if (stalled) {
      for (std::size_t m = 0; m < M; ++m) {
        if (active[m]) session.set_battery_loss(m, best.battery_loss[m]);
      }
      best.iterations = it;
      return best;
    }
    for (std::size_t m = 0; m < M; ++m) {
      if (!active[m] || std::abs(out.gap[m]) <= config.epsilon) continue;
      const int dir = out.gap[m] > 0 ? 1 : -1;
      if (last_dir[m] == -dir) step[m] *= 0.5;
      last_dir[m] = dir;
      out.battery_loss[m] = std::max(0.0, out.battery_loss[m] + dir * step[m]);
      session.set_battery_loss(m, out.battery_loss[m]);
    }
  }
  throw NonConvergence("battery loss search did not converge in " +
                           std::to_string(config.max_inner_iters) + " iterations",
                       worst);
}

LossCalibration calibrate_loss(const DispatchProblem& problem, std::size_t agg, double charge_cap,
                               const CalibrationConfig& config) {
  check_config(config);
  DispatchProblem p = problem;
  p.model.aggregators.at(agg).charge_cap = charge_cap;
  p.battery_loss.at(agg) = 0.0;
  DispatchSession session(std::move(p));
  std::vector<bool> active(session.problem().model.aggregators.size(), false);
  active[agg] = true;
  return calibrate_loss(session, active, resolve_beta(config, session.problem().model), config);
}

const char* to_string(CalibrationStatus status) {
  switch (status) {
    case CalibrationStatus::Converged: return "converged";
    case CalibrationStatus::IterationCap: return "iteration_cap";
    case CalibrationStatus::DegenerateStorage: return "degenerate_storage";
    case CalibrationStatus::ViolatedAtZero: return "violated_at_zero";
  }
  return "unknown";
}

namespace {

struct Trial {
  std::vector<LossCalibration> days;
  std::vector<bool> violated;  // per aggregator, on any day
  std::size_t inner_iterations = 0;
};

class Search {
 public:
  Search(const std::vector<DispatchProblem>& days, const CalibrationConfig& config)
      : config_(config) {
    const auto& model = days.front().model;
    M_ = model.aggregators.size();
    alpha_.assign(M_, 0.0);
    for (const auto& day : days) {
      if (day.model.aggregators.size() != M_) {
        throw ValidationError("calibration days must share the same aggregators");
      }
      const auto a = resolve_alpha(config, day.model, day.horizon);
      for (std::size_t m = 0; m < M_; ++m) alpha_[m] = std::max(alpha_[m], a[m]);
    }
    beta_ = resolve_beta(config, model);
    active_.assign(M_, false);
    degenerate_.assign(M_, false);
    for (std::size_t m = 0; m < M_; ++m) {
      const auto& s = model.aggregators[m].storage;
      degenerate_[m] = s.soc_min == s.soc_max;
      active_[m] = !degenerate_[m] && !days.front().is_frozen(m);
    }
    for (const auto& day : days) {
      problems_.push_back(day);
      for (std::size_t m = 0; m < M_; ++m) problems_.back().battery_loss[m] = 0.0;
    }
  }

  std::size_t size() const { return M_; }
  bool active(std::size_t m) const { return active_[m]; }
  bool degenerate(std::size_t m) const { return degenerate_[m]; }
  double alpha(std::size_t m) const { return alpha_[m]; }

  Trial run(const std::vector<double>& caps) {
    Trial t;
    t.violated.assign(M_, false);
    // A fresh session per trial: warm starts would make the vertex picked on
    // a degenerate face depend on the search history, and a later solve of the
    // same day at the final caps must see exactly what the search saw.
    for (const auto& problem : problems_) {
      DispatchProblem p = problem;
      for (std::size_t m = 0; m < M_; ++m) {
        if (active_[m]) p.model.aggregators[m].charge_cap = caps[m];
      }
      DispatchSession session(std::move(p));
      auto lc = calibrate_loss(session, active_, beta_, config_);
      t.inner_iterations += lc.iterations;
      for (std::size_t m = 0; m < M_; ++m) {
        if (!active_[m]) continue;
        const auto soc = soc_trajectory(lc.solution, m);
        if (!soc_within_limits(soc, lc.solution.aggregators[m].storage, config_.soc_tolerance)) {
          t.violated[m] = true;
        }
      }
      t.days.push_back(std::move(lc));
    }
    return t;
  }

 private:
  const CalibrationConfig& config_;
  std::size_t M_ = 0;
  std::vector<double> alpha_, beta_;
  std::vector<bool> active_, degenerate_;
  std::vector<DispatchProblem> problems_;
};

// Aggregators that were SOC-feasible in `before` and are not in `after`.
std::vector<bool> newly_violated(const Trial& before, const Trial& after, const Search& s) {
  std::vector<bool> out(s.size(), false);
  for (std::size_t m = 0; m < s.size(); ++m) {
    out[m] = s.active(m) && !before.violated[m] && after.violated[m];
  }
  return out;
}

}  // namespace

StorageCalibration calibrate_charge_cap(const std::vector<DispatchProblem>& days,
                                        const CalibrationConfig& config) {
  check_config(config);
  if (days.empty()) throw ValidationError("calibration needs at least one day");
  Search search(days, config);
  const std::size_t M = search.size();

  std::vector<double> caps(M, 0.0);
  std::vector<CalibrationStatus> status(M, CalibrationStatus::Converged);
  std::vector<std::size_t> outer(M, 0);
  std::size_t inner = 0;

  Trial last = search.run(caps);
  inner += last.inner_iterations;
  std::vector<bool> searching(M, false);
  for (std::size_t m = 0; m < M; ++m) {
    if (search.degenerate(m)) status[m] = CalibrationStatus::DegenerateStorage;
    if (search.active(m) && last.violated[m]) status[m] = CalibrationStatus::ViolatedAtZero;
    searching[m] = search.active(m) && !last.violated[m];
  }

  // One trial with `step` added to the caps of `movers`. On success the caps
  // advance; otherwise the movers whose own SOC broke stop where they are.
  // A break elsewhere cannot be pinned on one mover, so all of them stop.
  std::size_t iters = 0;
  auto attempt = [&](const std::vector<bool>& movers) {
    auto next = caps;
    for (std::size_t m = 0; m < M; ++m) {
      if (movers[m]) {
        next[m] += search.alpha(m);
        ++outer[m];
      }
    }
    Trial t = search.run(next);
    inner += t.inner_iterations;
    ++iters;
    const auto broke = newly_violated(last, t, search);
    bool any = false, mover_broke = false;
    for (std::size_t m = 0; m < M; ++m) {
      any = any || broke[m];
      mover_broke = mover_broke || (broke[m] && movers[m]);
    }
    if (!any) {
      caps = std::move(next);
      last = std::move(t);
      return;
    }
    for (std::size_t m = 0; m < M; ++m) {
      if (movers[m] && (broke[m] || !mover_broke)) searching[m] = false;
    }
  };
  auto cap_reached = [&](std::size_t m) { return outer[m] >= config.max_outer_iters; };

  if (config.mode == CalibrationMode::Joint) {
    while (std::find(searching.begin(), searching.end(), true) != searching.end()) {
      if (iters >= config.max_outer_iters) {
        for (std::size_t m = 0; m < M; ++m) {
          if (searching[m]) status[m] = CalibrationStatus::IterationCap;
        }
        break;
      }
      attempt(searching);
    }
  } else {
    for (std::size_t k = 0; k < M; ++k) {
      while (searching[k]) {
        if (cap_reached(k)) {
          status[k] = CalibrationStatus::IterationCap;
          break;
        }
        std::vector<bool> only(M, false);
        only[k] = true;
        attempt(only);
      }
    }
  }
  // `last` holds the solutions of the trial run at `caps`.

  StorageCalibration out;
  for (std::size_t m = 0; m < M; ++m) {
    AggregatorCalibration a;
    a.region = days.front().model.aggregators[m].region;
    a.charge_cap = caps[m];
    a.alpha = search.alpha(m);
    a.status = status[m];
    a.iterations = outer[m];
    a.inner_iterations = inner;
    a.battery_loss = last.days.front().battery_loss[m];
    for (const auto& day : last.days) {
      a.soc.push_back(soc_trajectory(day.solution, m));
      if (search.active(m)) {
        const double recomputed = battery_energy_loss(day.solution, m);
        a.loss_gap = std::max(a.loss_gap, std::abs(recomputed - day.battery_loss[m]));
      }
    }
    out.aggregators.push_back(std::move(a));
  }
  for (auto& day : last.days) out.solutions.push_back(std::move(day.solution));
  return out;
}

StorageCalibration calibrate_charge_cap(const DispatchProblem& problem,
                                        const CalibrationConfig& config) {
  return calibrate_charge_cap(std::vector<DispatchProblem>{problem}, config);
}

void write_calibration_csv(std::ostream& out, const StorageCalibration& calibration) {
  out << "aggregator,charge_cap,battery_loss,iterations,converged\n";
  char buf[128];
  for (const auto& a : calibration.aggregators) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%zu,", a.charge_cap, a.battery_loss, a.iterations);
    out << a.region << ',' << buf << (a.converged() ? "true" : "false") << '\n';
  }
}

}  // namespace drsim
