#include "drsim/lp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>

namespace drsim::lp {

namespace {

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::IterationLimit: return "iteration limit";
    case Status::NumericalTrouble: return "numerical trouble";
  }
  return "unknown";
}

std::size_t Problem::add_column(std::string name, double lower, double upper, double cost) {
  if (lower > upper) throw ValidationError("column " + name + ": lower bound above upper bound");
  columns_.push_back(Column{std::move(name), lower, upper, cost});
  return columns_.size() - 1;
}

std::size_t Problem::add_row(std::string name, double lower, double upper,
                             std::vector<Entry> entries) {
  if (lower > upper) throw ValidationError("row " + name + ": lower bound above upper bound");
  for (const auto& e : entries) {
    if (e.col >= columns_.size()) throw ValidationError("row " + name + ": unknown column");
  }
  rows_.push_back(Row{std::move(name), lower, upper, std::move(entries)});
  return rows_.size() - 1;
}

void Problem::set_column_bounds(std::size_t j, double lower, double upper) {
  if (lower > upper) throw ValidationError("column " + columns_.at(j).name + ": inverted bounds");
  columns_.at(j).lower = lower;
  columns_.at(j).upper = upper;
}

void Problem::set_row_bounds(std::size_t i, double lower, double upper) {
  if (lower > upper) throw ValidationError("row " + rows_.at(i).name + ": inverted bounds");
  rows_.at(i).lower = lower;
  rows_.at(i).upper = upper;
}

double Problem::objective_value(const std::vector<double>& x) const {
  double total = 0.0;
  for (std::size_t j = 0; j < columns_.size(); ++j) total += columns_[j].cost * x.at(j);
  return total;
}

double Problem::max_violation(const std::vector<double>& x) const {
  double worst = 0.0;
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    worst = std::max(worst, columns_[j].lower - x.at(j));
    worst = std::max(worst, x.at(j) - columns_[j].upper);
  }
  for (const auto& row : rows_) {
    double activity = 0.0;
    for (const auto& e : row.entries) activity += e.value * x.at(e.col);
    worst = std::max(worst, row.lower - activity);
    worst = std::max(worst, activity - row.upper);
  }
  return worst;
}

void Problem::write_mps(std::ostream& out, const std::string& name) const {
  out << "NAME " << name << "\n";
  out << "ROWS\n N  COST\n";
  for (const auto& row : rows_) {
    char type = 'E';
    if (row.lower == row.upper) {
      type = 'E';
    } else if (!finite(row.lower)) {
      type = 'L';
    } else {
      type = 'G';
    }
    out << " " << type << "  " << row.name << "\n";
  }
  std::vector<std::vector<std::pair<std::size_t, double>>> by_col(columns_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    for (const auto& e : rows_[i].entries) by_col[e.col].emplace_back(i, e.value);
  }
  out << "COLUMNS\n";
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const auto& c = columns_[j];
    if (c.cost != 0.0) out << " " << c.name << " COST " << num(c.cost) << "\n";
    for (const auto& [i, v] : by_col[j]) {
      out << " " << c.name << " " << rows_[i].name << " " << num(v) << "\n";
    }
  }
  out << "RHS\n";
  for (const auto& row : rows_) {
    double rhs = (row.lower == row.upper || finite(row.lower)) ? row.lower : row.upper;
    if (rhs != 0.0) out << " RHS " << row.name << " " << num(rhs) << "\n";
  }
  bool ranges_header = false;
  for (const auto& row : rows_) {
    if (row.lower != row.upper && finite(row.lower) && finite(row.upper)) {
      if (!ranges_header) {
        out << "RANGES\n";
        ranges_header = true;
      }
      out << " RNG " << row.name << " " << num(row.upper - row.lower) << "\n";
    }
  }
  out << "BOUNDS\n";
  for (const auto& c : columns_) {
    if (c.lower == c.upper) {
      out << " FX BND " << c.name << " " << num(c.lower) << "\n";
    } else if (!finite(c.lower) && !finite(c.upper)) {
      out << " FR BND " << c.name << "\n";
    } else {
      if (!finite(c.lower)) {
        out << " MI BND " << c.name << "\n";
      } else if (c.lower != 0.0) {
        out << " LO BND " << c.name << " " << num(c.lower) << "\n";
      }
      if (finite(c.upper)) out << " UP BND " << c.name << " " << num(c.upper) << "\n";
    }
  }
  out << "ENDATA\n";
}

// ---------------------------------------------------------------------------

Simplex::Simplex(Problem problem, SolverOptions options)
    : problem_(std::move(problem)), options_(options) {
  m_ = problem_.num_rows();
  n_ = problem_.num_columns();
  width_ = n_ + 2 * m_;
  cols_.assign(n_, {});
  for (std::size_t i = 0; i < m_; ++i) {
    for (const auto& e : problem_.row(i).entries) {
      if (e.value != 0.0) cols_[e.col].push_back(Entry{i, e.value});
    }
  }
  double max_cost = 1.0;
  for (const auto& c : problem_.columns()) max_cost = std::max(max_cost, std::abs(c.cost));
  dual_tol_ = options_.dual_tolerance * max_cost;
}

void Simplex::set_column_bounds(std::size_t j, double lower, double upper) {
  problem_.set_column_bounds(j, lower, upper);
  if (!warm_) return;
  lo_[j] = lower;
  up_[j] = upper;
  update_bound_state(j);
}

void Simplex::set_row_bounds(std::size_t i, double lower, double upper) {
  problem_.set_row_bounds(i, lower, upper);
  if (!warm_) return;
  lo_[n_ + i] = lower;
  up_[n_ + i] = upper;
  update_bound_state(n_ + i);
}

void Simplex::update_bound_state(std::size_t j) {
  if (state_[j] == VarState::Basic) return;
  double target = 0.0;
  if (lo_[j] == up_[j]) {
    state_[j] = VarState::Fixed;
    target = lo_[j];
  } else if (state_[j] == VarState::AtUpper && finite(up_[j])) {
    target = up_[j];
  } else if (finite(lo_[j])) {
    state_[j] = VarState::AtLower;
    target = lo_[j];
  } else if (finite(up_[j])) {
    state_[j] = VarState::AtUpper;
    target = up_[j];
  } else {
    state_[j] = VarState::Free;
    target = 0.0;
  }
  move_nonbasic(j, target);
}

void Simplex::move_nonbasic(std::size_t j, double new_value) {
  const double delta = new_value - value_[j];
  if (delta == 0.0) return;
  for (std::size_t i = 0; i < m_; ++i) {
    const double a = tab(i, j);
    if (a != 0.0) value_[basis_[i]] -= a * delta;
  }
  value_[j] = new_value;
}

void Simplex::cold_start() {
  const auto& cols = problem_.columns();
  const auto& rows = problem_.rows();
  lo_.assign(width_, 0.0);
  up_.assign(width_, 0.0);
  cost_.assign(width_, 0.0);
  value_.assign(width_, 0.0);
  state_.assign(width_, VarState::Fixed);
  basis_.assign(m_, 0);
  art_sign_.assign(m_, 0.0);
  tableau_.assign(m_ * width_, 0.0);

  for (std::size_t j = 0; j < n_; ++j) {
    lo_[j] = cols[j].lower;
    up_[j] = cols[j].upper;
    cost_[j] = cols[j].cost;
  }
  for (std::size_t i = 0; i < m_; ++i) {
    lo_[n_ + i] = rows[i].lower;
    up_[n_ + i] = rows[i].upper;
  }
  auto place_nonbasic = [&](std::size_t j) {
    if (lo_[j] == up_[j]) {
      state_[j] = VarState::Fixed;
      value_[j] = lo_[j];
    } else if (finite(lo_[j])) {
      state_[j] = VarState::AtLower;
      value_[j] = lo_[j];
    } else if (finite(up_[j])) {
      state_[j] = VarState::AtUpper;
      value_[j] = up_[j];
    } else {
      state_[j] = VarState::Free;
      value_[j] = 0.0;
    }
  };
  for (std::size_t j = 0; j < n_ + m_; ++j) place_nonbasic(j);

  std::vector<double> activity(m_, 0.0);
  for (std::size_t i = 0; i < m_; ++i) {
    for (const auto& e : rows[i].entries) activity[i] += e.value * value_[e.col];
  }

  std::vector<bool> used(n_, false);
  const double tol = options_.primal_tolerance;
  for (std::size_t i = 0; i < m_; ++i) {
    const std::size_t logical = n_ + i;
    const double r = activity[i];
    double pivot_coef = -1.0;
    if (r >= lo_[logical] - tol && r <= up_[logical] + tol) {
      basis_[i] = logical;
      state_[logical] = VarState::Basic;
      value_[logical] = r;
    } else {
      const double bound = r < lo_[logical] ? lo_[logical] : up_[logical];
      state_[logical] = (lo_[logical] == up_[logical])
                            ? VarState::Fixed
                            : (r < lo_[logical] ? VarState::AtLower : VarState::AtUpper);
      value_[logical] = bound;
      // Crash: a column singleton of this row that can absorb the residual.
      bool crashed = false;
      for (const auto& e : rows[i].entries) {
        const std::size_t j = e.col;
        if (used[j] || state_[j] == VarState::Fixed || cols_[j].size() != 1 || e.value == 0.0) {
          continue;
        }
        const double candidate = value_[j] + (bound - r) / e.value;
        if (candidate >= lo_[j] - tol && candidate <= up_[j] + tol) {
          used[j] = true;
          basis_[i] = j;
          state_[j] = VarState::Basic;
          value_[j] = candidate;
          pivot_coef = e.value;
          crashed = true;
          break;
        }
      }
      if (!crashed) {
        const std::size_t art = n_ + m_ + i;
        const double sigma = bound - r > 0 ? 1.0 : -1.0;
        art_sign_[i] = sigma;
        lo_[art] = 0.0;
        up_[art] = kInf;
        cost_[art] = 0.0;
        basis_[i] = art;
        state_[art] = VarState::Basic;
        value_[art] = std::abs(bound - r);
        pivot_coef = sigma;
      }
    }
    double* trow = &tableau_[i * width_];
    for (const auto& e : rows[i].entries) trow[e.col] += e.value / pivot_coef;
    trow[n_ + i] = -1.0 / pivot_coef;
    if (art_sign_[i] != 0.0) trow[n_ + m_ + i] = art_sign_[i] / pivot_coef;
  }
  iterations_ = 0;
  warm_ = false;
}

void Simplex::compute_reduced_costs(const std::vector<double>& costs) {
  reduced_ = costs;
  for (std::size_t i = 0; i < m_; ++i) {
    const double cb = costs[basis_[i]];
    if (cb == 0.0) continue;
    const double* trow = &tableau_[i * width_];
    for (std::size_t j = 0; j < width_; ++j) {
      if (trow[j] != 0.0) reduced_[j] -= cb * trow[j];
    }
  }
  for (std::size_t i = 0; i < m_; ++i) reduced_[basis_[i]] = 0.0;
}

void Simplex::pivot(std::size_t r, std::size_t q) {
  double* prow = &tableau_[r * width_];
  const double inv = 1.0 / prow[q];
  std::vector<std::size_t> nz;
  nz.reserve(64);
  for (std::size_t k = 0; k < width_; ++k) {
    if (prow[k] != 0.0) {
      prow[k] *= inv;
      if (std::abs(prow[k]) < 1e-14) {
        prow[k] = 0.0;
      } else {
        nz.push_back(k);
      }
    }
  }
  prow[q] = 1.0;
  for (std::size_t i = 0; i < m_; ++i) {
    if (i == r) continue;
    double* trow = &tableau_[i * width_];
    const double f = trow[q];
    if (f == 0.0) continue;
    for (std::size_t k : nz) {
      double v = trow[k] - f * prow[k];
      trow[k] = std::abs(v) < 1e-13 ? 0.0 : v;
    }
    trow[q] = 0.0;
  }
  const double fd = reduced_[q];
  if (fd != 0.0) {
    for (std::size_t k : nz) reduced_[k] -= fd * prow[k];
  }
  reduced_[q] = 0.0;
  basis_[r] = q;
  state_[q] = VarState::Basic;
  ++iterations_;
}

bool Simplex::primal(bool phase_one) {
  const double ptol = options_.primal_tolerance;
  const double piv_tol = options_.pivot_tolerance;
  const double dtol = phase_one ? 1e-10 : dual_tol_;
  std::size_t degenerate = 0;
  while (true) {
    if (iterations_ >= options_.iteration_limit) return false;
    const bool bland = degenerate > options_.degenerate_switch;

    std::size_t q = width_;
    double best = 0.0;
    for (std::size_t j = 0; j < width_; ++j) {
      const VarState s = state_[j];
      if (s == VarState::Basic || s == VarState::Fixed) continue;
      const double d = reduced_[j];
      double score = 0.0;
      if (s == VarState::AtLower) {
        if (d < -dtol) score = -d;
      } else if (s == VarState::AtUpper) {
        if (d > dtol) score = d;
      } else if (std::abs(d) > dtol) {
        score = std::abs(d);
      }
      if (score <= 0.0) continue;
      if (bland) {
        q = j;
        break;
      }
      if (score > best) {
        best = score;
        q = j;
      }
    }
    if (q == width_) return true;

    const double dir = reduced_[q] < 0.0 ? 1.0 : -1.0;
    // Harris pass one: largest step keeping basics within relaxed bounds.
    double theta_max = kInf;
    for (std::size_t i = 0; i < m_; ++i) {
      const double alpha = dir * tab(i, q);
      if (std::abs(alpha) <= piv_tol) continue;
      const std::size_t b = basis_[i];
      if (alpha > 0.0 && finite(lo_[b])) {
        theta_max = std::min(theta_max, (value_[b] - lo_[b] + ptol) / alpha);
      } else if (alpha < 0.0 && finite(up_[b])) {
        theta_max = std::min(theta_max, (up_[b] - value_[b] + ptol) / -alpha);
      }
    }
    std::size_t leave = m_;
    double leave_ratio = kInf;
    double leave_alpha = 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      const double alpha = dir * tab(i, q);
      if (std::abs(alpha) <= piv_tol) continue;
      const std::size_t b = basis_[i];
      double ratio = kInf;
      if (alpha > 0.0 && finite(lo_[b])) {
        ratio = (value_[b] - lo_[b]) / alpha;
      } else if (alpha < 0.0 && finite(up_[b])) {
        ratio = (up_[b] - value_[b]) / -alpha;
      } else {
        continue;
      }
      ratio = std::max(ratio, 0.0);
      if (bland) {
        if (ratio < leave_ratio - 1e-12 ||
            (ratio <= leave_ratio + 1e-12 && leave < m_ && b < basis_[leave])) {
          leave = i;
          leave_ratio = ratio;
          leave_alpha = alpha;
        }
      } else if (ratio <= theta_max) {
        if (leave == m_ || std::abs(alpha) > std::abs(leave_alpha)) {
          leave = i;
          leave_ratio = ratio;
          leave_alpha = alpha;
        }
      }
    }

    const double flip = up_[q] - lo_[q];
    const bool do_flip = finite(flip) && (leave == m_ || flip <= leave_ratio);
    if (!do_flip && leave == m_) return false;  // unbounded
    const double step = do_flip ? flip : leave_ratio;

    if (step > 0.0) {
      for (std::size_t i = 0; i < m_; ++i) {
        const double a = tab(i, q);
        if (a != 0.0) value_[basis_[i]] -= dir * step * a;
      }
      value_[q] += dir * step;
    }
    if (step <= 1e-12) {
      ++degenerate;
    } else {
      degenerate = 0;
    }

    if (do_flip) {
      state_[q] = dir > 0 ? VarState::AtUpper : VarState::AtLower;
      value_[q] = dir > 0 ? up_[q] : lo_[q];
      ++iterations_;
      continue;
    }
    const std::size_t b = basis_[leave];
    if (leave_alpha > 0.0) {
      value_[b] = lo_[b];
      state_[b] = lo_[b] == up_[b] ? VarState::Fixed : VarState::AtLower;
    } else {
      value_[b] = up_[b];
      state_[b] = lo_[b] == up_[b] ? VarState::Fixed : VarState::AtUpper;
    }
    pivot(leave, q);
  }
}

bool Simplex::dual() {
  const double ptol = options_.primal_tolerance;
  const double piv_tol = options_.pivot_tolerance;
  while (true) {
    if (iterations_ >= options_.iteration_limit) return false;
    std::size_t r = m_;
    double worst = 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t b = basis_[i];
      const double scale = 1.0 + std::abs(value_[b]);
      double infeas = 0.0;
      if (value_[b] < lo_[b] - ptol * scale) infeas = lo_[b] - value_[b];
      if (value_[b] > up_[b] + ptol * scale) infeas = value_[b] - up_[b];
      if (infeas > worst) {
        worst = infeas;
        r = i;
      }
    }
    if (r == m_) return true;
    const std::size_t b = basis_[r];
    const bool increase = value_[b] < lo_[b];
    const double target = increase ? lo_[b] : up_[b];

    std::size_t q = width_;
    double best_ratio = kInf;
    double best_alpha = 0.0;
    for (std::size_t j = 0; j < width_; ++j) {
      const VarState s = state_[j];
      if (s == VarState::Basic || s == VarState::Fixed) continue;
      const double a = tab(r, j);
      if (std::abs(a) <= piv_tol) continue;
      bool eligible = false;
      if (s == VarState::Free) {
        eligible = true;
      } else if (s == VarState::AtLower) {
        eligible = increase ? a < 0.0 : a > 0.0;
      } else {
        eligible = increase ? a > 0.0 : a < 0.0;
      }
      if (!eligible) continue;
      const double ratio = std::abs(reduced_[j]) / std::abs(a);
      if (ratio < best_ratio - 1e-12 ||
          (ratio <= best_ratio + 1e-12 && std::abs(a) > std::abs(best_alpha))) {
        best_ratio = ratio;
        best_alpha = a;
        q = j;
      }
    }
    if (q == width_) return false;  // primal infeasible

    const double delta = (value_[b] - target) / tab(r, q);
    for (std::size_t i = 0; i < m_; ++i) {
      const double a = tab(i, q);
      if (a != 0.0) value_[basis_[i]] -= a * delta;
    }
    value_[q] += delta;
    value_[b] = target;
    state_[b] = lo_[b] == up_[b] ? VarState::Fixed
                                 : (increase ? VarState::AtLower : VarState::AtUpper);
    pivot(r, q);
  }
}

void Simplex::rebuild_tableau() {
  if (m_ == 0) return;
  Eigen::MatrixXd basis_matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m_),
                                                       static_cast<Eigen::Index>(m_));
  for (std::size_t k = 0; k < m_; ++k) {
    const std::size_t j = basis_[k];
    const auto col = static_cast<Eigen::Index>(k);
    if (j < n_) {
      for (const auto& e : cols_[j]) basis_matrix(static_cast<Eigen::Index>(e.col), col) = e.value;
    } else if (j < n_ + m_) {
      basis_matrix(static_cast<Eigen::Index>(j - n_), col) = -1.0;
    } else {
      basis_matrix(static_cast<Eigen::Index>(j - n_ - m_), col) = art_sign_[j - n_ - m_];
    }
  }
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m_),
                                               static_cast<Eigen::Index>(width_));
  for (std::size_t j = 0; j < n_; ++j) {
    for (const auto& e : cols_[j]) full(static_cast<Eigen::Index>(e.col), static_cast<Eigen::Index>(j)) = e.value;
  }
  for (std::size_t i = 0; i < m_; ++i) {
    full(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n_ + i)) = -1.0;
    full(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n_ + m_ + i)) = art_sign_[i];
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(basis_matrix);
  Eigen::MatrixXd t = lu.solve(full);
  for (std::size_t i = 0; i < m_; ++i) {
    for (std::size_t j = 0; j < width_; ++j) {
      const double v = t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      tab(i, j) = std::abs(v) < 1e-13 ? 0.0 : v;
    }
    tab(i, basis_[i]) = 1.0;
  }
  compute_reduced_costs(cost_);
}

// Recomputes basic values and duals from an LU factorization of the basis and
// checks them against the tableau's view. Returns false when the tableau has
// drifted; in that case it has been rebuilt from the factorization.
bool Simplex::refresh_and_verify() {
  if (m_ == 0) {
    duals_.clear();
    return true;
  }
  const auto mm = static_cast<Eigen::Index>(m_);
  Eigen::MatrixXd basis_matrix = Eigen::MatrixXd::Zero(mm, mm);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(mm);
  Eigen::VectorXd cb(mm);
  for (std::size_t k = 0; k < m_; ++k) {
    const std::size_t j = basis_[k];
    const auto col = static_cast<Eigen::Index>(k);
    cb(col) = cost_[j];
    if (j < n_) {
      for (const auto& e : cols_[j]) basis_matrix(static_cast<Eigen::Index>(e.col), col) = e.value;
    } else if (j < n_ + m_) {
      basis_matrix(static_cast<Eigen::Index>(j - n_), col) = -1.0;
    } else {
      basis_matrix(static_cast<Eigen::Index>(j - n_ - m_), col) = art_sign_[j - n_ - m_];
    }
  }
  for (std::size_t j = 0; j < width_; ++j) {
    if (state_[j] == VarState::Basic || value_[j] == 0.0) continue;
    if (j < n_) {
      for (const auto& e : cols_[j]) rhs(static_cast<Eigen::Index>(e.col)) -= e.value * value_[j];
    } else if (j < n_ + m_) {
      rhs(static_cast<Eigen::Index>(j - n_)) += value_[j];
    } else {
      rhs(static_cast<Eigen::Index>(j - n_ - m_)) -= art_sign_[j - n_ - m_] * value_[j];
    }
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(basis_matrix);
  const Eigen::VectorXd xb = lu.solve(rhs);
  const Eigen::VectorXd y = lu.transpose().solve(cb);
  if (!xb.allFinite() || !y.allFinite()) {
    throw NumericalFailure("simplex: singular basis during refactorization");
  }

  bool ok = true;
  const double ptol = 1e-7;
  for (std::size_t k = 0; k < m_; ++k) {
    const std::size_t j = basis_[k];
    const double v = xb(static_cast<Eigen::Index>(k));
    const double scale = 1.0 + std::abs(v);
    if (v < lo_[j] - ptol * scale || v > up_[j] + ptol * scale) ok = false;
    value_[j] = v;
  }
  for (std::size_t j = 0; j < n_ + m_ && ok; ++j) {
    const VarState s = state_[j];
    if (s == VarState::Basic || s == VarState::Fixed) continue;
    double d = 0.0;
    if (j < n_) {
      d = cost_[j];
      for (const auto& e : cols_[j]) d -= y(static_cast<Eigen::Index>(e.col)) * e.value;
    } else {
      d = y(static_cast<Eigen::Index>(j - n_));
    }
    const double tol = 1e3 * dual_tol_;
    if ((s == VarState::AtLower && d < -tol) || (s == VarState::AtUpper && d > tol) ||
        (s == VarState::Free && std::abs(d) > tol)) {
      ok = false;
    }
  }
  duals_.assign(y.data(), y.data() + m_);
  if (!ok) rebuild_tableau();
  return ok;
}

Result Simplex::solve() {
  optimal_ = false;
  bool from_warm = warm_;
  if (from_warm) {
    // Nonbasic variables with two finite bounds sit at the bound their reduced
    // cost prefers, which restores dual feasibility after a bound change.
    bool dual_feasible = true;
    for (std::size_t j = 0; j < width_; ++j) {
      const VarState s = state_[j];
      if (s == VarState::Basic || s == VarState::Fixed) continue;
      const double d = reduced_[j];
      const bool wrong = (s == VarState::AtLower && d < -dual_tol_) ||
                         (s == VarState::AtUpper && d > dual_tol_) ||
                         (s == VarState::Free && std::abs(d) > dual_tol_);
      if (!wrong) continue;
      if (finite(lo_[j]) && finite(up_[j])) {
        state_[j] = d < 0.0 ? VarState::AtUpper : VarState::AtLower;
        move_nonbasic(j, d < 0.0 ? up_[j] : lo_[j]);
      } else {
        dual_feasible = false;
      }
    }
    if (!dual_feasible) from_warm = false;
  }

  if (!from_warm) {
    cold_start();
    std::vector<double> phase_one_costs(width_, 0.0);
    bool any_art = false;
    for (std::size_t i = 0; i < m_; ++i) {
      if (art_sign_[i] != 0.0) {
        phase_one_costs[n_ + m_ + i] = 1.0;
        any_art = true;
      }
    }
    if (any_art) {
      compute_reduced_costs(phase_one_costs);
      if (!primal(true)) {
        return extract(iterations_ >= options_.iteration_limit ? Status::IterationLimit
                                                               : Status::NumericalTrouble);
      }
      double infeas = 0.0;
      for (std::size_t i = 0; i < m_; ++i) {
        if (art_sign_[i] != 0.0) infeas += value_[n_ + m_ + i];
      }
      if (infeas > 1e-7) return extract(Status::Infeasible);
    }
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t art = n_ + m_ + i;
      lo_[art] = 0.0;
      up_[art] = 0.0;
      if (state_[art] != VarState::Basic) {
        state_[art] = VarState::Fixed;
        value_[art] = 0.0;
      }
    }
    compute_reduced_costs(cost_);
    warm_ = true;
  }

  const std::size_t start_iterations = iterations_;
  for (int attempt = 0; attempt < 4; ++attempt) {
    if (!dual()) {
      if (iterations_ >= options_.iteration_limit) return extract(Status::IterationLimit);
      warm_ = false;
      return extract(Status::Infeasible);
    }
    if (!primal(false)) {
      if (iterations_ >= options_.iteration_limit) return extract(Status::IterationLimit);
      warm_ = false;
      return extract(Status::Unbounded);
    }
    if ((from_warm && iterations_ == start_iterations && !duals_.empty()) ||
        refresh_and_verify()) {
      optimal_ = true;
      return extract(Status::Optimal);
    }
  }
  warm_ = false;
  return extract(Status::NumericalTrouble);
}

Result Simplex::refine(const std::vector<double>& secondary) {
  if (!optimal_) throw NumericalFailure("simplex: refine needs an optimal solve first");
  if (secondary.size() != n_) throw ValidationError("simplex: secondary objective has wrong size");

  // Everything pivoting touches, so the primary state can be put back.
  const auto tableau = tableau_;
  const auto lo = lo_, up = up_, cost = cost_, value = value_, reduced = reduced_;
  const auto state = state_;
  const auto basis = basis_;
  const auto duals = duals_;
  const double dual_tol = dual_tol_;
  const std::size_t iterations = iterations_;

  // Optimal face: complementary slackness with the current duals.
  for (std::size_t j = 0; j < n_ + m_; ++j) {
    const VarState s = state_[j];
    if (s == VarState::Basic || s == VarState::Fixed) continue;
    if (std::abs(reduced_[j]) > 1e-9) {
      lo_[j] = up_[j] = value_[j];
      state_[j] = VarState::Fixed;
    }
  }
  std::fill(cost_.begin(), cost_.end(), 0.0);
  std::copy(secondary.begin(), secondary.end(), cost_.begin());
  double max_cost = 1.0;
  for (double c : secondary) max_cost = std::max(max_cost, std::abs(c));
  dual_tol_ = options_.dual_tolerance * max_cost;
  compute_reduced_costs(cost_);

  bool ok = false;
  for (int attempt = 0; attempt < 4 && !ok; ++attempt) {
    if (!primal(false)) break;
    ok = refresh_and_verify();
  }
  Result r = extract(Status::Optimal);

  tableau_ = tableau;
  lo_ = lo;
  up_ = up;
  cost_ = cost;
  value_ = value;
  reduced_ = reduced;
  state_ = state;
  basis_ = basis;
  duals_ = duals;
  dual_tol_ = dual_tol;
  iterations_ = iterations;
  if (!ok) return extract(Status::Optimal);

  r.objective = 0.0;
  for (std::size_t j = 0; j < n_; ++j) r.objective += cost_[j] * r.x[j];
  r.duals = duals_;
  r.duals.resize(m_, 0.0);
  r.iterations = iterations_;
  return r;
}

Result Simplex::extract(Status status) const {
  Result r;
  r.status = status;
  r.iterations = iterations_;
  r.x.assign(value_.begin(), value_.begin() + static_cast<std::ptrdiff_t>(n_));
  r.objective = 0.0;
  for (std::size_t j = 0; j < n_; ++j) r.objective += cost_[j] * r.x[j];
  r.duals = duals_;
  r.duals.resize(m_, 0.0);
  r.row_activity.assign(m_, 0.0);
  for (std::size_t j = 0; j < n_; ++j) {
    for (const auto& e : cols_[j]) r.row_activity[e.col] += e.value * r.x[j];
  }
  return r;
}

Result solve(const Problem& problem, const SolverOptions& options) {
  Simplex simplex(problem, options);
  return simplex.solve();
}

}  // namespace drsim::lp
