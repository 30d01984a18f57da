#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "drsim/errors.hpp"

namespace drsim::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Column {
  std::string name;
  double lower = 0.0;
  double upper = kInf;
  double cost = 0.0;
};

struct Entry {
  std::size_t col;
  double value;
};

// Range row: lower <= sum(entries) <= upper. Equality rows use lower == upper.
struct Row {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<Entry> entries;
};

/// Linear program in bounded form: min c'x s.t. row ranges and column bounds.
class Problem {
 public:
  std::size_t add_column(std::string name, double lower, double upper, double cost);
  std::size_t add_row(std::string name, double lower, double upper, std::vector<Entry> entries);

  std::size_t num_columns() const { return columns_.size(); }
  std::size_t num_rows() const { return rows_.size(); }
  const std::vector<Column>& columns() const { return columns_; }
  const std::vector<Row>& rows() const { return rows_; }
  const Column& column(std::size_t j) const { return columns_.at(j); }
  const Row& row(std::size_t i) const { return rows_.at(i); }

  void set_column_bounds(std::size_t j, double lower, double upper);
  void set_row_bounds(std::size_t i, double lower, double upper);

  double objective_value(const std::vector<double>& x) const;
  // Largest violation of any row range or column bound at x.
  double max_violation(const std::vector<double>& x) const;

  // Free-format MPS; ranged rows go to the RANGES section.
  void write_mps(std::ostream& out, const std::string& name = "DRSIM") const;

 private:
  std::vector<Column> columns_;
  std::vector<Row> rows_;
};

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit, NumericalTrouble };

const char* to_string(Status s);

struct Result {
  Status status = Status::NumericalTrouble;
  double objective = 0.0;
  std::vector<double> x;      // structural values
  std::vector<double> duals;  // d objective / d row activity, one per row
  std::vector<double> row_activity;
  std::size_t iterations = 0;
};

struct SolverOptions {
  double primal_tolerance = 1e-9;
  double dual_tolerance = 1e-10;  // scaled by max(1, max |cost|)
  double pivot_tolerance = 1e-9;
  std::size_t iteration_limit = 200000;
  // Consecutive degenerate pivots before switching to Bland's rule.
  std::size_t degenerate_switch = 60;
};

/// Bounded-variable simplex over a dense tableau.
///
/// The first solve runs a two-phase primal simplex from a crash basis of
/// row logicals and column singletons. Later calls after bound changes
/// re-optimize from the previous basis with the dual simplex, which keeps
/// repeated solves of the same structure cheap. Pricing and ratio tests
/// break ties by lowest index, so results are deterministic.
class Simplex {
 public:
  explicit Simplex(Problem problem, SolverOptions options = {});

  const Problem& problem() const { return problem_; }

  Result solve();

  /// Among the optimal solutions of the last successful solve(), finds one
  /// minimizing `secondary`'x (one cost per column). Variables whose reduced
  /// cost is nonzero stay at their bound, so the primary objective does not
  /// move. The returned objective and duals are the primary ones; the solver
  /// state is left as solve() left it.
  Result refine(const std::vector<double>& secondary);

  void set_column_bounds(std::size_t j, double lower, double upper);
  void set_row_bounds(std::size_t i, double lower, double upper);

 private:
  enum class VarState : unsigned char { Basic, AtLower, AtUpper, Free, Fixed };

  void cold_start();
  bool primal(bool phase_one);
  bool dual();
  bool refresh_and_verify();
  void rebuild_tableau();
  void compute_reduced_costs(const std::vector<double>& costs);
  void pivot(std::size_t row, std::size_t col);
  void move_nonbasic(std::size_t j, double new_value);
  void update_bound_state(std::size_t j);
  Result extract(Status status) const;

  double lower(std::size_t j) const { return lo_[j]; }
  double upper(std::size_t j) const { return up_[j]; }
  double& tab(std::size_t i, std::size_t j) { return tableau_[i * width_ + j]; }
  double tab(std::size_t i, std::size_t j) const { return tableau_[i * width_ + j]; }

  Problem problem_;
  SolverOptions options_;
  std::size_t m_ = 0;      // rows
  std::size_t n_ = 0;      // structural columns
  std::size_t width_ = 0;  // n + m logicals + m artificials
  std::vector<double> tableau_;
  std::vector<double> lo_, up_, cost_, value_, reduced_;
  std::vector<VarState> state_;
  std::vector<std::size_t> basis_;      // basic variable per row
  std::vector<double> art_sign_;        // artificial column sign per row (0 when unused)
  std::vector<std::vector<Entry>> cols_;  // structural columns, column-wise
  std::vector<double> duals_;
  double dual_tol_ = 1e-10;
  bool warm_ = false;
  bool optimal_ = false;
  std::size_t iterations_ = 0;
};

/// One-shot convenience wrapper.
Result solve(const Problem& problem, const SolverOptions& options = {});

}  // namespace drsim::lp
