#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace ftva {

/// maximize c.x  subject to  A x = b,  x >= 0.
struct LpProblem {
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<std::string> row_labels;

  int n_vars() const { return static_cast<int>(c.size()); }
  int n_rows() const { return static_cast<int>(b.size()); }
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

std::string to_string(LpStatus status);

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd x;
  /// Equality-row multipliers u with A^T u >= c and u.b = objective.
  Eigen::VectorXd duals;
  double objective = 0.0;
  int iterations = 0;
};

class LpError : public std::runtime_error {
 public:
  LpError(LpStatus status, const std::string& what) : std::runtime_error(what), status_(status) {}
  LpStatus status() const { return status_; }

 private:
  LpStatus status_;
};

/// Dense two-phase tableau simplex with Bland's rule. Linearly dependent rows
/// are tolerated: their artificial stays basic at zero. Never throws; check
/// `status`.
LpSolution solve_lp(const LpProblem& problem);

}  // namespace ftva
