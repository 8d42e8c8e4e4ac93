#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "vvl/miqp.hpp"

namespace vvl::miqp::detail {

enum class RowKind : unsigned char { kIneq, kEq };

enum class RowSource : unsigned char { kIneq, kEqProjected, kBasicLb, kBasicUb, kLb, kUb };

struct RowOrigin {
  RowSource source;
  int index;     // original inequality row, projected equality column, or variable
  double scale;  // reduced row = original row / scale
};

// Equality-free form in y: x = T y + t0, minimize 0.5 y'Hy + g'y + c0 subject to A y <= b
// (rows of kind kEq as equalities). Rows [bound_row, bound_row + k) are y >= lo written as
// -y <= -lo, rows [bound_row + k, bound_row + 2k) are y <= hi. Infinite bounds are disabled.
struct ReducedQp {
  int n = 0;
  int k = 0;
  Eigen::MatrixXd T;
  Eigen::VectorXd t0;
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  double c0 = 0.0;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<RowKind> kind;
  std::vector<RowOrigin> origin;
  std::vector<char> enabled;
  int bound_row = 0;
  std::vector<int> y_of_x;  // -1 when x_i is solved from the equalities
  std::vector<int> x_of_y;
  Eigen::MatrixXd eq_basis;  // orthonormal columns spanning the retained equality directions
  std::optional<InfeasibilityCertificate> inconsistent;  // equalities alone are infeasible

  int rows() const { return static_cast<int>(b.size()); }
  int lower_row(int j) const { return bound_row + j; }
  int upper_row(int j) const { return bound_row + k + j; }
  double lower(int j) const { return enabled[lower_row(j)] ? -b[lower_row(j)] : -kInf; }
  double upper(int j) const { return enabled[upper_row(j)] ? b[upper_row(j)] : kInf; }
  void set_bounds(int j, double lo, double hi);
  Eigen::VectorXd lift(const Eigen::VectorXd& y) const { return T * y + t0; }
};

ReducedQp reduce(const MiqpProblem& p);

struct ActiveSetResult {
  QpStatus status = QpStatus::kNumericalFailure;
  Eigen::VectorXd y;
  std::vector<int> working;
  Eigen::VectorXd lambda;  // per reduced row; zero off the working set
  Eigen::VectorXd farkas;  // per reduced row when infeasible
  int iterations = 0;
};

ActiveSetResult solve_reduced(const ReducedQp& r, const Eigen::VectorXd& y0,
                              const std::vector<int>& warm_working);

// Map a reduced result back to the original variables, multipliers and certificate.
QpSolution to_solution(const MiqpProblem& p, const ReducedQp& r, const ActiveSetResult& res);

}  // namespace vvl::miqp::detail
