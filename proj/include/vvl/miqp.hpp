#pragma once

#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace vvl::miqp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// minimize 0.5 x'Hx + c'x + c0  s.t.  Aeq x = beq,  Ain x <= bin,  lb <= x <= ub,
// x_i integer where integer[i].
struct MiqpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd c;
  double c0 = 0.0;
  Eigen::MatrixXd Aeq;
  Eigen::VectorXd beq;
  Eigen::MatrixXd Ain;
  Eigen::VectorXd bin;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;
  std::vector<bool> integer;
  std::vector<std::string> names;  // optional, for dumps and diagnostics

  int num_vars() const { return static_cast<int>(c.size()); }
  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(H * x) + c.dot(x) + c0; }

  // Empty matrices sized for n variables with free, continuous bounds.
  static MiqpProblem with_vars(int n);
  void add_eq(const Eigen::RowVectorXd& row, double rhs);
  void add_le(const Eigen::RowVectorXd& row, double rhs);
};

// Throws std::invalid_argument when dimensions disagree, H is not PSD
// (smallest eigenvalue below -1e-9 ||H||), or an integer variable has an infinite bound.
void check_problem(const MiqpProblem& p);

// Largest violation of equality, inequality and bound constraints at x.
double constraint_violation(const MiqpProblem& p, const Eigen::VectorXd& x);

enum class QpStatus { kOptimal, kInfeasible, kUnbounded, kNumericalFailure };
const char* to_string(QpStatus s);

// Farkas ray: Aeq'y_eq + Ain'y_in - y_lb + y_ub = 0 with y_in, y_lb, y_ub >= 0 and
// beq'y_eq + bin'y_in - lb'y_lb + ub'y_ub < 0.
struct InfeasibilityCertificate {
  Eigen::VectorXd y_eq, y_in, y_lb, y_ub;
};

struct CertificateCheck {
  double ray_residual;  // inf-norm of the combined constraint normal
  double rhs_value;     // must be negative
  double min_sign;      // most negative entry among sign-constrained parts
};
CertificateCheck check_certificate(const MiqpProblem& p, const InfeasibilityCertificate& cert);

struct QpSolution {
  QpStatus status = QpStatus::kNumericalFailure;
  Eigen::VectorXd x;
  double objective = kInf;
  // Hx + c + Aeq'lambda_eq + Ain'mu_in - z_lb + z_ub = 0.
  Eigen::VectorXd lambda_eq, mu_in, z_lb, z_ub;
  double stationarity_residual = kInf;
  double primal_residual = kInf;
  double complementarity_residual = kInf;
  std::optional<InfeasibilityCertificate> certificate;
  int iterations = 0;
};

// Continuous relaxation (integrality ignored).
QpSolution solve_qp(const MiqpProblem& p);

enum class MiqpStatus { kOptimal, kInfeasible, kGapLimit, kNodeLimit };
const char* to_string(MiqpStatus s);

struct MiqpOptions {
  double gap_tol = 1e-6;  // relative to max(1, |incumbent|)
  long node_limit = 1'000'000;
  double int_tol = 1e-6;
  bool record_nodes = false;
};

struct NodeRecord {
  long id;
  long parent;  // -1 for the root
  double parent_bound;
  double bound;  // relaxation objective, +inf when infeasible
};

struct MiqpSolution {
  MiqpStatus status = MiqpStatus::kInfeasible;
  bool has_solution = false;
  Eigen::VectorXd x;
  double objective = kInf;
  double bound = -kInf;
  double gap = kInf;
  long nodes = 0;
  std::vector<NodeRecord> trace;
};

// Branch-and-bound over QP relaxations: best bound first (ties by creation order),
// branching on the most fractional variable (ties by lowest index).
MiqpSolution solve_miqp(const MiqpProblem& p, const MiqpOptions& opts = {});

// Relax, round integers to nearest (exact halves toward zero), fix them and re-solve the
// continuous part. Comparison baseline only.
MiqpSolution round_relaxation(const MiqpProblem& p);

// Structured-text (JSON) problem dump and load.
std::string dump_problem(const MiqpProblem& p);
MiqpProblem load_problem(std::string_view text);

}  // namespace vvl::miqp
