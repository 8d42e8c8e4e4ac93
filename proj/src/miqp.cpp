#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <stdexcept>

#include "qp_internal.hpp"
#include "vvl/error.hpp"

namespace vvl::miqp {

const char* to_string(MiqpStatus s) {
  switch (s) {
    case MiqpStatus::kOptimal: return "optimal";
    case MiqpStatus::kInfeasible: return "infeasible";
    case MiqpStatus::kGapLimit: return "gap_limit";
    case MiqpStatus::kNodeLimit: return "node_limit";
  }
  return "?";
}

namespace {

using detail::ActiveSetResult;
using detail::ReducedQp;

struct Node {
  long id;
  double bound;
  Eigen::VectorXd y;
  std::vector<int> working;
  Eigen::VectorXd lo, hi;  // bounds of the integer y components
};

struct OpenEntry {
  double bound;
  long id;
  std::size_t slot;
  bool operator>(const OpenEntry& o) const { return bound != o.bound ? bound > o.bound : id > o.id; }
};

class BranchAndBound {
 public:
  BranchAndBound(const MiqpProblem& p, const MiqpOptions& opts) : p_(p), opts_(opts), r_(detail::reduce(p)) {
    for (int j = 0; j < r_.k; ++j)
      if (p_.integer[r_.x_of_y[j]]) int_y_.push_back(j);
  }

  MiqpSolution run() {
    MiqpSolution out;
    if (r_.inconsistent) {
      out.nodes = 1;
      return out;
    }
    const int ni = static_cast<int>(int_y_.size());
    Node root{0, -kInf, Eigen::VectorXd::Zero(r_.k), {}, Eigen::VectorXd(ni), Eigen::VectorXd(ni)};
    for (int i = 0; i < ni; ++i) {
      const int x = r_.x_of_y[int_y_[i]];
      root.lo[i] = std::ceil(p_.lb[x] - opts_.int_tol);
      root.hi[i] = std::floor(p_.ub[x] + opts_.int_tol);
    }
    evaluate(root, -1, -kInf, out);

    bool hit_node_limit = false;
    bool hit_gap = false;
    while (!open_.empty()) {
      const OpenEntry top = open_.top();
      if (has_inc_) {
        const double gap = (inc_obj_ - top.bound) / std::max(1.0, std::abs(inc_obj_));
        if (gap <= 1e-9) break;
        if (gap <= opts_.gap_tol) {
          hit_gap = true;
          break;
        }
      }
      if (nodes_ >= opts_.node_limit) {
        hit_node_limit = true;
        break;
      }
      open_.pop();
      const Node node = std::move(pool_[top.slot]);
      free_.push_back(top.slot);
      int br = -1;
      double best = 2.0;
      for (int i = 0; i < ni; ++i) {
        const double v = node.y[int_y_[i]];
        const double f = v - std::floor(v);
        if (std::min(f, 1.0 - f) <= opts_.int_tol) continue;
        const double score = std::abs(f - 0.5);
        if (score < best) {
          best = score;
          br = i;
        }
      }
      if (br < 0) continue;  // cannot happen: integral nodes are never queued
      const double v = node.y[int_y_[br]];
      for (int side = 0; side < 2; ++side) {
        Node child{next_id_++, node.bound, node.y, node.working, node.lo, node.hi};
        if (side == 0)
          child.hi[br] = std::floor(v);
        else
          child.lo[br] = std::ceil(v);
        if (child.lo[br] > child.hi[br]) continue;
        evaluate(child, node.id, node.bound, out);
      }
    }

    out.nodes = nodes_;
    while (!open_.empty()) {
      lowest_open_ = std::min(lowest_open_, open_.top().bound);
      open_.pop();
    }
    if (!has_inc_) {
      out.status = hit_node_limit ? MiqpStatus::kNodeLimit : MiqpStatus::kInfeasible;
      out.bound = hit_node_limit ? lowest_open_ : kInf;
      return out;
    }
    out.has_solution = true;
    out.x = inc_x_;
    out.objective = inc_obj_;
    out.bound = std::min(inc_obj_, lowest_open_);
    out.gap = std::max(0.0, (inc_obj_ - out.bound) / std::max(1.0, std::abs(inc_obj_)));
    out.status = hit_node_limit ? MiqpStatus::kNodeLimit
                 : hit_gap      ? MiqpStatus::kGapLimit
                                : MiqpStatus::kOptimal;
    return out;
  }

 private:
  void apply(const Node& n) {
    for (std::size_t i = 0; i < int_y_.size(); ++i) r_.set_bounds(int_y_[i], n.lo[i], n.hi[i]);
  }

  double reduced_objective(const Eigen::VectorXd& y) const {
    return 0.5 * y.dot(r_.H * y) + r_.g.dot(y) + r_.c0;
  }

  bool integral(const Eigen::VectorXd& y) const {
    for (int j : int_y_)
      if (std::abs(y[j] - std::round(y[j])) > opts_.int_tol) return false;
    return true;
  }

  void evaluate(Node& node, long parent, double parent_bound, MiqpSolution& out) {
    apply(node);
    const ActiveSetResult res = detail::solve_reduced(r_, node.y, node.working);
    ++nodes_;
    if (res.status == QpStatus::kUnbounded) throw SolverError("MIQP relaxation is unbounded");
    if (res.status == QpStatus::kNumericalFailure)
      throw SolverError("QP relaxation failed (numerical) at node " + std::to_string(node.id));
    const bool feasible = res.status == QpStatus::kOptimal;
    const double bound = feasible ? reduced_objective(res.y) : kInf;
    if (opts_.record_nodes) out.trace.push_back({node.id, parent, parent_bound, bound});
    if (!feasible) return;
    if (has_inc_ && bound >= inc_obj_ - 1e-9 * std::max(1.0, std::abs(inc_obj_))) {
      lowest_open_ = std::min(lowest_open_, bound);
      return;
    }
    if (integral(res.y)) {
      polish(node, res);
      return;
    }
    Node queued{node.id, bound, res.y, res.working, node.lo, node.hi};
    std::size_t slot;
    if (free_.empty()) {
      slot = pool_.size();
      pool_.push_back(std::move(queued));
    } else {
      slot = free_.back();
      free_.pop_back();
      pool_[slot] = std::move(queued);
    }
    open_.push({bound, node.id, slot});
  }

  // Fix the integers at their rounded values and re-solve the continuous part.
  void polish(const Node& node, const ActiveSetResult& res) {
    Node fixed = node;
    Eigen::VectorXd y = res.y;
    for (std::size_t i = 0; i < int_y_.size(); ++i) {
      const double v = std::round(res.y[int_y_[i]]);
      fixed.lo[i] = fixed.hi[i] = v;
      y[int_y_[i]] = v;
    }
    apply(fixed);
    ActiveSetResult pol = detail::solve_reduced(r_, y, res.working);
    if (pol.status != QpStatus::kOptimal) pol = res;
    const Eigen::VectorXd x = r_.lift(pol.y);
    const double obj = p_.objective(x);
    if (!has_inc_ || obj < inc_obj_) {
      has_inc_ = true;
      inc_obj_ = obj;
      inc_x_ = x;
      for (std::size_t i = 0; i < int_y_.size(); ++i) inc_x_[r_.x_of_y[int_y_[i]]] = std::round(pol.y[int_y_[i]]);
    }
  }

  const MiqpProblem& p_;
  MiqpOptions opts_;
  ReducedQp r_;
  std::vector<int> int_y_;
  std::vector<Node> pool_;
  std::vector<std::size_t> free_;
  std::priority_queue<OpenEntry, std::vector<OpenEntry>, std::greater<>> open_;
  long next_id_ = 1;
  long nodes_ = 0;
  bool has_inc_ = false;
  double inc_obj_ = kInf;
  Eigen::VectorXd inc_x_;
  double lowest_open_ = kInf;
};

double round_tie_to_zero(double v) {
  const double f = v - std::floor(v);
  if (std::abs(f - 0.5) <= 1e-9) return v > 0.0 ? std::floor(v) : std::ceil(v);
  return std::round(v);
}

}  // namespace

MiqpSolution solve_miqp(const MiqpProblem& p, const MiqpOptions& opts) {
  check_problem(p);
  BranchAndBound bb(p, opts);
  return bb.run();
}

MiqpSolution round_relaxation(const MiqpProblem& p) {
  MiqpSolution out;
  const QpSolution relax = solve_qp(p);
  out.nodes = 1;
  if (relax.status == QpStatus::kUnbounded) throw SolverError("relaxation is unbounded");
  if (relax.status == QpStatus::kNumericalFailure) throw SolverError("relaxation failed (numerical)");
  if (relax.status != QpStatus::kOptimal) return out;
  MiqpProblem fixed = p;
  for (int i = 0; i < p.num_vars(); ++i) {
    if (!p.integer[i]) continue;
    const double v = std::clamp(round_tie_to_zero(relax.x[i]), std::ceil(p.lb[i] - 1e-9),
                                std::floor(p.ub[i] + 1e-9));
    fixed.lb[i] = fixed.ub[i] = v;
  }
  const QpSolution sol = solve_qp(fixed);
  out.nodes = 2;
  out.bound = relax.objective;
  if (sol.status != QpStatus::kOptimal) return out;
  out.has_solution = true;
  out.status = MiqpStatus::kOptimal;
  out.x = sol.x;
  for (int i = 0; i < p.num_vars(); ++i)
    if (p.integer[i]) out.x[i] = fixed.lb[i];
  out.objective = p.objective(out.x);
  out.gap = std::max(0.0, (out.objective - relax.objective) / std::max(1.0, std::abs(out.objective)));
  return out;
}

}  // namespace vvl::miqp
