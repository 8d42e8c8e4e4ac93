#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "qp_internal.hpp"

namespace vvl::miqp {

MiqpProblem MiqpProblem::with_vars(int n) {
  MiqpProblem p;
  p.H = Eigen::MatrixXd::Zero(n, n);
  p.c = Eigen::VectorXd::Zero(n);
  p.Aeq.resize(0, n);
  p.beq.resize(0);
  p.Ain.resize(0, n);
  p.bin.resize(0);
  p.lb = Eigen::VectorXd::Constant(n, -kInf);
  p.ub = Eigen::VectorXd::Constant(n, kInf);
  p.integer.assign(n, false);
  return p;
}

namespace {

void append_row(Eigen::MatrixXd& a, Eigen::VectorXd& b, const Eigen::RowVectorXd& row, double rhs) {
  if (row.size() != a.cols()) throw std::invalid_argument("constraint row has wrong length");
  const Eigen::Index m = a.rows();
  a.conservativeResize(m + 1, Eigen::NoChange);
  b.conservativeResize(m + 1);
  a.row(m) = row;
  b[m] = rhs;
}

}  // namespace

void MiqpProblem::add_eq(const Eigen::RowVectorXd& row, double rhs) { append_row(Aeq, beq, row, rhs); }
void MiqpProblem::add_le(const Eigen::RowVectorXd& row, double rhs) { append_row(Ain, bin, row, rhs); }

void check_problem(const MiqpProblem& p) {
  const Eigen::Index n = p.c.size();
  auto fail = [](const std::string& m) { throw std::invalid_argument("MiqpProblem: " + m); };
  if (p.H.rows() != n || p.H.cols() != n) fail("H must be n x n");
  if (p.Aeq.cols() != n || p.Aeq.rows() != p.beq.size()) fail("Aeq/beq dimensions");
  if (p.Ain.cols() != n || p.Ain.rows() != p.bin.size()) fail("Ain/bin dimensions");
  if (p.lb.size() != n || p.ub.size() != n) fail("bound dimensions");
  if (static_cast<Eigen::Index>(p.integer.size()) != n) fail("integrality mask dimension");
  if (!p.names.empty() && static_cast<Eigen::Index>(p.names.size()) != n) fail("names dimension");
  if (!p.H.allFinite() || !p.c.allFinite() || !std::isfinite(p.c0) || !p.Aeq.allFinite() ||
      !p.beq.allFinite() || !p.Ain.allFinite() || !p.bin.allFinite())
    fail("non-finite data");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isnan(p.lb[i]) || std::isnan(p.ub[i])) fail("NaN bound");
    if (p.integer[i] && !(std::isfinite(p.lb[i]) && std::isfinite(p.ub[i])))
      fail("integer variable " + std::to_string(i) + " needs finite bounds");
  }
  if (n == 0) return;
  const double hn = p.H.cwiseAbs().rowwise().sum().maxCoeff();
  if ((p.H - p.H.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, hn)) fail("H is not symmetric");
  if (hn > 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.H, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9 * hn) fail("H is not positive semidefinite");
  }
}

double constraint_violation(const MiqpProblem& p, const Eigen::VectorXd& x) {
  double v = 0.0;
  if (p.Aeq.rows() > 0) v = std::max(v, (p.Aeq * x - p.beq).cwiseAbs().maxCoeff());
  if (p.Ain.rows() > 0) v = std::max(v, (p.Ain * x - p.bin).maxCoeff());
  for (Eigen::Index i = 0; i < x.size(); ++i) v = std::max({v, p.lb[i] - x[i], x[i] - p.ub[i]});
  return v;
}

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kUnbounded: return "unbounded";
    case QpStatus::kNumericalFailure: return "numerical_failure";
  }
  return "?";
}

CertificateCheck check_certificate(const MiqpProblem& p, const InfeasibilityCertificate& c) {
  const Eigen::Index n = p.c.size();
  Eigen::VectorXd ray = Eigen::VectorXd::Zero(n);
  double rhs = 0.0;
  double min_sign = 0.0;
  if (c.y_eq.size() > 0) {
    ray += p.Aeq.transpose() * c.y_eq;
    rhs += p.beq.dot(c.y_eq);
  }
  if (c.y_in.size() > 0) {
    ray += p.Ain.transpose() * c.y_in;
    rhs += p.bin.dot(c.y_in);
    min_sign = std::min(min_sign, c.y_in.minCoeff());
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double yl = c.y_lb.size() ? c.y_lb[i] : 0.0;
    const double yu = c.y_ub.size() ? c.y_ub[i] : 0.0;
    ray[i] += yu - yl;
    if (yl != 0.0) rhs -= yl * p.lb[i];
    if (yu != 0.0) rhs += yu * p.ub[i];
    min_sign = std::min({min_sign, yl, yu});
  }
  return {n ? ray.cwiseAbs().maxCoeff() : 0.0, rhs, min_sign};
}

namespace detail {

namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kDepTol = 1e-9;

}  // namespace

void ReducedQp::set_bounds(int j, double lo, double hi) {
  const int l = lower_row(j);
  const int u = upper_row(j);
  enabled[l] = std::isfinite(lo);
  b[l] = enabled[l] ? -lo : 0.0;
  enabled[u] = std::isfinite(hi);
  b[u] = enabled[u] ? hi : 0.0;
}

ReducedQp reduce(const MiqpProblem& p) {
  const int n = p.num_vars();
  const int m = static_cast<int>(p.Aeq.rows());
  ReducedQp r;
  r.n = n;

  // Pick basic columns among continuous variables, free ones first, until they span range(Aeq).
  std::vector<int> basic;
  if (m > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(p.Aeq);
    qr.setThreshold(1e-10);
    const int rank = static_cast<int>(qr.rank());
    std::vector<int> order;
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < n; ++j) {
        if (p.integer[j]) continue;
        const bool free = !std::isfinite(p.lb[j]) && !std::isfinite(p.ub[j]);
        if (free == (pass == 0)) order.push_back(j);
      }
    Eigen::MatrixXd u(m, 0);
    for (int j : order) {
      if (static_cast<int>(basic.size()) == rank) break;
      const Eigen::VectorXd a = p.Aeq.col(j);
      const double na = a.norm();
      if (na <= 1e-12) continue;
      Eigen::VectorXd res = a - u * (u.transpose() * a);
      res -= u * (u.transpose() * res);
      const double nr = res.norm();
      if (nr > 1e-8 * na) {
        basic.push_back(j);
        u.conservativeResize(Eigen::NoChange, u.cols() + 1);
        u.col(u.cols() - 1) = res / nr;
      }
    }
  }

  std::vector<char> is_basic(n, 0);
  for (int j : basic) is_basic[j] = 1;
  r.y_of_x.assign(n, -1);
  for (int j = 0; j < n; ++j)
    if (!is_basic[j]) {
      r.y_of_x[j] = static_cast<int>(r.x_of_y.size());
      r.x_of_y.push_back(j);
    }
  const int k = static_cast<int>(r.x_of_y.size());
  r.k = k;
  r.T = Eigen::MatrixXd::Zero(n, k);
  r.t0 = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < k; ++i) r.T(r.x_of_y[i], i) = 1.0;

  if (!basic.empty()) {
    const int nb = static_cast<int>(basic.size());
    Eigen::MatrixXd ab(m, nb), an(m, k);
    for (int i = 0; i < nb; ++i) ab.col(i) = p.Aeq.col(basic[i]);
    for (int i = 0; i < k; ++i) an.col(i) = p.Aeq.col(r.x_of_y[i]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qb(ab);
    const Eigen::MatrixXd xb = qb.solve(an);
    const Eigen::VectorXd tb = qb.solve(p.beq);
    for (int i = 0; i < nb; ++i) {
      r.T.row(basic[i]) = -xb.row(i);
      r.t0[basic[i]] = tb[i];
    }
  }

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  auto push = [&](Eigen::RowVectorXd a, double bv, RowKind kind, RowSource src, int index, bool enabled) {
    double scale = a.norm();
    if (scale > 1e-12) {
      a /= scale;
      bv /= scale;
    } else {
      a.setZero();
      scale = 1.0;
    }
    rows.push_back(std::move(a));
    rhs.push_back(bv);
    r.kind.push_back(kind);
    r.origin.push_back({src, index, scale});
    r.enabled.push_back(enabled ? 1 : 0);
  };

  if (m > 0) {
    const Eigen::MatrixXd e = p.Aeq * r.T;
    const Eigen::VectorXd ev = p.beq - p.Aeq * r.t0;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qe(e);
    qe.setThreshold(1e-10);
    const int re = static_cast<int>(qe.rank());
    const Eigen::MatrixXd w = Eigen::MatrixXd(qe.householderQ()).leftCols(re);
    const Eigen::VectorXd resid = ev - w * (w.transpose() * ev);
    if (resid.norm() > 1e-9 * std::max(1.0, p.beq.norm())) {
      InfeasibilityCertificate cert;
      cert.y_eq = -resid / resid.norm();
      cert.y_in = Eigen::VectorXd::Zero(p.Ain.rows());
      cert.y_lb = Eigen::VectorXd::Zero(n);
      cert.y_ub = Eigen::VectorXd::Zero(n);
      r.inconsistent = cert;
    }
    r.eq_basis = w;
    const Eigen::MatrixXd we = w.transpose() * e;
    const Eigen::VectorXd wb = w.transpose() * ev;
    for (int i = 0; i < re; ++i) push(we.row(i), wb[i], RowKind::kEq, RowSource::kEqProjected, i, true);
  }
  for (int i = 0; i < p.Ain.rows(); ++i)
    push(p.Ain.row(i) * r.T, p.bin[i] - p.Ain.row(i).dot(r.t0), RowKind::kIneq, RowSource::kIneq, i, true);
  for (int j : basic) {
    if (std::isfinite(p.lb[j]))
      push(-r.T.row(j), -(p.lb[j] - r.t0[j]), RowKind::kIneq, RowSource::kBasicLb, j, true);
    if (std::isfinite(p.ub[j]))
      push(r.T.row(j), p.ub[j] - r.t0[j], RowKind::kIneq, RowSource::kBasicUb, j, true);
  }
  r.bound_row = static_cast<int>(rows.size());
  for (int side = 0; side < 2; ++side)
    for (int i = 0; i < k; ++i) {
      Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(k);
      a[i] = side == 0 ? -1.0 : 1.0;
      push(a, 0.0, RowKind::kIneq, side == 0 ? RowSource::kLb : RowSource::kUb, i, false);
    }

  const int mr = static_cast<int>(rows.size());
  r.A.resize(mr, k);
  r.b.resize(mr);
  for (int i = 0; i < mr; ++i) {
    r.A.row(i) = rows[i];
    r.b[i] = rhs[i];
  }
  for (int i = 0; i < k; ++i) r.set_bounds(i, p.lb[r.x_of_y[i]], p.ub[r.x_of_y[i]]);

  const Eigen::MatrixXd h = r.T.transpose() * p.H * r.T;
  r.H = 0.5 * (h + h.transpose());
  r.g = r.T.transpose() * (p.H * r.t0 + p.c);
  r.c0 = 0.5 * r.t0.dot(p.H * r.t0) + p.c.dot(r.t0) + p.c0;
  return r;
}

namespace {

class ActiveSet {
 public:
  explicit ActiveSet(const ReducedQp& r)
      : r_(r), k_(r.k), m_(r.rows()), in_w_(m_, 0), enforced_(m_, 0) {
    max_iters_ = 50 * (k_ + m_) + 1000;
    h_norm_ = k_ ? r_.H.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
  }

  ActiveSetResult run(const Eigen::VectorXd& y0, const std::vector<int>& warm) {
    ActiveSetResult out;
    y_ = y0.size() == k_ ? y0 : Eigen::VectorXd::Zero(k_);
    for (int j = 0; j < k_; ++j) {
      const double lo = r_.lower(j), hi = r_.upper(j);
      if (lo <= hi) y_[j] = std::clamp(y_[j], lo, hi);
    }
    factor();
    for (int i = 0; i < m_; ++i)
      if (r_.enabled[i] && satisfied(i)) {
        enforced_[i] = 1;
        if (r_.kind[i] == RowKind::kEq) try_add(i);
      }
    for (int i : warm)
      if (i >= 0 && i < m_ && enforced_[i] && !in_w_[i] && std::abs(resid(i)) <= kFeasTol) try_add(i);

    // Phase 1: satisfy the remaining rows one at a time, never losing the ones already met.
    for (int t = 0; t < m_; ++t) {
      if (!r_.enabled[t] || enforced_[t]) continue;
      if (satisfied(t)) {
        enforce(t);
        continue;
      }
      const double sign = (r_.kind[t] == RowKind::kEq && resid(t) < 0.0) ? -1.0 : 1.0;
      const Eigen::VectorXd lin = sign * r_.A.row(t).transpose();
      const Outcome o = iterate(false, lin, t, sign);
      if (o == Outcome::kReached) {
        enforce(t);
        for (int i = 0; i < m_; ++i)
          if (r_.enabled[i] && !enforced_[i] && satisfied(i)) enforce(i);
        continue;
      }
      out.iterations = iters_;
      out.y = y_;
      if (o == Outcome::kStalled) {
        out.status = QpStatus::kInfeasible;
        out.farkas = Eigen::VectorXd::Zero(m_);
        out.farkas[t] = sign;
        const Eigen::VectorXd lam = multipliers(lin);
        for (std::size_t i = 0; i < w_.size(); ++i)
          out.farkas[w_[i]] = r_.kind[w_[i]] == RowKind::kEq ? lam[i] : std::max(0.0, lam[i]);
      }
      return out;
    }

    const Outcome o = iterate(true, r_.g, -1, 0.0);
    out.iterations = iters_;
    out.y = y_;
    out.working = w_;
    if (o == Outcome::kOptimal) {
      out.status = QpStatus::kOptimal;
      out.lambda = Eigen::VectorXd::Zero(m_);
      const Eigen::VectorXd lam = multipliers(r_.H * y_ + r_.g);
      for (std::size_t i = 0; i < w_.size(); ++i) out.lambda[w_[i]] = lam[i];
    } else if (o == Outcome::kUnbounded) {
      out.status = QpStatus::kUnbounded;
    }
    return out;
  }

 private:
  enum class Outcome { kOptimal, kReached, kStalled, kUnbounded, kIterLimit };

  double resid(int i) const { return r_.A.row(i).dot(y_) - r_.b[i]; }
  bool satisfied(int i) const {
    const double v = resid(i);
    return r_.kind[i] == RowKind::kEq ? std::abs(v) <= kFeasTol : v <= kFeasTol;
  }

  void enforce(int i) {
    enforced_[i] = 1;
    if (r_.kind[i] == RowKind::kEq || std::abs(resid(i)) <= kFeasTol) try_add(i);
  }

  void factor() {
    const int w = static_cast<int>(w_.size());
    if (w == 0) {
      q_ = Eigen::MatrixXd::Identity(k_, k_);
      rr_.resize(0, 0);
      return;
    }
    Eigen::MatrixXd aw(k_, w);
    for (int i = 0; i < w; ++i) aw.col(i) = r_.A.row(w_[i]).transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(aw);
    q_ = qr.householderQ();
    rr_ = qr.matrixQR().topLeftCorner(w, w).triangularView<Eigen::Upper>();
  }

  bool try_add(int i) {
    const int nz = k_ - static_cast<int>(w_.size());
    if (nz == 0) return false;
    const Eigen::VectorXd z = q_.rightCols(nz).transpose() * r_.A.row(i).transpose();
    if (z.norm() <= kDepTol) return false;
    w_.push_back(i);
    in_w_[i] = 1;
    factor();
    return true;
  }

  void remove(std::size_t pos) {
    in_w_[w_[pos]] = 0;
    w_.erase(w_.begin() + static_cast<std::ptrdiff_t>(pos));
    factor();
  }

  // Solves A_W' lambda = -grad in the least-squares sense.
  Eigen::VectorXd multipliers(const Eigen::VectorXd& grad) const {
    const int w = static_cast<int>(w_.size());
    if (w == 0) return {};
    const Eigen::VectorXd qg = q_.leftCols(w).transpose() * grad;
    return -rr_.triangularView<Eigen::Upper>().solve(qg);
  }

  Outcome iterate(bool quadratic, const Eigen::VectorXd& lin, int target, double sign) {
    bool degenerate = false;
    while (iters_ < max_iters_) {
      ++iters_;
      const Eigen::VectorXd grad = quadratic ? Eigen::VectorXd(r_.H * y_ + lin) : lin;
      const double gscale = std::max(1.0, grad.lpNorm<Eigen::Infinity>());
      const int w = static_cast<int>(w_.size());
      const int nz = k_ - w;
      Eigen::VectorXd p = Eigen::VectorXd::Zero(k_);
      bool ray = !quadratic;
      if (nz > 0) {
        const auto z = q_.rightCols(nz);
        const Eigen::VectorXd gz = z.transpose() * grad;
        if (gz.lpNorm<Eigen::Infinity>() > 1e-12 * gscale) {
          if (!quadratic) {
            p = -(z * gz);
          } else {
            const Eigen::MatrixXd hz = z.transpose() * r_.H * z;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hz);
            const Eigen::VectorXd& lam = es.eigenvalues();
            const Eigen::MatrixXd& u = es.eigenvectors();
            const double thr = 1e-11 * std::max(1.0, h_norm_);
            const Eigen::VectorXd ug = u.transpose() * gz;
            Eigen::VectorXd pu = Eigen::VectorXd::Zero(nz), ru = Eigen::VectorXd::Zero(nz);
            for (int i = 0; i < nz; ++i) {
              if (lam[i] > thr)
                pu[i] = -ug[i] / lam[i];
              else
                ru[i] = ug[i];
            }
            if (ru.norm() > 1e-10 * gscale) {
              p = -(z * (u * ru));
              ray = true;
            } else {
              p = z * (u * pu);
            }
          }
        }
      }

      if (p.lpNorm<Eigen::Infinity>() <= 1e-14 * std::max(1.0, y_.lpNorm<Eigen::Infinity>())) {
        const Eigen::VectorXd lam = multipliers(grad);
        const double tol = 1e-10 * gscale;
        int pick = -1;
        for (int i = 0; i < w; ++i) {
          if (r_.kind[w_[i]] == RowKind::kEq || lam[i] >= -tol) continue;
          if (pick < 0) {
            pick = i;
          } else if (degenerate) {
            if (w_[i] < w_[pick]) pick = i;
          } else if (lam[i] < lam[pick]) {
            pick = i;
          }
        }
        if (pick < 0) return target >= 0 ? Outcome::kStalled : Outcome::kOptimal;
        remove(static_cast<std::size_t>(pick));
        continue;
      }

      const Eigen::VectorXd ap = r_.A * p;
      const double pn = p.norm();
      double alpha = ray ? kInf : 1.0;
      int block = -1;
      for (int i = 0; i < m_; ++i) {
        if (!enforced_[i] || in_w_[i] || ap[i] <= 1e-12 * pn) continue;
        const double a = std::max(0.0, -resid(i)) / ap[i];
        if (a < alpha) {
          alpha = a;
          block = i;
        }
      }
      if (target >= 0) {
        const double d = sign * ap[target];
        if (d < 0.0) {
          const double at = sign * resid(target) / -d;
          if (at <= alpha) {
            y_ += at * p;
            return Outcome::kReached;
          }
        }
      }
      if (!std::isfinite(alpha)) return Outcome::kUnbounded;
      y_ += alpha * p;
      degenerate = alpha * pn <= 1e-14;
      if (block >= 0 && !try_add(block)) return Outcome::kIterLimit;
    }
    return Outcome::kIterLimit;
  }

  const ReducedQp& r_;
  int k_, m_;
  Eigen::VectorXd y_;
  std::vector<int> w_;
  std::vector<char> in_w_, enforced_;
  Eigen::MatrixXd q_, rr_;
  int iters_ = 0;
  int max_iters_ = 0;
  double h_norm_ = 0.0;
};

// Spreads reduced-row weights back onto the original constraint families.
void spread(const MiqpProblem& p, const ReducedQp& r, const Eigen::VectorXd& w, Eigen::VectorXd& y_in,
            Eigen::VectorXd& y_lb, Eigen::VectorXd& y_ub) {
  y_in = Eigen::VectorXd::Zero(p.Ain.rows());
  y_lb = Eigen::VectorXd::Zero(p.num_vars());
  y_ub = Eigen::VectorXd::Zero(p.num_vars());
  for (int i = 0; i < r.rows(); ++i) {
    if (w[i] == 0.0) continue;
    const RowOrigin& o = r.origin[i];
    const double v = w[i] / o.scale;
    switch (o.source) {
      case RowSource::kIneq: y_in[o.index] += v; break;
      case RowSource::kBasicLb: y_lb[o.index] += v; break;
      case RowSource::kBasicUb: y_ub[o.index] += v; break;
      case RowSource::kLb: y_lb[r.x_of_y[o.index]] += v; break;
      case RowSource::kUb: y_ub[r.x_of_y[o.index]] += v; break;
      case RowSource::kEqProjected: break;
    }
  }
}

Eigen::VectorXd eq_multipliers(const MiqpProblem& p, const Eigen::VectorXd& residual) {
  if (p.Aeq.rows() == 0) return {};
  const Eigen::MatrixXd at = p.Aeq.transpose();
  return at.colPivHouseholderQr().solve(Eigen::VectorXd(-residual));
}

}  // namespace

ActiveSetResult solve_reduced(const ReducedQp& r, const Eigen::VectorXd& y0, const std::vector<int>& warm) {
  ActiveSet as(r);
  return as.run(y0, warm);
}

QpSolution to_solution(const MiqpProblem& p, const ReducedQp& r, const ActiveSetResult& res) {
  QpSolution s;
  s.status = res.status;
  s.iterations = res.iterations;
  const int n = p.num_vars();
  if (r.inconsistent) {
    s.status = QpStatus::kInfeasible;
    s.certificate = r.inconsistent;
    return s;
  }
  if (res.status == QpStatus::kInfeasible) {
    InfeasibilityCertificate cert;
    spread(p, r, res.farkas, cert.y_in, cert.y_lb, cert.y_ub);
    const Eigen::VectorXd u = (p.Ain.rows() ? Eigen::VectorXd(p.Ain.transpose() * cert.y_in)
                                            : Eigen::VectorXd::Zero(n)) -
                              cert.y_lb + cert.y_ub;
    cert.y_eq = p.Aeq.rows() ? eq_multipliers(p, u) : Eigen::VectorXd(0);
    double scale = std::max({cert.y_in.size() ? cert.y_in.cwiseAbs().maxCoeff() : 0.0,
                             n ? cert.y_lb.cwiseAbs().maxCoeff() : 0.0,
                             n ? cert.y_ub.cwiseAbs().maxCoeff() : 0.0,
                             cert.y_eq.size() ? cert.y_eq.cwiseAbs().maxCoeff() : 0.0});
    if (scale > 0.0) {
      cert.y_eq /= scale;
      cert.y_in /= scale;
      cert.y_lb /= scale;
      cert.y_ub /= scale;
    }
    s.certificate = cert;
    return s;
  }
  if (res.status != QpStatus::kOptimal) return s;

  s.x = r.lift(res.y);
  s.objective = p.objective(s.x);
  spread(p, r, res.lambda, s.mu_in, s.z_lb, s.z_ub);
  Eigen::VectorXd st = p.H * s.x + p.c - s.z_lb + s.z_ub;
  if (p.Ain.rows()) st += p.Ain.transpose() * s.mu_in;
  s.lambda_eq = eq_multipliers(p, st);
  if (p.Aeq.rows()) st += p.Aeq.transpose() * s.lambda_eq;
  s.stationarity_residual = n ? st.cwiseAbs().maxCoeff() : 0.0;
  s.primal_residual = constraint_violation(p, s.x);
  double comp = 0.0;
  if (p.Ain.rows())
    comp = (s.mu_in.array() * (p.Ain * s.x - p.bin).array()).abs().maxCoeff();
  for (int i = 0; i < n; ++i) {
    if (s.z_lb[i] != 0.0) comp = std::max(comp, std::abs(s.z_lb[i] * (s.x[i] - p.lb[i])));
    if (s.z_ub[i] != 0.0) comp = std::max(comp, std::abs(s.z_ub[i] * (p.ub[i] - s.x[i])));
  }
  s.complementarity_residual = comp;
  return s;
}

}  // namespace detail

QpSolution solve_qp(const MiqpProblem& p) {
  check_problem(p);
  const detail::ReducedQp r = detail::reduce(p);
  if (r.inconsistent) return detail::to_solution(p, r, {});
  const detail::ActiveSetResult res = detail::solve_reduced(r, Eigen::VectorXd::Zero(r.k), {});
  return detail::to_solution(p, r, res);
}

}  // namespace vvl::miqp
