#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "vvl/miqp.hpp"
#include "vvl/upper_layer.hpp"

// Exhaustive oracles shared by the unit tests and the acceptance suite.
namespace oracle {

using namespace vvl::miqp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd random_psd(std::mt19937_64& rng, int n, int rank) {
  std::normal_distribution<double> nd;
  MatrixXd g(n, rank);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < rank; ++j) g(i, j) = nd(rng);
  return g * g.transpose();
}

struct Enumerated {
  double best = kInf;
  VectorXd x;
};

// Pure enumeration over integer points; continuous variables must be free, unconstrained and
// strictly convex so their optimum has the closed form z = -Hzz^{-1} (cz + Hzx x).
inline Enumerated enumerate(const MiqpProblem& p) {
  std::vector<int> ints, conts;
  for (int i = 0; i < p.num_vars(); ++i) (p.integer[i] ? ints : conts).push_back(i);
  const int ni = static_cast<int>(ints.size());
  const int nc = static_cast<int>(conts.size());
  MatrixXd hzz(nc, nc), hzx(nc, ni);
  VectorXd cz(nc);
  for (int a = 0; a < nc; ++a) {
    cz[a] = p.c[conts[a]];
    for (int b = 0; b < nc; ++b) hzz(a, b) = p.H(conts[a], conts[b]);
    for (int b = 0; b < ni; ++b) hzx(a, b) = p.H(conts[a], ints[b]);
  }
  const Eigen::LDLT<MatrixXd> hzz_ldlt(hzz);
  Enumerated out;
  std::vector<int> cur(ni);
  for (int i = 0; i < ni; ++i) cur[i] = static_cast<int>(p.lb[ints[i]]);
  while (true) {
    VectorXd x = VectorXd::Zero(p.num_vars());
    VectorXd xi(ni);
    for (int i = 0; i < ni; ++i) x[ints[i]] = xi[i] = cur[i];
    bool ok = true;
    for (int r = 0; r < p.Ain.rows() && ok; ++r) ok = p.Ain.row(r).dot(x) <= p.bin[r] + 1e-12;
    if (ok) {
      if (nc) {
        const VectorXd z = hzz_ldlt.solve(VectorXd(-(cz + hzx * xi)));
        for (int a = 0; a < nc; ++a) x[conts[a]] = z[a];
      }
      const double f = p.objective(x);
      if (f < out.best) {
        out.best = f;
        out.x = x;
      }
    }
    int k = 0;
    while (k < ni && ++cur[k] > static_cast<int>(p.ub[ints[k]])) {
      cur[k] = static_cast<int>(p.lb[ints[k]]);
      ++k;
    }
    if (k == ni) break;
  }
  return out;
}

inline MiqpProblem random_instance(std::mt19937_64& rng, int ni, int nc, int rows) {
  std::uniform_int_distribution<int> dom(2, 4), lo(-2, 1);
  std::normal_distribution<double> nd;
  MiqpProblem p = MiqpProblem::with_vars(ni + nc);
  const int rank = std::uniform_int_distribution<int>(1, ni + nc)(rng);
  p.H = random_psd(rng, ni + nc, rank);
  if (nc) p.H.bottomRightCorner(nc, nc) += MatrixXd::Identity(nc, nc);
  for (int i = 0; i < ni + nc; ++i) p.c[i] = 2.0 * nd(rng);
  for (int i = 0; i < ni; ++i) {
    p.integer[i] = true;
    p.lb[i] = lo(rng);
    p.ub[i] = p.lb[i] + dom(rng) - 1;
  }
  for (int r = 0; r < rows; ++r) {
    Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(ni + nc);
    for (int i = 0; i < ni; ++i) a[i] = nd(rng);
    p.add_le(a, std::abs(nd(rng)) + 0.5);  // x = 0 is always feasible when 0 is in range
  }
  return p;
}


// Every integer combination inside the variable bounds, one step at a time.
inline double enumerate_one_step(const vvl::RhoProblem& rho, vvl::DeviceSettings* best_out = nullptr) {
  const vvl::StepVariables& sv = rho.vars.steps.at(0);
  std::vector<int> cols = sv.tap;
  cols.insert(cols.end(), sv.cap.begin(), sv.cap.end());
  std::vector<int> cur(cols.size());
  for (size_t k = 0; k < cols.size(); ++k) cur[k] = static_cast<int>(rho.problem.lb[cols[k]]);
  double best = kInf;
  while (true) {
    vvl::DeviceSettings d;
    d.taps.assign(cur.begin(), cur.begin() + sv.tap.size());
    d.caps.assign(cur.begin() + sv.tap.size(), cur.end());
    const double f = vvl::fixed_device_objective(rho, {d});
    if (f < best) {
      best = f;
      if (best_out) *best_out = d;
    }
    size_t k = 0;
    while (k < cols.size() && ++cur[k] > rho.problem.ub[cols[k]]) {
      cur[k] = static_cast<int>(rho.problem.lb[cols[k]]);
      ++k;
    }
    if (k == cols.size()) break;
  }
  return best;
}

}  // namespace oracle
