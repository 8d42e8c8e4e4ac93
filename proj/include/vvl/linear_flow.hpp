#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vvl/feeder.hpp"

namespace vvl {

// Per bus-phase injections and consumptions, in slot order.
struct Injections {
  Eigen::VectorXd p_c, q_c;      // load consumption
  Eigen::VectorXd p_inv, q_inv;  // inverter output
  Eigen::VectorXd q_cap;         // capacitor output

  static Injections zero(int n);
  Injections scaled_loads(double factor) const;
};

// Impedance seen by the linearized three-phase model once the 120 degree phase
// displacement between conductors is folded in.
struct TransformedImpedance {
  Eigen::MatrixXd r_bar;
  Eigen::MatrixXd x_bar;
};

TransformedImpedance transform_impedance(const Eigen::MatrixXcd& z, PhaseSet phases);

struct LinearFlowResult {
  Eigen::VectorXd v;  // squared voltages per bus-phase
  Eigen::VectorXd P;  // real flow per branch-phase
  Eigen::VectorXd Q;  // reactive flow per branch-phase
};

// Exact solve of the linearized branch flow equations by one backward (flows) and one
// forward (voltages) sweep. `taps` is per branch-phase slot.
LinearFlowResult evaluate_glbfm(const Network& net, const Injections& inj, std::span<const int> taps);

// Compact affine voltage map v = M q_inv + mu.
class SensitivityModel {
 public:
  explicit SensitivityModel(const Network& net);

  const Eigen::MatrixXd& M() const { return m_; }
  const Eigen::MatrixXd& R() const { return r_; }
  const Eigen::MatrixXd& X() const { return x_; }
  int size() const { return static_cast<int>(m_.rows()); }

  // Everything but the inverter VAR contribution; inj.q_inv is ignored.
  Eigen::VectorXd mu(const Injections& inj, std::span<const int> taps) const;
  Eigen::VectorXd voltages(const Eigen::VectorXd& q_inv, const Eigen::VectorXd& mu) const {
    return m_ * q_inv + mu;
  }

 private:
  Eigen::PartialPivLU<Eigen::MatrixXd> a_lu_;
  Eigen::MatrixXd a_;
  Eigen::MatrixXd a0_;
  Eigen::VectorXd v0_;
  Eigen::MatrixXd r_, x_, m_;
  Eigen::VectorXd tap_step_;
  double vnom_;
};

SensitivityModel build_sensitivity(const Network& net);

// Error of v + 2 n dtap vnom against t^2 v with t = 1 + n dtap, in tap-equivalents.
double tap_linearization_error(int n, double v, double tap_step, double vnom);

struct TapErrorSample {
  int n;
  double v;
  double error_taps;
};

// Grid sweep over tap positions [n_min, n_max] and squared voltages [v_min, v_max]
// sampled every dv (endpoint included when it falls on the grid).
std::vector<TapErrorSample> sweep_tap_error(int n_min, int n_max, double v_min, double v_max,
                                            double dv, double tap_step, double vnom);

}  // namespace vvl
