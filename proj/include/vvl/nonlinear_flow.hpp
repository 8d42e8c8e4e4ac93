#pragma once

#include <complex>
#include <span>

#include <Eigen/Dense>

#include "vvl/feeder.hpp"
#include "vvl/linear_flow.hpp"

namespace vvl {

struct PowerFlowOptions {
  double tol = 1e-10;  // max phasor change between sweeps
  int max_iter = 100;
};

struct PowerFlowResult {
  Eigen::VectorXcd V;       // phasor per bus-phase slot
  Eigen::VectorXd v;        // |V|^2
  Eigen::VectorXcd I;       // series current per branch-phase slot (regulator secondary side)
  Eigen::VectorXcd S_send;  // complex power entering each branch-phase at the from bus
  Eigen::VectorXcd t;       // regulator ratio per branch-phase slot (real valued)
  std::complex<double> slack_power{0.0, 0.0};
  double losses = 0.0;
  int iterations = 0;
  bool converged = false;
  double last_change = 0.0;
};

// Constant-power backward/forward sweep. Regulators are ideal ratios t = 1 + n dtap applied
// on the from side ahead of the series impedance; capacitors are constant-Q sources taken
// from inj.q_cap. `taps` is per branch-phase slot.
PowerFlowResult solve_power_flow(const Network& net, const Injections& inj, std::span<const int> taps,
                                 const PowerFlowOptions& opts = {});

// Same, with taps and capacitor output derived from device positions (inj.q_cap is replaced).
PowerFlowResult solve_power_flow(const Network& net, const Injections& inj,
                                 const DeviceSettings& devices, const PowerFlowOptions& opts = {});

// Real series losses recomputed from the converged state, per branch-phase slot and in total.
Eigen::VectorXd branch_losses(const Network& net, const PowerFlowResult& result);
double compute_losses(const Network& net, const PowerFlowResult& result);

}  // namespace vvl
