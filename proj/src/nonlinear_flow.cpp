#include "vvl/nonlinear_flow.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vvl {

namespace {

std::complex<double> slack_phasor(const Network& net, Phase p) {
  using std::numbers::pi;
  static constexpr double kAngle[3] = {0.0, -2.0 * pi / 3.0, 2.0 * pi / 3.0};
  return std::polar(std::sqrt(net.feeder().v0[index(p)]), kAngle[index(p)]);
}

Eigen::VectorXcd series_drop(const Branch& br, const Eigen::VectorXcd& current) {
  return br.z * current;
}

}  // namespace

PowerFlowResult solve_power_flow(const Network& net, const Injections& inj, std::span<const int> taps,
                                 const PowerFlowOptions& opts) {
  const int n = net.num_slots();
  if (static_cast<int>(taps.size()) != n) throw std::invalid_argument("tap vector size mismatch");
  const auto& idx = net.index();
  const auto& order = net.topo_branches();
  const Eigen::VectorXd dtap = net.tap_step_vector();

  PowerFlowResult r;
  r.t.resize(n);
  for (int s = 0; s < n; ++s) r.t[s] = 1.0 + taps[s] * dtap[s];

  Eigen::VectorXcd v_up(n);  // slack phasor seen by every slot; used for slack-fed branches
  for (int s = 0; s < n; ++s) v_up[s] = slack_phasor(net, idx.at(s).phase);

  const Eigen::VectorXcd s_load = (inj.p_c - inj.p_inv).cast<std::complex<double>>() +
                                  std::complex<double>(0.0, 1.0) *
                                      (inj.q_c - inj.q_inv - inj.q_cap).cast<std::complex<double>>();

  // Flat start with cumulative regulator ratios.
  r.V.resize(n);
  for (int b : order) {
    const int first = net.first_slot_of_branch(b);
    for (int k = 0; k < net.branch(b).phases.size(); ++k) {
      const int s = first + k;
      const int ps = net.parent_slot(s);
      r.V[s] = r.t[s] * (ps >= 0 ? r.V[ps] : v_up[s]);
    }
  }

  r.I = Eigen::VectorXcd::Zero(n);
  for (r.iterations = 1; r.iterations <= opts.max_iter; ++r.iterations) {
    for (int s = 0; s < n; ++s) r.I[s] = std::conj(s_load[s] / r.V[s]);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const int first = net.first_slot_of_branch(*it);
      for (int k = 0; k < net.branch(*it).phases.size(); ++k) {
        const int s = first + k;
        if (const int ps = net.parent_slot(s); ps >= 0) r.I[ps] += r.t[s] * r.I[s];
      }
    }
    double change = 0.0;
    for (int b : order) {
      const Branch& br = net.branch(b);
      const int first = net.first_slot_of_branch(b);
      const int k = br.phases.size();
      Eigen::VectorXcd sec(k);
      for (int j = 0; j < k; ++j) {
        const int ps = net.parent_slot(first + j);
        sec[j] = r.t[first + j] * (ps >= 0 ? r.V[ps] : v_up[first + j]);
      }
      const Eigen::VectorXcd v_new = sec - series_drop(br, r.I.segment(first, k));
      change = std::max(change, (v_new - r.V.segment(first, k)).cwiseAbs().maxCoeff());
      r.V.segment(first, k) = v_new;
    }
    r.last_change = change;
    if (!std::isfinite(change)) break;
    if (change < opts.tol) {
      r.converged = true;
      break;
    }
  }
  if (!r.converged) r.iterations = std::min(r.iterations, opts.max_iter);

  // Currents consistent with the final voltages.
  for (int s = 0; s < n; ++s) r.I[s] = std::conj(s_load[s] / r.V[s]);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int first = net.first_slot_of_branch(*it);
    for (int k = 0; k < net.branch(*it).phases.size(); ++k) {
      const int s = first + k;
      if (const int ps = net.parent_slot(s); ps >= 0) r.I[ps] += r.t[s] * r.I[s];
    }
  }

  r.v = r.V.cwiseAbs2();
  r.S_send.resize(n);
  r.slack_power = 0.0;
  for (int s = 0; s < n; ++s) {
    const int ps = net.parent_slot(s);
    const std::complex<double> vf = ps >= 0 ? r.V[ps] : v_up[s];
    r.S_send[s] = vf * std::conj(r.t[s] * r.I[s]);
    if (ps < 0) r.slack_power += r.S_send[s];
  }
  r.losses = compute_losses(net, r);
  return r;
}

PowerFlowResult solve_power_flow(const Network& net, const Injections& inj,
                                 const DeviceSettings& devices, const PowerFlowOptions& opts) {
  Injections with_caps = inj;
  with_caps.q_cap = net.capacitor_injection(devices);
  const std::vector<int> taps = net.tap_vector(devices);
  return solve_power_flow(net, with_caps, taps, opts);
}

Eigen::VectorXd branch_losses(const Network& net, const PowerFlowResult& r) {
  Eigen::VectorXd loss(net.num_slots());
  const auto& idx = net.index();
  for (int s = 0; s < net.num_slots(); ++s) {
    const int ps = net.parent_slot(s);
    const std::complex<double> vf = ps >= 0 ? r.V[ps] : slack_phasor(net, idx.at(s).phase);
    loss[s] = std::real((r.t[s] * vf - r.V[s]) * std::conj(r.I[s]));
  }
  return loss;
}

double compute_losses(const Network& net, const PowerFlowResult& r) { return branch_losses(net, r).sum(); }

}  // namespace vvl
