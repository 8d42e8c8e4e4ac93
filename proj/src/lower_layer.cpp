#include "vvl/lower_layer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vvl/error.hpp"
#include "vvl/miqp.hpp"
#include "vvl/nonlinear_flow.hpp"

namespace vvl {

ControlState ControlState::zero(int n) {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  return {z, z, z, z};
}

ReferenceSet project_reference(const Eigen::VectorXd& nu, const Eigen::VectorXd& v_lo, const Eigen::VectorXd& v_hi) {
  if (nu.size() != v_lo.size() || nu.size() != v_hi.size())
    throw std::invalid_argument("reference and limit sizes differ");
  return {nu.cwiseMax(v_lo).cwiseMin(v_hi)};
}

ReferenceSet project_reference(const Eigen::VectorXd& nu, double v_lo, double v_hi) {
  return project_reference(nu, Eigen::VectorXd::Constant(nu.size(), v_lo), Eigen::VectorXd::Constant(nu.size(), v_hi));
}

std::pair<double, double> reactive_limits(double s_inv, double p_inv) {
  const double q = std::sqrt(std::max(s_inv * s_inv - p_inv * p_inv, 0.0));
  return {-q, q};
}

void update_limits(ControlState& state, const Network& net, const Eigen::VectorXd& p_inv_slot) {
  const auto& ders = net.ders();
  if (state.q.size() != static_cast<int>(ders.size())) throw std::invalid_argument("control state size mismatch");
  for (size_t d = 0; d < ders.size(); ++d) {
    const auto [lo, hi] = reactive_limits(ders[d].s_inv, p_inv_slot[ders[d].slot]);
    state.q_lo[d] = lo;
    state.q_hi[d] = hi;
    state.q[d] = std::clamp(state.q[d], lo, hi);
  }
}

namespace {

ControlState clamp_update(const ControlState& state, const Eigen::VectorXd& v_meas, const Eigen::VectorXd& raw) {
  ControlState out = state;
  out.q = raw.cwiseMax(state.q_lo).cwiseMin(state.q_hi);
  out.v = v_meas;
  return out;
}

void check_sizes(const ControlState& s, const Eigen::VectorXd& v, const Eigen::VectorXd& r) {
  if (v.size() != s.q.size() || r.size() != s.q.size()) throw std::invalid_argument("measurement size mismatch");
}

}  // namespace

ControlState integral_step(const ControlState& state, const Eigen::VectorXd& v_meas, const Eigen::VectorXd& v_ref,
                           double gamma) {
  check_sizes(state, v_meas, v_ref);
  return clamp_update(state, v_meas, state.q - gamma * (v_meas - v_ref));
}

ControlState droop_step(const ControlState& state, const Eigen::VectorXd& v_meas, const Eigen::VectorXd& v_ref,
                        double gain) {
  check_sizes(state, v_meas, v_ref);
  return clamp_update(state, v_meas, -gain * (v_meas - v_ref));
}

std::vector<int> der_slots(const Network& net) {
  std::vector<int> s;
  for (const DerUnit& d : net.ders()) s.push_back(d.slot);
  return s;
}

Eigen::VectorXd gather(const Eigen::VectorXd& per_slot, const std::vector<int>& slots) {
  Eigen::VectorXd out(slots.size());
  for (size_t k = 0; k < slots.size(); ++k) out[k] = per_slot[slots[k]];
  return out;
}

Eigen::MatrixXd der_sensitivity(const Network& net, const SensitivityModel& sm) {
  const std::vector<int> s = der_slots(net);
  Eigen::MatrixXd m(s.size(), s.size());
  for (size_t i = 0; i < s.size(); ++i)
    for (size_t j = 0; j < s.size(); ++j) m(i, j) = sm.M()(s[i], s[j]);
  return m;
}

double stability_bound(const Eigen::MatrixXd& m) {
  if (m.rows() == 0 || m.rows() != m.cols()) throw std::invalid_argument("stability_bound: M must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("stability_bound: M is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 0.0) throw std::invalid_argument("stability_bound: M is not positive definite");
  return 2.0 / es.eigenvalues().maxCoeff();
}

double step_contraction(const Eigen::MatrixXd& m, double gamma) {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m.rows(), m.cols()) - gamma * m;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
}

VoltageFn linear_plant(const Eigen::MatrixXd& m_der, const Eigen::VectorXd& mu_der) {
  return [m_der, mu_der](const Eigen::VectorXd& q) -> Eigen::VectorXd { return m_der * q + mu_der; };
}

VoltageFn nonlinear_plant(const Network& net, const Injections& inj, const DeviceSettings& devices) {
  Injections base = inj;
  base.q_cap = net.capacitor_injection(devices);
  const std::vector<int> taps = net.tap_vector(devices);
  const std::vector<int> slots = der_slots(net);
  return [&net, base, taps, slots](const Eigen::VectorXd& q) -> Eigen::VectorXd {
    Injections x = base;
    x.q_inv = Eigen::VectorXd::Zero(net.num_slots());
    for (size_t k = 0; k < slots.size(); ++k) x.q_inv[slots[k]] += q[k];
    const PowerFlowResult r = solve_power_flow(net, x, taps);
    if (!r.converged)
      throw PlantNonConvergence("plant did not converge (last change " + std::to_string(r.last_change) + ")");
    return gather(r.v, slots);
  };
}

TrackingTrace track(const VoltageFn& plant, ControlState state, const Eigen::VectorXd& v_ref, ControllerKind kind,
                    double gain, int iterations) {
  TrackingTrace t;
  for (int k = 0; k < iterations; ++k) {
    const Eigen::VectorXd v = plant(state.q);
    t.error.push_back((v - v_ref).squaredNorm());
    const Eigen::VectorXd raw =
        kind == ControllerKind::kIntegral ? Eigen::VectorXd(state.q - gain * (v - v_ref)) : Eigen::VectorXd(-gain * (v - v_ref));
    const ControlState next = kind == ControllerKind::kIntegral ? integral_step(state, v, v_ref, gain)
                                                                : droop_step(state, v, v_ref, gain);
    if (t.first_saturation < 0 && (raw - next.q).cwiseAbs().maxCoeff() > 0.0) t.first_saturation = k;
    t.converged = (next.q - state.q).cwiseAbs().maxCoeff() <= 1e-9;
    state = next;
  }
  t.error.push_back((plant(state.q) - v_ref).squaredNorm());
  t.q = state.q;
  return t;
}

double backoff_droop_gain(const VoltageFn& plant, const ControlState& state, const Eigen::VectorXd& v_ref, double k0,
                          int iterations, int max_halvings) {
  double k = k0;
  for (int h = 0; h <= max_halvings; ++h, k *= 0.5)
    if (track(plant, state, v_ref, ControllerKind::kDroop, k, iterations).converged) return k;
  throw SolverError("droop gain backoff did not settle after " + std::to_string(max_halvings) + " halvings");
}

Eigen::VectorXd open_loop_dispatch(const Eigen::MatrixXd& m_der, const Eigen::VectorXd& mu_der,
                                   const Eigen::VectorXd& v_ref, const Eigen::VectorXd& q_lo,
                                   const Eigen::VectorXd& q_hi) {
  miqp::MiqpProblem p = miqp::MiqpProblem::with_vars(static_cast<int>(m_der.cols()));
  p.H = 2.0 * m_der.transpose() * m_der;
  p.H = 0.5 * (p.H + p.H.transpose()).eval();
  p.c = 2.0 * m_der.transpose() * (mu_der - v_ref);
  p.c0 = (mu_der - v_ref).squaredNorm();
  p.lb = q_lo;
  p.ub = q_hi;
  const miqp::QpSolution s = miqp::solve_qp(p);
  if (s.status != miqp::QpStatus::kOptimal)
    throw SolverError(std::string("open-loop dispatch failed: ") + miqp::to_string(s.status));
  return s.x.cwiseMax(q_lo).cwiseMin(q_hi);
}

StaticComparison static_tracking(const Network& net, const Injections& inj, const DeviceSettings& devices,
                                 const Eigen::VectorXd& v_ref_slot, const LowerLayerConfig& cfg, int iterations) {
  const SensitivityModel sm(net);
  const Eigen::MatrixXd m = der_sensitivity(net, sm);
  const std::vector<int> slots = der_slots(net);
  const Eigen::VectorXd v_ref = gather(v_ref_slot, slots);

  StaticComparison out;
  out.gamma_max = stability_bound(m);
  out.gamma = cfg.gamma.value_or(0.5 * out.gamma_max);

  ControlState s0 = ControlState::zero(static_cast<int>(slots.size()));
  update_limits(s0, net, inj.p_inv);
  const VoltageFn plant = nonlinear_plant(net, inj, devices);

  out.integral = track(plant, s0, v_ref, ControllerKind::kIntegral, out.gamma, iterations);
  out.droop_gain = cfg.droop_gain ? *cfg.droop_gain : backoff_droop_gain(plant, s0, v_ref, 0.5 * out.gamma_max);
  out.droop = track(plant, s0, v_ref, ControllerKind::kDroop, out.droop_gain, iterations);

  Injections with_caps = inj;
  with_caps.q_cap = net.capacitor_injection(devices);
  const Eigen::VectorXd mu = gather(sm.mu(with_caps, net.tap_vector(devices)), slots);
  out.open_loop_q = open_loop_dispatch(m, mu, v_ref, s0.q_lo, s0.q_hi);
  out.open_loop_error = (plant(out.open_loop_q) - v_ref).squaredNorm();
  return out;
}

}  // namespace vvl
