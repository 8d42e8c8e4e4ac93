#include "vvl/linear_flow.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vvl {

Injections Injections::zero(int n) {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  return {z, z, z, z, z};
}

Injections Injections::scaled_loads(double factor) const {
  Injections out = *this;
  out.p_c *= factor;
  out.q_c *= factor;
  return out;
}

TransformedImpedance transform_impedance(const Eigen::MatrixXcd& z, PhaseSet phases) {
  const int n = phases.size();
  if (z.rows() != n || z.cols() != n)
    throw std::invalid_argument("impedance is " + std::to_string(z.rows()) + "x" +
                                std::to_string(z.cols()) + " but branch has " + std::to_string(n) +
                                " phases");
  using std::numbers::pi;
  const std::complex<double> alpha_all[3] = {1.0, std::polar(1.0, -2.0 * pi / 3.0),
                                             std::polar(1.0, 2.0 * pi / 3.0)};
  Eigen::VectorXcd alpha(n);
  const auto members = phases.members();
  for (int k = 0; k < n; ++k) alpha[k] = alpha_all[index(members[k])];
  const Eigen::MatrixXcd aa = alpha * alpha.adjoint();
  const Eigen::MatrixXd re = aa.real();
  const Eigen::MatrixXd im = aa.imag();
  const Eigen::MatrixXd r = z.real();
  const Eigen::MatrixXd x = z.imag();
  return {re.cwiseProduct(r) + im.cwiseProduct(x), re.cwiseProduct(x) - im.cwiseProduct(r)};
}

LinearFlowResult evaluate_glbfm(const Network& net, const Injections& inj, std::span<const int> taps) {
  const int n = net.num_slots();
  if (static_cast<int>(taps.size()) != n) throw std::invalid_argument("tap vector size mismatch");
  LinearFlowResult out;
  out.P = inj.p_c - inj.p_inv;
  out.Q = inj.q_c - inj.q_inv - inj.q_cap;
  const auto& order = net.topo_branches();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Branch& br = net.branch(*it);
    const int first = net.first_slot_of_branch(*it);
    for (int k = 0; k < br.phases.size(); ++k) {
      const int s = first + k;
      if (const int ps = net.parent_slot(s); ps >= 0) {
        out.P[ps] += out.P[s];
        out.Q[ps] += out.Q[s];
      }
    }
  }

  const Eigen::VectorXd dtap = net.tap_step_vector();
  const double vnom = net.feeder().vnom;
  out.v = Eigen::VectorXd::Zero(n);
  for (int b : order) {
    const Branch& br = net.branch(b);
    const int first = net.first_slot_of_branch(b);
    const int k = br.phases.size();
    const TransformedImpedance zt = transform_impedance(br.z, br.phases);
    Eigen::VectorXd up(k);
    for (int j = 0; j < k; ++j) {
      const int ps = net.parent_slot(first + j);
      up[j] = ps >= 0 ? out.v[ps] : net.slack_v0(first + j);
    }
    Eigen::VectorXd tap_term(k);
    for (int j = 0; j < k; ++j) tap_term[j] = 2.0 * vnom * taps[first + j] * dtap[first + j];
    out.v.segment(first, k) =
        up - 2.0 * (zt.r_bar * out.P.segment(first, k) + zt.x_bar * out.Q.segment(first, k)) + tap_term;
  }
  return out;
}

SensitivityModel::SensitivityModel(const Network& net) : vnom_(net.feeder().vnom) {
  const int n = net.num_slots();
  a_ = net.incidence().a;
  a0_ = net.incidence().a0;
  a_lu_.compute(a_);
  const double det = a_lu_.determinant();
  if (!(std::abs(det) > 0.5)) throw std::logic_error("reduced incidence matrix is singular");

  const Bus& slack = net.slack();
  const auto slack_phases = slack.phases.members();
  v0_.resize(static_cast<Eigen::Index>(slack_phases.size()));
  for (std::size_t k = 0; k < slack_phases.size(); ++k) v0_[k] = net.feeder().v0[index(slack_phases[k])];

  r_ = Eigen::MatrixXd::Zero(n, n);
  x_ = Eigen::MatrixXd::Zero(n, n);
  for (int b = 0; b < net.num_branches(); ++b) {
    const Branch& br = net.branch(b);
    const int first = net.first_slot_of_branch(b);
    const int k = br.phases.size();
    const TransformedImpedance zt = transform_impedance(br.z, br.phases);
    r_.block(first, first, k, k) = zt.r_bar;
    x_.block(first, first, k, k) = zt.x_bar;
  }
  tap_step_ = net.tap_step_vector();
  const Eigen::MatrixXd a_inv = a_lu_.inverse();
  m_ = 2.0 * a_inv.transpose() * x_ * a_inv;
}

Eigen::VectorXd SensitivityModel::mu(const Injections& inj, std::span<const int> taps) const {
  const int n = size();
  if (static_cast<int>(taps.size()) != n) throw std::invalid_argument("tap vector size mismatch");
  Eigen::VectorXd tap_term(n);
  for (int s = 0; s < n; ++s) tap_term[s] = 2.0 * vnom_ * taps[s] * tap_step_[s];
  const Eigen::VectorXd p_flow = a_lu_.solve(Eigen::VectorXd(inj.p_inv - inj.p_c));
  const Eigen::VectorXd q_flow = a_lu_.solve(Eigen::VectorXd(inj.q_cap - inj.q_c));
  // A tap raise lifts the downstream voltage, hence the minus sign on the tap term.
  const Eigen::VectorXd rhs =
      -a0_.transpose() * v0_ + 2.0 * r_ * p_flow + 2.0 * x_ * q_flow - tap_term;
  return a_.transpose().partialPivLu().solve(rhs);
}

SensitivityModel build_sensitivity(const Network& net) { return SensitivityModel(net); }

double tap_linearization_error(int n, double v, double tap_step, double vnom) {
  const double t = 1.0 + n * tap_step;
  const double exact = t * t * v;
  const double approx = v + 2.0 * n * tap_step * vnom;
  return (exact - approx) / (2.0 * tap_step * vnom);
}

std::vector<TapErrorSample> sweep_tap_error(int n_min, int n_max, double v_min, double v_max,
                                            double dv, double tap_step, double vnom) {
  if (!(dv > 0.0) || v_max < v_min || n_max < n_min) throw std::invalid_argument("bad sweep range");
  const int nv = static_cast<int>(std::floor((v_max - v_min) / dv + 1e-9)) + 1;
  std::vector<TapErrorSample> out;
  out.reserve(static_cast<std::size_t>(nv) * (n_max - n_min + 1));
  for (int n = n_min; n <= n_max; ++n)
    for (int k = 0; k < nv; ++k) {
      const double v = v_min + k * dv;
      out.push_back({n, v, tap_linearization_error(n, v, tap_step, vnom)});
    }
  return out;
}

}  // namespace vvl
