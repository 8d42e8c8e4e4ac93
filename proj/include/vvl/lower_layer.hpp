#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vvl/feeder.hpp"
#include "vvl/linear_flow.hpp"

namespace vvl {

enum class ControllerKind { kIntegral, kDroop };

struct LowerLayerConfig {
  // Integral step size; unset means half the stability bound of the feeder.
  std::optional<double> gamma;
  double period_s = 5.0;
  ControllerKind kind = ControllerKind::kIntegral;
  // Droop gain; unset means automatic backoff from 0.5 * gamma_max.
  std::optional<double> droop_gain;
};

// Per DER unit, in Network::ders() order.
struct ControlState {
  Eigen::VectorXd q;
  Eigen::VectorXd v;  // last measurement
  Eigen::VectorXd q_lo, q_hi;

  static ControlState zero(int n);
};

// Per bus-phase slot.
struct ReferenceSet {
  Eigen::VectorXd v_ref;
};

ReferenceSet project_reference(const Eigen::VectorXd& nu, const Eigen::VectorXd& v_lo, const Eigen::VectorXd& v_hi);
ReferenceSet project_reference(const Eigen::VectorXd& nu, double v_lo, double v_hi);

// Full capability left after active power: q_hi = sqrt(max(s^2 - p^2, 0)), q_lo = -q_hi.
std::pair<double, double> reactive_limits(double s_inv, double p_inv);
// Refreshes the limits from the present active output and clamps q into them.
void update_limits(ControlState& state, const Network& net, const Eigen::VectorXd& p_inv_slot);

// q+ = clamp(q - gamma (v - v_ref), q_lo, q_hi); v_meas and v_ref per DER unit.
ControlState integral_step(const ControlState& state, const Eigen::VectorXd& v_meas, const Eigen::VectorXd& v_ref,
                           double gamma);
// q+ = clamp(-k (v - v_ref), q_lo, q_hi).
ControlState droop_step(const ControlState& state, const Eigen::VectorXd& v_meas, const Eigen::VectorXd& v_ref,
                        double gain);

// Slots of the DER units, and a per-slot vector restricted to them.
std::vector<int> der_slots(const Network& net);
Eigen::VectorXd gather(const Eigen::VectorXd& per_slot, const std::vector<int>& slots);
// Sensitivity of DER-slot voltages to DER VARs.
Eigen::MatrixXd der_sensitivity(const Network& net, const SensitivityModel& sm);

// Exclusive bound 2 / lambda_max(M) on the integral step size; throws std::invalid_argument
// unless M is symmetric positive definite.
double stability_bound(const Eigen::MatrixXd& m);
// Spectral norm of I - gamma M.
double step_contraction(const Eigen::MatrixXd& m, double gamma);

// Voltage at the DER slots as a function of the DER VARs.
using VoltageFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& q)>;
VoltageFn linear_plant(const Eigen::MatrixXd& m_der, const Eigen::VectorXd& mu_der);
// Nonlinear plant at fixed loads and devices; throws PlantNonConvergence. Keeps a reference to net.
VoltageFn nonlinear_plant(const Network& net, const Injections& inj, const DeviceSettings& devices);

struct TrackingTrace {
  std::vector<double> error;  // ||v - v_ref||^2 measured before each update, then once after the last
  Eigen::VectorXd q;          // final VARs
  int first_saturation = -1;  // first update that hit a limit
  bool converged = false;     // last update moved q by at most 1e-9 (inf-norm)
};

TrackingTrace track(const VoltageFn& plant, ControlState state, const Eigen::VectorXd& v_ref, ControllerKind kind,
                    double gain, int iterations);

// Halves the droop gain, starting from k0, until the closed loop settles within `iterations`.
double backoff_droop_gain(const VoltageFn& plant, const ControlState& state, const Eigen::VectorXd& v_ref, double k0,
                          int iterations = 400, int max_halvings = 30);

// Open-loop dispatch: minimizes ||M q + mu - v_ref||^2 over the VAR box on the linear model.
Eigen::VectorXd open_loop_dispatch(const Eigen::MatrixXd& m_der, const Eigen::VectorXd& mu_der,
                                   const Eigen::VectorXd& v_ref, const Eigen::VectorXd& q_lo,
                                   const Eigen::VectorXd& q_hi);

// Static tracking comparison on the nonlinear plant at one operating point.
struct StaticComparison {
  TrackingTrace integral;
  TrackingTrace droop;
  double droop_gain = 0.0;
  double gamma = 0.0;
  double gamma_max = 0.0;
  Eigen::VectorXd open_loop_q;
  double open_loop_error = 0.0;  // measured on the plant
};

StaticComparison static_tracking(const Network& net, const Injections& inj, const DeviceSettings& devices,
                                 const Eigen::VectorXd& v_ref_slot, const LowerLayerConfig& cfg, int iterations);

}  // namespace vvl
