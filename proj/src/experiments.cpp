#include "vvl/experiments.hpp"

#include "vvl/error.hpp"

namespace vvl {

RhoConfig static_rho(RhoConfig base) {
  base.horizon = 1;
  base.c_tap = 0.0;
  base.c_cap = 0.0;
  return base;
}

PowerFlowResult apply_schedule(const Network& net, const Injections& inj, const DeviceSchedule& s) {
  Injections x = inj;
  x.q_inv = Eigen::VectorXd::Zero(net.num_slots());
  const std::vector<int> slots = der_slots(net);
  for (std::size_t k = 0; k < slots.size(); ++k) x.q_inv[slots[k]] += s.q_inv.front()[k];
  PowerFlowResult r = solve_power_flow(net, x, s.first());
  if (!r.converged) throw PlantNonConvergence("plant did not converge under the schedule");
  return r;
}

QualityComparison compare_schedulers(const Network& net, const Injections& inj, const RhoConfig& rho) {
  const ForecastSet fc = constant_forecast(inj, rho.horizon);
  const PriorState prior = PriorState::initial(net);
  QualityComparison c;
  c.miqp.schedule = schedule(net, rho, fc, prior, ScheduleMethod::kBranchAndBound);
  c.rounded.schedule = schedule(net, rho, fc, prior, ScheduleMethod::kRoundedRelaxation);
  c.miqp.plant_losses = apply_schedule(net, inj, c.miqp.schedule).losses;
  c.rounded.plant_losses = apply_schedule(net, inj, c.rounded.schedule).losses;
  return c;
}

StaticComparison static_tracking_experiment(const Network& net, const Injections& inj, const RhoConfig& rho,
                                            const LowerLayerConfig& lower, int iterations) {
  const DeviceSchedule s = schedule(net, rho, constant_forecast(inj, rho.horizon), PriorState::initial(net));
  const int n = net.num_slots();
  const ReferenceSet ref = project_reference(s.nu, rho.lower_limits(n), rho.upper_limits(n));
  return static_tracking(net, inj, s.first(), ref.v_ref, lower, iterations);
}

}  // namespace vvl
