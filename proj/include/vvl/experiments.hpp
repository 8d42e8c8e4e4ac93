#pragma once

#include "vvl/lower_layer.hpp"
#include "vvl/nonlinear_flow.hpp"
#include "vvl/upper_layer.hpp"

namespace vvl {

// Single-step scheduling at a fixed operating point: horizon 1, no switching costs.
RhoConfig static_rho(RhoConfig base);

// First-step devices and planned inverter VARs applied to the plant. Throws PlantNonConvergence.
PowerFlowResult apply_schedule(const Network& net, const Injections& inj, const DeviceSchedule& s);

struct ScheduleOutcome {
  DeviceSchedule schedule;
  double plant_losses = 0.0;
};

struct QualityComparison {
  ScheduleOutcome miqp;
  ScheduleOutcome rounded;
};

// Branch and bound against rounding the relaxation, both measured on the plant.
QualityComparison compare_schedulers(const Network& net, const Injections& inj, const RhoConfig& rho);

// Static tracking with references and devices from the single-step schedule.
StaticComparison static_tracking_experiment(const Network& net, const Injections& inj, const RhoConfig& rho,
                                            const LowerLayerConfig& lower, int iterations);

}  // namespace vvl
