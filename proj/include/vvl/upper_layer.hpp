#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vvl/feeder.hpp"
#include "vvl/io.hpp"
#include "vvl/linear_flow.hpp"
#include "vvl/miqp.hpp"

namespace vvl {

// Hourly receding-horizon scheduling of taps, capacitor steps and planned inverter VARs.
struct RhoConfig {
  int horizon = 3;
  double c_loss = 1.0;
  double c_tap = 0.1;
  double c_cap = 0.1;
  double c_delta = 1e4;
  // VAR reservation; when unset each inverter's own reserve_factor is used.
  std::optional<double> eta = 0.8;
  double v_min = 0.9025;  // squared per-unit, applied to every bus-phase ...
  double v_max = 1.1025;
  Eigen::VectorXd v_min_slot;  // ... unless these per-slot vectors are given
  Eigen::VectorXd v_max_slot;
  double step_hours = 1.0;
  int daily_window = 24;  // scheduling steps covered by the daily movement budgets
  miqp::MiqpOptions miqp;

  Eigen::VectorXd lower_limits(int n) const;
  Eigen::VectorXd upper_limits(int n) const;
};

// Throws std::invalid_argument on a config that breaks its invariants.
void check_config(const RhoConfig& cfg, const Network& net);

// Per bus-phase forecasts, one vector per horizon step.
struct ForecastSet {
  std::vector<Eigen::VectorXd> p_c, q_c, p_inv;
  int horizon() const { return static_cast<int>(p_c.size()); }
};

struct ForecastNoise {
  double sigma = 0.0;  // relative standard deviation of multiplicative noise
  std::uint64_t seed = 0;
};

// Persistence forecast: per-step means of every profile over [start + t*len, start + (t+1)*len)
// samples. Throws ValidationError when the profiles do not cover the window.
ForecastSet forecast_profiles(const Network& net, const Profiles& profiles, int start_sample, int horizon,
                              int samples_per_step, const ForecastNoise& noise = {});
// The same operating point repeated over the horizon.
ForecastSet constant_forecast(const Injections& inj, int horizon);

// Device positions at t-1 and recent movement for the rolling daily budgets.
struct PriorState {
  DeviceSettings devices;
  // Absolute movement per past scheduling step, oldest first.
  std::vector<DeviceSettings> moves;

  static PriorState initial(const Network& net);
  static PriorState at(const DeviceSettings& devices);
  // Movement of one device over the most recent `steps` entries.
  int recent_tap_moves(int unit, int steps) const;
  int recent_cap_moves(int unit, int steps) const;
  // Append the move to `next` and make it the current position; keeps window-1 entries.
  void advance(const DeviceSettings& next, int window);
};

// Throws std::invalid_argument when the prior positions or history do not fit the network.
void check_prior(const PriorState& prior, const Network& net);

// Column indices of the decision variables at one horizon step.
struct StepVariables {
  std::vector<int> P, Q, v;            // per slot
  std::vector<int> q_inv;              // per DER unit
  std::vector<int> tap, tap_up, tap_dn;  // per regulator unit
  std::vector<int> cap, cap_up, cap_dn;  // per capacitor unit
};

struct RhoVariables {
  std::vector<StepVariables> steps;
  std::vector<int> delta;  // per slot, shared by every step
};

struct RhoProblem {
  miqp::MiqpProblem problem;
  RhoVariables vars;
  std::vector<Eigen::VectorXd> q_inv_limit;  // per step, per DER unit (symmetric)
  std::vector<std::string> warnings;
};

RhoProblem build_rho_problem(const Network& net, const RhoConfig& cfg, const ForecastSet& forecasts,
                             const PriorState& prior);

enum class ScheduleMethod { kBranchAndBound, kRoundedRelaxation };

struct DeviceSchedule {
  std::vector<DeviceSettings> devices;  // per horizon step
  std::vector<Eigen::VectorXd> q_inv;   // per step, per DER unit
  std::vector<Eigen::VectorXd> v;       // per step, per slot, linear-model squared voltages
  Eigen::VectorXd nu;                   // first-step voltages
  Eigen::VectorXd delta;                // per slot
  double objective = 0.0;
  miqp::MiqpStatus status = miqp::MiqpStatus::kOptimal;
  long nodes = 0;
  double gap = 0.0;
  PriorState next_prior;  // prior after applying the first step
  std::vector<std::string> warnings;

  const DeviceSettings& first() const { return devices.front(); }
};

// Solves the horizon problem and keeps every step for diagnostics. Throws SolverError when the
// search hits a node limit or the instance is infeasible. The rounded method falls back to the
// prior positions (with a warning) when fixing the rounded integers leaves no feasible point.
DeviceSchedule schedule(const Network& net, const RhoConfig& cfg, const ForecastSet& forecasts,
                        const PriorState& prior, ScheduleMethod method = ScheduleMethod::kBranchAndBound);

// Objective of the horizon problem with every integer held at the given positions
// (continuous variables re-optimized); +inf when that choice is infeasible.
double fixed_device_objective(const RhoProblem& rho, const std::vector<DeviceSettings>& devices);

}  // namespace vvl
