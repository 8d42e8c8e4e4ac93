#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vvl/feeder.hpp"
#include "vvl/io.hpp"
#include "vvl/lower_layer.hpp"
#include "vvl/upper_layer.hpp"

namespace vvl {

enum class SimMode { kNoControl, kUpperOnly, kTwoLayer, kTwoLayerDroop, kRoundedRelaxationUpper };

std::string to_string(SimMode m);
std::optional<SimMode> parse_sim_mode(const std::string& s);

struct ScenarioConfig {
  double duration_h = 24.0;
  double upper_period_s = 3600.0;
  double lower_period_s = 5.0;
  int start_sample = 0;  // first profile sample, at the lower-period resolution
  RhoConfig rho = planning_defaults();
  LowerLayerConfig lower;
  SimMode mode = SimMode::kTwoLayer;
  // Operating band used for violation counting (squared per-unit).
  double band_min = 0.9025;
  double band_max = 1.1025;
  double forecast_sigma = 0.0;
  double measurement_sigma = 0.0;  // additive noise on the DER-slot readings
  std::uint64_t seed = 1;

  // RHO settings used by the scenarios: planning window [0.96^2, 1.04^2], inside the band.
  static RhoConfig planning_defaults();

  int ticks_per_period() const;
  int num_periods() const;
  int num_ticks() const { return ticks_per_period() * num_periods(); }
};

// Throws std::invalid_argument unless the periods nest and the duration is a whole number of
// upper periods.
void check_scenario(const ScenarioConfig& cfg);

// Raw traces. Per-tick vectors hold one entry per lower-period tick, measured on the plant
// after the devices and VARs of that tick were applied.
struct SimMetrics {
  double tick_s = 0.0;
  double period_s = 0.0;  // upper period
  double band_min = 0.0, band_max = 0.0;
  std::vector<std::string> slot_labels;    // "<bus><phase>"
  std::vector<std::string> der_labels;     // DerUnit labels
  std::vector<std::string> device_labels;  // regulators then capacitors

  std::vector<double> time_s;
  std::vector<double> losses;               // per-unit active power
  std::vector<Eigen::VectorXd> v;           // squared voltage per slot
  std::vector<double> tracking_error;       // ||v - v_ref||^2 at DER slots; NaN without a reference
  std::vector<int> violations;              // slots outside the band
  std::vector<Eigen::VectorXd> q_inv;       // per DER unit
  std::vector<double> schedule_time_s;      // one entry per upper period
  std::vector<DeviceSettings> devices;      // applied at that period
  std::vector<std::string> warnings;        // prefixed with the simulation time
  double droop_gain = 0.0;                  // crossover gain in droop mode
  double gamma = 0.0;                       // integral step size in integral modes
};

struct SimSummary {
  int ticks = 0;
  double energy_loss = 0.0;  // per-unit power times hours
  double max_v = 0.0, min_v = 0.0;
  long violation_samples = 0;  // slot-samples outside the band
  int violation_ticks = 0;     // ticks with at least one such slot
  long tap_moves = 0, cap_moves = 0;
  double mean_tracking_error = 0.0;  // over ticks with a reference; NaN when there are none
  int max_daily_tap_moves = 0;  // largest movement of any regulator unit over any 24 h window
  int max_daily_cap_moves = 0;
};

SimSummary compute_metrics(const SimMetrics& m);

// Device rate and daily budgets checked over the applied schedule; empty when all hold.
std::vector<std::string> limit_breaches(const Network& net, const SimMetrics& m, const DeviceSettings& initial);

// Throws PlantNonConvergence with a timestamped message when the plant fails, SolverError when
// scheduling fails, ValidationError when the profiles do not cover the run.
SimMetrics run_scenario(const Network& net, const Profiles& profiles, const ScenarioConfig& cfg);

// voltages.csv, losses.csv, devices.csv, qinv.csv and summary.json in `dir`.
void write_results(const SimMetrics& m, const std::filesystem::path& dir);
std::string summary_json(const SimSummary& s);

}  // namespace vvl
