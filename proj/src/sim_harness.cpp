#include "vvl/sim_harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "vvl/error.hpp"
#include "vvl/nonlinear_flow.hpp"

namespace vvl {

namespace {

constexpr std::pair<SimMode, const char*> kModes[] = {
    {SimMode::kNoControl, "no_control"},
    {SimMode::kUpperOnly, "upper_only"},
    {SimMode::kTwoLayer, "two_layer"},
    {SimMode::kTwoLayerDroop, "two_layer_droop"},
    {SimMode::kRoundedRelaxationUpper, "rounded_relaxation_upper"},
};

std::string stamp(double t) { return "t=" + fmt_num(t) + "s: "; }

// Movement per upper period for every integer device, regulators first.
std::vector<std::vector<int>> move_series(const SimMetrics& m, const DeviceSettings& initial) {
  const std::size_t nr = initial.taps.size(), nc = initial.caps.size();
  std::vector<std::vector<int>> out(nr + nc);
  DeviceSettings prev = initial;
  for (const DeviceSettings& d : m.devices) {
    for (std::size_t u = 0; u < nr; ++u) out[u].push_back(std::abs(d.taps[u] - prev.taps[u]));
    for (std::size_t u = 0; u < nc; ++u) out[nr + u].push_back(std::abs(d.caps[u] - prev.caps[u]));
    prev = d;
  }
  return out;
}

int daily_window(const SimMetrics& m) {
  return m.period_s > 0.0 ? std::max(1, static_cast<int>(std::lround(86400.0 / m.period_s))) : 24;
}

int max_window_sum(const std::vector<int>& moves, int window) {
  int best = 0, sum = 0;
  for (std::size_t k = 0; k < moves.size(); ++k) {
    sum += moves[k];
    if (k >= static_cast<std::size_t>(window)) sum -= moves[k - window];
    best = std::max(best, sum);
  }
  return best;
}

std::string csv_row(double t, const Eigen::VectorXd& x) {
  std::string s = fmt_num(t);
  for (double v : x) s += "," + fmt_num(v);
  return s + "\n";
}

std::string header(const std::vector<std::string>& cols) {
  std::string s = "time_s";
  for (const std::string& c : cols) s += "," + c;
  return s + "\n";
}

std::string json_num(double v) { return std::isfinite(v) ? fmt_num(v) : "null"; }

}  // namespace

std::string to_string(SimMode m) {
  for (const auto& [mode, name] : kModes)
    if (mode == m) return name;
  return "unknown";
}

std::optional<SimMode> parse_sim_mode(const std::string& s) {
  for (const auto& [mode, name] : kModes)
    if (s == name) return mode;
  return std::nullopt;
}

RhoConfig ScenarioConfig::planning_defaults() {
  RhoConfig r;
  r.v_min = 0.9216;
  r.v_max = 1.0816;
  return r;
}

int ScenarioConfig::ticks_per_period() const {
  return static_cast<int>(std::lround(upper_period_s / lower_period_s));
}

int ScenarioConfig::num_periods() const { return static_cast<int>(std::lround(duration_h * 3600.0 / upper_period_s)); }

void check_scenario(const ScenarioConfig& cfg) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ScenarioConfig: " + m); };
  if (!(cfg.lower_period_s > 0.0) || !(cfg.upper_period_s > 0.0) || !(cfg.duration_h > 0.0))
    fail("periods and duration must be positive");
  const double ratio = cfg.upper_period_s / cfg.lower_period_s;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0) fail("lower period must divide the upper period");
  const double periods = cfg.duration_h * 3600.0 / cfg.upper_period_s;
  if (std::abs(periods - std::round(periods)) > 1e-9) fail("duration must be a multiple of the upper period");
  if (cfg.start_sample < 0) fail("start sample must be >= 0");
  if (!(cfg.band_min < cfg.band_max)) fail("empty operating band");
  if (cfg.forecast_sigma < 0.0 || cfg.measurement_sigma < 0.0) fail("noise levels must be >= 0");
}

SimSummary compute_metrics(const SimMetrics& m) {
  SimSummary s;
  s.ticks = static_cast<int>(m.time_s.size());
  for (double l : m.losses) s.energy_loss += l * m.tick_s / 3600.0;
  s.max_v = -std::numeric_limits<double>::infinity();
  s.min_v = std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd& v : m.v) {
    int out = 0;
    for (double x : v) {
      s.max_v = std::max(s.max_v, x);
      s.min_v = std::min(s.min_v, x);
      if (x < m.band_min || x > m.band_max) ++out;
    }
    s.violation_samples += out;
    if (out > 0) ++s.violation_ticks;
  }
  if (m.v.empty()) s.max_v = s.min_v = std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  int n = 0;
  for (double e : m.tracking_error)
    if (!std::isnan(e)) {
      sum += e;
      ++n;
    }
  s.mean_tracking_error = n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
  if (!m.devices.empty()) {
    DeviceSettings initial = m.devices.front();
    std::fill(initial.taps.begin(), initial.taps.end(), 0);
    std::fill(initial.caps.begin(), initial.caps.end(), 0);
    const auto moves = move_series(m, initial);
    const std::size_t nr = initial.taps.size();
    for (std::size_t u = 0; u < moves.size(); ++u) {
      long total = 0;
      for (int x : moves[u]) total += x;
      const int daily = max_window_sum(moves[u], daily_window(m));
      if (u < nr) {
        s.tap_moves += total;
        s.max_daily_tap_moves = std::max(s.max_daily_tap_moves, daily);
      } else {
        s.cap_moves += total;
        s.max_daily_cap_moves = std::max(s.max_daily_cap_moves, daily);
      }
    }
  }
  return s;
}

std::vector<std::string> limit_breaches(const Network& net, const SimMetrics& m, const DeviceSettings& initial) {
  std::vector<std::string> out;
  const auto moves = move_series(m, initial);
  const int w = daily_window(m);
  const auto& regs = net.regulators();
  const auto& caps = net.capacitors();
  for (std::size_t k = 0; k < m.devices.size(); ++k) {
    const std::string at = stamp(k < m.schedule_time_s.size() ? m.schedule_time_s[k] : 0.0);
    for (std::size_t u = 0; u < regs.size(); ++u) {
      const int n = m.devices[k].taps[u];
      if (n < regs[u].spec.tap_min || n > regs[u].spec.tap_max) out.push_back(at + regs[u].label + " outside range");
      if (moves[u][k] > regs[u].spec.per_step_limit) out.push_back(at + regs[u].label + " exceeds step limit");
    }
    for (std::size_t u = 0; u < caps.size(); ++u) {
      const int n = m.devices[k].caps[u];
      if (n < 0 || n > caps[u].spec.max_steps) out.push_back(at + caps[u].label + " outside range");
      if (moves[regs.size() + u][k] > caps[u].spec.per_step_limit) out.push_back(at + caps[u].label + " exceeds step limit");
    }
  }
  for (std::size_t u = 0; u < regs.size(); ++u)
    if (max_window_sum(moves[u], w) > regs[u].spec.daily_limit) out.push_back(regs[u].label + " exceeds daily limit");
  for (std::size_t u = 0; u < caps.size(); ++u)
    if (max_window_sum(moves[regs.size() + u], w) > caps[u].spec.daily_limit)
      out.push_back(caps[u].label + " exceeds daily limit");
  return out;
}

SimMetrics run_scenario(const Network& net, const Profiles& profiles, const ScenarioConfig& cfg) {
  check_scenario(cfg);
  check_config(cfg.rho, net);
  check_profile_refs(net, profiles);
  if (std::abs(profiles.step_s - cfg.lower_period_s) > 1e-9)
    throw ValidationError("profiles are sampled every " + fmt_num(profiles.step_s) + " s, the lower period is " +
                          fmt_num(cfg.lower_period_s) + " s");
  const int tpp = cfg.ticks_per_period();
  const int periods = cfg.num_periods();
  const long last = static_cast<long>(cfg.start_sample) + static_cast<long>(tpp) * periods;
  if (last > profiles.num_samples())
    throw ValidationError("profiles cover " + std::to_string(profiles.num_samples()) + " samples, the run needs " +
                          std::to_string(last));

  const SimMode mode = cfg.mode;
  const bool scheduled = mode != SimMode::kNoControl;
  const bool feedback = mode == SimMode::kTwoLayer || mode == SimMode::kTwoLayerDroop ||
                        mode == SimMode::kRoundedRelaxationUpper;
  const ControllerKind kind = mode == SimMode::kTwoLayerDroop ? ControllerKind::kDroop : ControllerKind::kIntegral;
  const ScheduleMethod method =
      mode == SimMode::kRoundedRelaxationUpper ? ScheduleMethod::kRoundedRelaxation : ScheduleMethod::kBranchAndBound;

  const SensitivityModel sm(net);
  const Eigen::MatrixXd m_der = der_sensitivity(net, sm);
  const std::vector<int> slots = der_slots(net);
  const int n_der = static_cast<int>(slots.size());
  const int n = net.num_slots();
  double gamma_max = 0.0;
  if (n_der > 0) gamma_max = stability_bound(m_der);

  SimMetrics out;
  out.tick_s = cfg.lower_period_s;
  out.period_s = cfg.upper_period_s;
  out.band_min = cfg.band_min;
  out.band_max = cfg.band_max;
  for (const BusPhase& bp : net.index().slots())
    out.slot_labels.push_back(std::to_string(bp.bus_id) + phase_char(bp.phase));
  for (const DerUnit& d : net.ders()) out.der_labels.push_back(d.label);
  for (const RegulatorUnit& r : net.regulators()) out.device_labels.push_back(r.label);
  for (const CapacitorUnit& c : net.capacitors()) out.device_labels.push_back(c.label);
  if (feedback && kind == ControllerKind::kIntegral) out.gamma = cfg.lower.gamma.value_or(0.5 * gamma_max);

  PriorState prior = PriorState::initial(net);
  DeviceSettings devices = net.zero_settings();
  ControlState state = ControlState::zero(n_der);
  Eigen::VectorXd v_ref;
  std::optional<double> droop_gain = cfg.lower.droop_gain;
  std::mt19937_64 meas_rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int total_steps_available = (profiles.num_samples() - cfg.start_sample) / tpp;

  out.time_s.reserve(static_cast<std::size_t>(tpp) * periods);
  for (int p = 0; p < periods; ++p) {
    const int base = cfg.start_sample + p * tpp;
    const double t_period = static_cast<double>(p) * cfg.upper_period_s;
    if (scheduled) {
      const int h = std::min(cfg.rho.horizon, total_steps_available - p);
      const ForecastNoise noise{cfg.forecast_sigma, cfg.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(p)};
      const ForecastSet fc = forecast_profiles(net, profiles, base, h, tpp, noise);
      DeviceSchedule s;
      try {
        s = schedule(net, cfg.rho, fc, prior, method);
      } catch (const SolverError& e) {
        throw SolverError(stamp(t_period) + e.what());
      }
      devices = s.first();
      prior = s.next_prior;
      for (const std::string& w : s.warnings) out.warnings.push_back(stamp(t_period) + w);
      v_ref = gather(project_reference(s.nu, cfg.rho.lower_limits(n), cfg.rho.upper_limits(n)).v_ref, slots);
    }
    out.schedule_time_s.push_back(t_period);
    out.devices.push_back(devices);

    for (int k = 0; k < tpp; ++k) {
      const int sample = base + k;
      const double t = t_period + static_cast<double>(k) * cfg.lower_period_s;
      Injections inj = injections_at(net, profile_values_at(profiles, sample));
      update_limits(state, net, inj.p_inv);
      if (feedback && kind == ControllerKind::kDroop && !droop_gain) {
        try {
          droop_gain = backoff_droop_gain(nonlinear_plant(net, inj, devices), state, v_ref, 0.5 * gamma_max);
        } catch (const PlantNonConvergence& e) {
          throw PlantNonConvergence(stamp(t) + e.what());
        }
      }
      for (int d = 0; d < n_der; ++d) inj.q_inv[slots[d]] += state.q[d];
      const PowerFlowResult r = solve_power_flow(net, inj, devices);
      if (!r.converged)
        throw PlantNonConvergence(stamp(t) + "plant did not converge (last change " + fmt_num(r.last_change) + ")");

      const Eigen::VectorXd v_der = gather(r.v, slots);
      int viol = 0;
      for (double x : r.v)
        if (x < cfg.band_min || x > cfg.band_max) ++viol;
      out.time_s.push_back(t);
      out.losses.push_back(r.losses);
      out.v.push_back(r.v);
      out.violations.push_back(viol);
      out.q_inv.push_back(state.q);
      out.tracking_error.push_back(scheduled ? (v_der - v_ref).squaredNorm()
                                             : std::numeric_limits<double>::quiet_NaN());

      if (feedback) {
        Eigen::VectorXd v_meas = v_der;
        if (cfg.measurement_sigma > 0.0)
          for (double& x : v_meas) x += cfg.measurement_sigma * gauss(meas_rng);
        state = kind == ControllerKind::kIntegral ? integral_step(state, v_meas, v_ref, out.gamma)
                                                  : droop_step(state, v_meas, v_ref, *droop_gain);
      }
    }
  }
  if (droop_gain) out.droop_gain = *droop_gain;
  return out;
}

std::string summary_json(const SimSummary& s) {
  std::ostringstream o;
  o << "{\n"
    << "  \"ticks\": " << s.ticks << ",\n"
    << "  \"energy_loss_pu_h\": " << json_num(s.energy_loss) << ",\n"
    << "  \"max_v\": " << json_num(s.max_v) << ",\n"
    << "  \"min_v\": " << json_num(s.min_v) << ",\n"
    << "  \"violation_samples\": " << s.violation_samples << ",\n"
    << "  \"violation_ticks\": " << s.violation_ticks << ",\n"
    << "  \"tap_moves\": " << s.tap_moves << ",\n"
    << "  \"cap_moves\": " << s.cap_moves << ",\n"
    << "  \"max_daily_tap_moves\": " << s.max_daily_tap_moves << ",\n"
    << "  \"max_daily_cap_moves\": " << s.max_daily_cap_moves << ",\n"
    << "  \"mean_tracking_error\": " << json_num(s.mean_tracking_error) << "\n"
    << "}\n";
  return o.str();
}

void write_results(const SimMetrics& m, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  std::string volts = header(m.slot_labels), losses = "time_s,loss,tracking_error,violations\n";
  std::string qinv = header(m.der_labels), devs = header(m.device_labels);
  for (std::size_t k = 0; k < m.time_s.size(); ++k) {
    volts += csv_row(m.time_s[k], m.v[k]);
    qinv += csv_row(m.time_s[k], m.q_inv[k]);
    losses += fmt_num(m.time_s[k]) + "," + fmt_num(m.losses[k]) + "," + fmt_num(m.tracking_error[k]) + "," +
              std::to_string(m.violations[k]) + "\n";
  }
  for (std::size_t k = 0; k < m.devices.size(); ++k) {
    std::string row = fmt_num(m.schedule_time_s[k]);
    for (int x : m.devices[k].taps) row += "," + std::to_string(x);
    for (int x : m.devices[k].caps) row += "," + std::to_string(x);
    devs += row + "\n";
  }
  write_text_file(dir / "voltages.csv", volts);
  write_text_file(dir / "losses.csv", losses);
  write_text_file(dir / "devices.csv", devs);
  write_text_file(dir / "qinv.csv", qinv);
  write_text_file(dir / "summary.json", summary_json(compute_metrics(m)));
}

}  // namespace vvl
