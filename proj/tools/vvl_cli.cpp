// vvl: command-line front end for the Volt/VAR control lab.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "vvl/config.hpp"
#include "vvl/error.hpp"
#include "vvl/experiments.hpp"
#include "vvl/io.hpp"
#include "vvl/linear_flow.hpp"
#include "vvl/lower_layer.hpp"
#include "vvl/miqp.hpp"
#include "vvl/nonlinear_flow.hpp"
#include "vvl/sim_harness.hpp"
#include "vvl/upper_layer.hpp"

namespace {

using namespace vvl;

// Values given on the command line; unset ones fall back to the config file, then to defaults.
struct Overrides {
  std::string config;
  std::optional<int> horizon;
  std::optional<double> gamma, droop_gain, hours, c_tap, c_cap, c_delta, eta, v_min, v_max;
  std::optional<std::uint64_t> seed;
  std::optional<int> start_sample;
  std::optional<std::string> mode;
};

void add_config_options(CLI::App* c, Overrides& o) {
  c->add_option("--config", o.config, "JSON settings file")->check(CLI::ExistingFile);
  c->add_option("--horizon", o.horizon, "scheduling horizon in upper periods")->check(CLI::PositiveNumber);
  c->add_option("--c-tap", o.c_tap, "tap switching weight");
  c->add_option("--c-cap", o.c_cap, "capacitor switching weight");
  c->add_option("--c-delta", o.c_delta, "voltage slack weight");
  c->add_option("--eta", o.eta, "inverter VAR reservation factor");
  c->add_option("--v-min", o.v_min, "planning window floor, squared per-unit");
  c->add_option("--v-max", o.v_max, "planning window ceiling, squared per-unit");
  c->add_option("--gamma", o.gamma, "integral step size");
  c->add_option("--droop-gain", o.droop_gain, "droop gain (default: automatic backoff)");
}

ScenarioConfig resolve(const Overrides& o, ScenarioConfig base = {}) {
  ScenarioConfig c = o.config.empty() ? base : load_scenario_config(o.config, base);
  if (const char* s = std::getenv("VVL_SEED"); s && *s) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (*end != '\0') throw ValidationError("VVL_SEED must be a non-negative integer, got '" + std::string(s) + "'");
    c.seed = v;
  }
  if (o.seed) c.seed = *o.seed;
  if (o.mode) {
    const auto m = parse_sim_mode(*o.mode);
    if (!m) throw std::invalid_argument("unknown mode '" + *o.mode + "'");
    c.mode = *m;
  }
  if (o.hours) c.duration_h = *o.hours;
  if (o.start_sample) c.start_sample = *o.start_sample;
  if (o.horizon) c.rho.horizon = *o.horizon;
  if (o.c_tap) c.rho.c_tap = *o.c_tap;
  if (o.c_cap) c.rho.c_cap = *o.c_cap;
  if (o.c_delta) c.rho.c_delta = *o.c_delta;
  if (o.eta) c.rho.eta = *o.eta;
  if (o.v_min) c.rho.v_min = *o.v_min;
  if (o.v_max) c.rho.v_max = *o.v_max;
  if (o.gamma) c.lower.gamma = *o.gamma;
  if (o.droop_gain) c.lower.droop_gain = *o.droop_gain;
  return c;
}

// Writes to the file when a path is given, stdout otherwise.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

Network load_network(const std::string& path) { return Network(parse_feeder_file(path)); }

std::string slot_name(const Network& net, int s) {
  const BusPhase& bp = net.index().at(s);
  return std::to_string(bp.bus_id) + "," + phase_char(bp.phase);
}

std::string error_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::kUsage: return "usage";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kSolverLimit: return "solver_limit";
    case ErrorCode::kPlantNonConvergence: return "plant_nonconvergence";
  }
  return "internal";
}

int fail(const std::string& name, int code, std::string msg) {
  for (char& ch : msg)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::cerr << "error=" << name << " exit=" << code << " " << msg << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vvl: two-layer Volt/VAR control lab"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string feeder, profiles_dir, snapshot, out;

  // validate
  auto* validate = app.add_subcommand("validate", "parse and validate a feeder file");
  validate->add_option("--feeder", feeder, "feeder JSON")->required();
  validate->add_option("--profiles", profiles_dir, "also check a profile directory")->check(CLI::ExistingDirectory);

  // pf
  auto* pf = app.add_subcommand("pf", "nonlinear power flow at a snapshot");
  pf->add_option("--feeder", feeder, "feeder JSON")->required();
  pf->add_option("--snapshot", snapshot, "snapshot JSON")->required();
  pf->add_option("--out", out, "CSV output (default stdout)");

  // linerr
  int n_min = -16, n_max = 16;
  double lv_min = 0.9409, lv_max = 1.0609, dv = 0.005, tap_step = 0.00625, vnom = 1.0;
  auto* linerr = app.add_subcommand("linerr", "tap linearization error sweep");
  linerr->add_option("--n-min", n_min);
  linerr->add_option("--n-max", n_max);
  linerr->add_option("--v-min", lv_min, "squared per-unit");
  linerr->add_option("--v-max", lv_max, "squared per-unit");
  linerr->add_option("--dv", dv)->check(CLI::PositiveNumber);
  linerr->add_option("--tap-step", tap_step)->check(CLI::PositiveNumber);
  linerr->add_option("--vnom", vnom)->check(CLI::PositiveNumber);
  linerr->add_option("--out", out, "CSV output (default stdout)");

  // schedule
  Overrides sched_o;
  std::string method = "miqp";
  auto* sched = app.add_subcommand("schedule", "rolling hourly device schedule from profiles");
  sched->add_option("--feeder", feeder, "feeder JSON")->required();
  sched->add_option("--profiles", profiles_dir, "profile directory")->required()->check(CLI::ExistingDirectory);
  sched->add_option("--hours", sched_o.hours, "number of upper periods to schedule");
  sched->add_option("--start-sample", sched_o.start_sample, "first profile sample at the lower period");
  sched->add_option("--method", method, "miqp or rounded")->check(CLI::IsMember({"miqp", "rounded"}));
  sched->add_option("--out", out, "CSV output (default stdout)");
  add_config_options(sched, sched_o);

  // control
  Overrides ctl_o;
  int iterations = 200;
  auto* control = app.add_subcommand("control", "static tracking comparison at a snapshot");
  control->add_option("--feeder", feeder, "feeder JSON")->required();
  control->add_option("--snapshot", snapshot, "snapshot JSON")->required();
  control->add_option("--iterations", iterations)->check(CLI::PositiveNumber);
  control->add_option("--out", out, "CSV output (default stdout)");
  add_config_options(control, ctl_o);

  // simulate
  Overrides sim_o;
  auto* simulate = app.add_subcommand("simulate", "closed-loop scenario on the plant");
  simulate->add_option("--mode", sim_o.mode, "no_control, upper_only, two_layer, two_layer_droop, rounded_relaxation_upper");
  simulate->add_option("--feeder", feeder, "feeder JSON")->required();
  simulate->add_option("--profiles", profiles_dir, "profile directory")->required()->check(CLI::ExistingDirectory);
  simulate->add_option("--out", out, "result directory")->required();
  simulate->add_option("--hours", sim_o.hours, "duration");
  simulate->add_option("--start-sample", sim_o.start_sample, "first profile sample");
  simulate->add_option("--seed", sim_o.seed, "noise seed (overrides VVL_SEED)");
  add_config_options(simulate, sim_o);

  // stability
  std::optional<double> stab_gamma;
  auto* stability = app.add_subcommand("stability", "integral step size bound of a feeder");
  stability->add_option("--feeder", feeder, "feeder JSON")->required();
  stability->add_option("--gamma", stab_gamma, "also report the contraction factor at this step size");

  // miqp
  Overrides mq_o;
  std::string dump_path, load_path;
  auto* miqp_cmd = app.add_subcommand("miqp", "dump a single-step scheduling problem, or solve a dumped one");
  auto* dump_opt = miqp_cmd->add_option("--dump", dump_path, "write the problem at --snapshot to this file");
  auto* load_opt = miqp_cmd->add_option("--load", load_path, "solve a dumped problem")->check(CLI::ExistingFile);
  dump_opt->excludes(load_opt);
  miqp_cmd->add_option("--feeder", feeder, "feeder JSON")->needs(dump_opt);
  miqp_cmd->add_option("--snapshot", snapshot, "snapshot JSON")->needs(dump_opt);
  miqp_cmd->add_option("--method", method, "miqp or rounded")->check(CLI::IsMember({"miqp", "rounded"}));
  add_config_options(miqp_cmd, mq_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", 2, e.what());
  }

  try {
    if (*validate) {
      const Network net = load_network(feeder);
      std::cout << "ok name=" << net.feeder().name << " buses=" << net.feeder().buses.size()
                << " branches=" << net.num_branches() << " slots=" << net.num_slots()
                << " integer_devices=" << net.num_integer_devices() << " ders=" << net.ders().size();
      if (!profiles_dir.empty()) {
        const Profiles p = parse_profiles(profiles_dir);
        check_profile_refs(net, p);
        std::cout << " profile_samples=" << p.num_samples();
      }
      std::cout << "\n";
    } else if (*pf) {
      const Network net = load_network(feeder);
      const Snapshot s = parse_snapshot_file(snapshot);
      const PowerFlowResult r = solve_power_flow(net, snapshot_injections(net, s), snapshot_devices(net, s));
      if (!r.converged) throw PlantNonConvergence("power flow did not converge (last change " + fmt_num(r.last_change) + ")");
      const Eigen::VectorXd bl = branch_losses(net, r);
      std::string csv = "bus,phase,v,magnitude,angle_deg,branch_loss\n";
      for (int k = 0; k < net.num_slots(); ++k)
        csv += slot_name(net, k) + "," + fmt_num(r.v[k]) + "," + fmt_num(std::abs(r.V[k])) + "," +
               fmt_num(std::arg(r.V[k]) * 180.0 / 3.14159265358979323846) + "," + fmt_num(bl[k]) + "\n";
      emit(out, csv);
      std::cerr << "losses=" << fmt_num(r.losses) << " iterations=" << r.iterations << "\n";
    } else if (*linerr) {
      std::string csv = "n,v,error_taps\n";
      for (const TapErrorSample& s : sweep_tap_error(n_min, n_max, lv_min, lv_max, dv, tap_step, vnom))
        csv += std::to_string(s.n) + "," + fmt_num(s.v) + "," + fmt_num(s.error_taps) + "\n";
      emit(out, csv);
    } else if (*sched) {
      ScenarioConfig defaults;
      defaults.duration_h = 24.0;
      const ScenarioConfig cfg = resolve(sched_o, defaults);
      const Network net = load_network(feeder);
      const Profiles p = parse_profiles(profiles_dir, cfg.lower_period_s);
      check_config(cfg.rho, net);
      const int tpp = cfg.ticks_per_period();
      const int periods = cfg.num_periods();
      const int available = (p.num_samples() - cfg.start_sample) / tpp;
      if (periods > available)
        throw ValidationError("profiles cover " + std::to_string(available) + " upper periods, asked for " +
                              std::to_string(periods));
      const ScheduleMethod m = method == "rounded" ? ScheduleMethod::kRoundedRelaxation : ScheduleMethod::kBranchAndBound;
      PriorState prior = PriorState::initial(net);
      std::string csv = "t,device,phase,setting\n";
      for (int h = 0; h < periods; ++h) {
        const int horizon = std::min(cfg.rho.horizon, available - h);
        const ForecastSet fc = forecast_profiles(net, p, cfg.start_sample + h * tpp, horizon, tpp,
                                                 {cfg.forecast_sigma, cfg.seed + static_cast<std::uint64_t>(h)});
        const DeviceSchedule s = schedule(net, cfg.rho, fc, prior, m);
        for (const std::string& w : s.warnings) std::cerr << "warning: hour " << h << ": " << w << "\n";
        const std::string t = fmt_num(h * cfg.upper_period_s);
        for (std::size_t u = 0; u < net.regulators().size(); ++u) {
          const RegulatorUnit& r = net.regulators()[u];
          std::string phases;
          for (int slot : r.slots) phases += phase_char(net.index().at(slot).phase);
          csv += t + "," + r.label + "," + phases + "," + std::to_string(s.first().taps[u]) + "\n";
        }
        for (std::size_t u = 0; u < net.capacitors().size(); ++u) {
          const CapacitorUnit& c = net.capacitors()[u];
          csv += t + "," + c.label + "," + phase_char(c.phase) + "," + std::to_string(s.first().caps[u]) + "\n";
        }
        for (std::size_t d = 0; d < net.ders().size(); ++d) {
          const DerUnit& der = net.ders()[d];
          csv += t + "," + der.label + "," + phase_char(der.phase) + "," + fmt_num(s.q_inv.front()[d]) + "\n";
        }
        for (int k = 0; k < net.num_slots(); ++k) {
          const BusPhase& bp = net.index().at(k);
          csv += t + ",nu:" + std::to_string(bp.bus_id) + "," + phase_char(bp.phase) + "," + fmt_num(s.nu[k]) + "\n";
        }
        prior = s.next_prior;
      }
      emit(out, csv);
    } else if (*control) {
      const ScenarioConfig cfg = resolve(ctl_o);
      const Network net = load_network(feeder);
      const Snapshot snap = parse_snapshot_file(snapshot);
      const StaticComparison c =
          static_tracking_experiment(net, snapshot_injections(net, snap), static_rho(cfg.rho), cfg.lower, iterations);
      std::string csv = "iteration,integral,droop,open_loop\n";
      for (std::size_t k = 0; k < c.integral.error.size(); ++k)
        csv += std::to_string(k) + "," + fmt_num(c.integral.error[k]) + "," + fmt_num(c.droop.error[k]) + "," +
               fmt_num(c.open_loop_error) + "\n";
      emit(out, csv);
      std::cerr << "gamma=" << fmt_num(c.gamma) << " gamma_max=" << fmt_num(c.gamma_max)
                << " droop_gain=" << fmt_num(c.droop_gain) << "\n";
    } else if (*simulate) {
      const ScenarioConfig cfg = resolve(sim_o);
      const Network net = load_network(feeder);
      const Profiles p = parse_profiles(profiles_dir, cfg.lower_period_s);
      const SimMetrics m = run_scenario(net, p, cfg);
      write_results(m, out);
      for (const std::string& w : m.warnings) std::cerr << "warning: " << w << "\n";
      for (const std::string& b : limit_breaches(net, m, net.zero_settings())) std::cerr << "breach: " << b << "\n";
      std::cout << summary_json(compute_metrics(m));
    } else if (*stability) {
      const Network net = load_network(feeder);
      const SensitivityModel sm(net);
      const Eigen::MatrixXd m = der_sensitivity(net, sm);
      const double g = stability_bound(m);
      std::cout << "gamma_max=" << fmt_num(g) << " lambda_max=" << fmt_num(2.0 / g) << " ders=" << m.rows();
      if (stab_gamma) std::cout << " contraction=" << fmt_num(step_contraction(m, *stab_gamma));
      std::cout << "\n";
    } else if (*miqp_cmd) {
      if (!dump_path.empty()) {
        if (feeder.empty() || snapshot.empty()) throw std::invalid_argument("--dump needs --feeder and --snapshot");
        const ScenarioConfig cfg = resolve(mq_o);
        const Network net = load_network(feeder);
        const Snapshot snap = parse_snapshot_file(snapshot);
        const RhoConfig rho = static_rho(cfg.rho);
        const RhoProblem rp =
            build_rho_problem(net, rho, constant_forecast(snapshot_injections(net, snap), 1), PriorState::initial(net));
        write_text_file(dump_path, miqp::dump_problem(rp.problem));
        std::cout << "dumped vars=" << rp.problem.num_vars() << " eq=" << rp.problem.Aeq.rows() << " ineq=" << rp.problem.Ain.rows() << "\n";
      } else if (!load_path.empty()) {
        const miqp::MiqpProblem p = miqp::load_problem(read_text_file(load_path));
        const miqp::MiqpSolution s = method == "rounded" ? miqp::round_relaxation(p) : miqp::solve_miqp(p);
        std::cout << "status=" << miqp::to_string(s.status) << " objective=" << fmt_num(s.objective)
                  << " nodes=" << s.nodes << "\n";
        if (s.has_solution)
          for (int k = 0; k < p.num_vars(); ++k)
            std::cout << (p.names.empty() ? "x" + std::to_string(k) : p.names[k]) << "," << fmt_num(s.x[k]) << "\n";
        if (s.status == miqp::MiqpStatus::kNodeLimit) return fail("solver_limit", 4, "node limit reached");
        if (s.status == miqp::MiqpStatus::kInfeasible) return fail("solver_limit", 4, "problem is infeasible");
      } else {
        throw std::invalid_argument("miqp needs --dump or --load");
      }
    }
  } catch (const Error& e) {
    return fail(error_name(e.code()), static_cast<int>(e.code()), e.what());
  } catch (const std::invalid_argument& e) {
    return fail("usage", 2, e.what());
  } catch (const std::exception& e) {
    return fail("io", 1, e.what());
  }
  return 0;
}
