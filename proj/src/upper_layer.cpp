#include "vvl/upper_layer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "vvl/error.hpp"

namespace vvl {

using miqp::kInf;
using miqp::MiqpProblem;

Eigen::VectorXd RhoConfig::lower_limits(int n) const {
  return v_min_slot.size() > 0 ? v_min_slot : Eigen::VectorXd::Constant(n, v_min);
}

Eigen::VectorXd RhoConfig::upper_limits(int n) const {
  return v_max_slot.size() > 0 ? v_max_slot : Eigen::VectorXd::Constant(n, v_max);
}

void check_config(const RhoConfig& cfg, const Network& net) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("RhoConfig: " + m); };
  if (cfg.horizon < 1) fail("horizon must be >= 1");
  if (cfg.c_loss < 0 || cfg.c_tap < 0 || cfg.c_cap < 0 || cfg.c_delta < 0) fail("weights must be >= 0");
  if (!(cfg.c_delta >= 100.0 * std::max({cfg.c_loss, cfg.c_tap, cfg.c_cap})) || cfg.c_delta <= 0)
    fail("c_delta must dominate the other weights (>= 100x)");
  if (cfg.eta && !(*cfg.eta > 0.0 && *cfg.eta < 1.0)) fail("eta must lie in (0, 1)");
  if (!(cfg.step_hours > 0)) fail("step_hours must be > 0");
  if (cfg.daily_window < 1) fail("daily_window must be >= 1");
  const int n = net.num_slots();
  if (cfg.v_min_slot.size() != 0 && cfg.v_min_slot.size() != n) fail("v_min_slot size mismatch");
  if (cfg.v_max_slot.size() != 0 && cfg.v_max_slot.size() != n) fail("v_max_slot size mismatch");
  const double vn2 = net.feeder().vnom * net.feeder().vnom;
  const Eigen::VectorXd lo = cfg.lower_limits(n), hi = cfg.upper_limits(n);
  for (int s = 0; s < n; ++s)
    if (!(lo[s] < vn2 && vn2 < hi[s])) fail("voltage window must contain vnom at slot " + std::to_string(s));
}

ForecastSet forecast_profiles(const Network& net, const Profiles& profiles, int start_sample, int horizon,
                              int samples_per_step, const ForecastNoise& noise) {
  if (horizon < 1 || samples_per_step < 1) throw std::invalid_argument("forecast window must be non-empty");
  check_profile_refs(net, profiles);
  const long end = static_cast<long>(start_sample) + static_cast<long>(horizon) * samples_per_step;
  if (start_sample < 0 || end > profiles.num_samples())
    throw ValidationError("forecast window [" + std::to_string(start_sample) + ", " + std::to_string(end) +
                          ") exceeds profile coverage of " + std::to_string(profiles.num_samples()) + " samples");
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ForecastSet f;
  for (int t = 0; t < horizon; ++t) {
    ProfileValues means;
    const int a = start_sample + t * samples_per_step;
    for (const auto& [ref, table] : profiles.tables) {
      double sum = 0.0;
      for (int k = a; k < a + samples_per_step; ++k) sum += table.values[k];
      double m = sum / samples_per_step;
      if (noise.sigma > 0.0) m = std::max(0.0, m * (1.0 + noise.sigma * gauss(rng)));
      means[ref] = m;
    }
    const Injections inj = injections_at(net, means);
    f.p_c.push_back(inj.p_c);
    f.q_c.push_back(inj.q_c);
    f.p_inv.push_back(inj.p_inv);
  }
  return f;
}

ForecastSet constant_forecast(const Injections& inj, int horizon) {
  ForecastSet f;
  for (int t = 0; t < horizon; ++t) {
    f.p_c.push_back(inj.p_c);
    f.q_c.push_back(inj.q_c);
    f.p_inv.push_back(inj.p_inv);
  }
  return f;
}

PriorState PriorState::initial(const Network& net) { return at(net.zero_settings()); }

PriorState PriorState::at(const DeviceSettings& devices) { return {devices, {}}; }

int PriorState::recent_tap_moves(int unit, int steps) const {
  int sum = 0;
  const int n = static_cast<int>(moves.size());
  for (int k = std::max(0, n - steps); k < n; ++k) sum += moves[k].taps.at(unit);
  return sum;
}

int PriorState::recent_cap_moves(int unit, int steps) const {
  int sum = 0;
  const int n = static_cast<int>(moves.size());
  for (int k = std::max(0, n - steps); k < n; ++k) sum += moves[k].caps.at(unit);
  return sum;
}

void PriorState::advance(const DeviceSettings& next, int window) {
  DeviceSettings m = next;
  for (size_t u = 0; u < m.taps.size(); ++u) m.taps[u] = std::abs(next.taps[u] - devices.taps.at(u));
  for (size_t u = 0; u < m.caps.size(); ++u) m.caps[u] = std::abs(next.caps[u] - devices.caps.at(u));
  moves.push_back(std::move(m));
  while (!moves.empty() && static_cast<int>(moves.size()) > window - 1) moves.erase(moves.begin());
  devices = next;
}

void check_prior(const PriorState& prior, const Network& net) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("PriorState: " + m); };
  const auto& regs = net.regulators();
  const auto& caps = net.capacitors();
  if (prior.devices.taps.size() != regs.size() || prior.devices.caps.size() != caps.size())
    fail("device count mismatch");
  for (size_t u = 0; u < regs.size(); ++u) {
    const int n = prior.devices.taps[u];
    if (n < regs[u].spec.tap_min || n > regs[u].spec.tap_max) fail(regs[u].label + " outside tap range");
  }
  for (size_t u = 0; u < caps.size(); ++u) {
    const int n = prior.devices.caps[u];
    if (n < 0 || n > caps[u].spec.max_steps) fail(caps[u].label + " outside step range");
  }
  for (const DeviceSettings& m : prior.moves) {
    if (m.taps.size() != regs.size() || m.caps.size() != caps.size()) fail("history entry size mismatch");
    for (int x : m.taps)
      if (x < 0) fail("negative movement in history");
    for (int x : m.caps)
      if (x < 0) fail("negative movement in history");
  }
}

namespace {

class Builder {
 public:
  int add(const std::string& name, double lo, double hi, bool integer = false) {
    names_.push_back(name);
    lb_.push_back(lo);
    ub_.push_back(hi);
    integer_.push_back(integer);
    return static_cast<int>(names_.size()) - 1;
  }

  MiqpProblem finish() const {
    MiqpProblem p = MiqpProblem::with_vars(static_cast<int>(names_.size()));
    p.lb = Eigen::Map<const Eigen::VectorXd>(lb_.data(), lb_.size());
    p.ub = Eigen::Map<const Eigen::VectorXd>(ub_.data(), ub_.size());
    p.integer = integer_;
    p.names = names_;
    return p;
  }

 private:
  std::vector<std::string> names_;
  std::vector<double> lb_, ub_;
  std::vector<bool> integer_;
};

std::string slot_name(const Network& net, int s) {
  const BusPhase& bp = net.index().at(s);
  return std::to_string(bp.bus_id) + ":" + std::string(1, phase_char(bp.phase));
}

double reserve(const RhoConfig& cfg, const DerUnit& d) { return cfg.eta ? *cfg.eta : d.reserve_factor; }

}  // namespace

RhoProblem build_rho_problem(const Network& net, const RhoConfig& cfg, const ForecastSet& fc,
                             const PriorState& prior) {
  check_config(cfg, net);
  check_prior(prior, net);
  const int n = net.num_slots();
  const int T = fc.horizon();
  if (T < 1 || T > cfg.horizon) throw std::invalid_argument("forecast horizon must lie in [1, config horizon]");
  for (int t = 0; t < T; ++t) {
    if (fc.p_c[t].size() != n || fc.q_c[t].size() != n || fc.p_inv[t].size() != n)
      throw std::invalid_argument("forecast vector size mismatch");
    if ((fc.p_c[t].array() < 0.0).any()) throw std::invalid_argument("forecast p_c must be nonnegative");
  }
  const auto& regs = net.regulators();
  const auto& caps = net.capacitors();
  const auto& ders = net.ders();

  RhoProblem out;
  Builder b;
  out.vars.steps.resize(T);
  for (int t = 0; t < T; ++t) {
    StepVariables& sv = out.vars.steps[t];
    const std::string ts = "[" + std::to_string(t) + "]";
    for (int s = 0; s < n; ++s) sv.P.push_back(b.add("P" + ts + slot_name(net, s), -kInf, kInf));
    for (int s = 0; s < n; ++s) sv.Q.push_back(b.add("Q" + ts + slot_name(net, s), -kInf, kInf));
    for (int s = 0; s < n; ++s) sv.v.push_back(b.add("v" + ts + slot_name(net, s), -kInf, kInf));
    Eigen::VectorXd lim(ders.size());
    for (size_t d = 0; d < ders.size(); ++d) {
      const double p = fc.p_inv[t][ders[d].slot];
      const double s2 = ders[d].s_inv * ders[d].s_inv;
      if (p * p > s2)
        out.warnings.push_back("step " + std::to_string(t) + ": forecast p_inv at " + ders[d].label +
                               " exceeds s_inv; VAR limit clamped to 0");
      lim[d] = reserve(cfg, ders[d]) * std::sqrt(std::max(0.0, s2 - p * p));
      sv.q_inv.push_back(b.add("q_inv" + ts + ders[d].label, -lim[d], lim[d]));
    }
    out.q_inv_limit.push_back(lim);
    for (size_t u = 0; u < regs.size(); ++u) {
      const RegulatorSpec& sp = regs[u].spec;
      const int p0 = prior.devices.taps[u], reach = (t + 1) * sp.per_step_limit;
      sv.tap.push_back(b.add("tap" + ts + regs[u].label, std::max(sp.tap_min, p0 - reach),
                             std::min(sp.tap_max, p0 + reach), true));
      sv.tap_up.push_back(b.add("tap_up" + ts + regs[u].label, 0.0, sp.per_step_limit));
      sv.tap_dn.push_back(b.add("tap_dn" + ts + regs[u].label, 0.0, sp.per_step_limit));
    }
    for (size_t u = 0; u < caps.size(); ++u) {
      const CapacitorBankSpec& sp = caps[u].spec;
      const int p0 = prior.devices.caps[u], reach = (t + 1) * sp.per_step_limit;
      sv.cap.push_back(
          b.add("cap" + ts + caps[u].label, std::max(0, p0 - reach), std::min(sp.max_steps, p0 + reach), true));
      sv.cap_up.push_back(b.add("cap_up" + ts + caps[u].label, 0.0, sp.per_step_limit));
      sv.cap_dn.push_back(b.add("cap_dn" + ts + caps[u].label, 0.0, sp.per_step_limit));
    }
  }
  for (int s = 0; s < n; ++s) out.vars.delta.push_back(b.add("delta" + slot_name(net, s), 0.0, kInf));

  MiqpProblem& p = out.problem;
  p = b.finish();
  const int nv = p.num_vars();
  auto row = [nv] { return Eigen::RowVectorXd::Zero(nv).eval(); };

  std::vector<int> slot_reg(n, -1);
  for (size_t u = 0; u < regs.size(); ++u)
    for (int s : regs[u].slots) slot_reg[s] = static_cast<int>(u);
  const Eigen::VectorXd dtap = net.tap_step_vector();
  const double vnom = net.feeder().vnom;
  const Eigen::VectorXd vlo = cfg.lower_limits(n), vhi = cfg.upper_limits(n);

  std::vector<TransformedImpedance> zt;
  for (int br = 0; br < net.num_branches(); ++br) zt.push_back(transform_impedance(net.branch(br).z, net.branch(br).phases));

  for (int t = 0; t < T; ++t) {
    const StepVariables& sv = out.vars.steps[t];
    // Flow balance at the child end of every branch-phase.
    for (int s = 0; s < n; ++s) {
      Eigen::RowVectorXd rp = row(), rq = row();
      rp[sv.P[s]] = 1.0;
      rq[sv.Q[s]] = 1.0;
      for (int c = 0; c < n; ++c)
        if (net.parent_slot(c) == s) {
          rp[sv.P[c]] -= 1.0;
          rq[sv.Q[c]] -= 1.0;
        }
      for (size_t d = 0; d < ders.size(); ++d)
        if (ders[d].slot == s) rq[sv.q_inv[d]] += 1.0;
      for (size_t u = 0; u < caps.size(); ++u)
        if (caps[u].slot == s) rq[sv.cap[u]] += caps[u].spec.step_size;
      p.add_eq(rp, fc.p_c[t][s] - fc.p_inv[t][s]);
      p.add_eq(rq, fc.q_c[t][s]);
    }
    // Voltage drop with the linearized tap term.
    for (int br = 0; br < net.num_branches(); ++br) {
      const int first = net.first_slot_of_branch(br);
      const int k = net.branch(br).phases.size();
      for (int j = 0; j < k; ++j) {
        const int s = first + j;
        Eigen::RowVectorXd r = row();
        r[sv.v[s]] = 1.0;
        double rhs = 0.0;
        if (const int ps = net.parent_slot(s); ps >= 0)
          r[sv.v[ps]] = -1.0;
        else
          rhs = net.slack_v0(s);
        for (int m = 0; m < k; ++m) {
          r[sv.P[first + m]] += 2.0 * zt[br].r_bar(j, m);
          r[sv.Q[first + m]] += 2.0 * zt[br].x_bar(j, m);
        }
        if (slot_reg[s] >= 0) r[sv.tap[slot_reg[s]]] -= 2.0 * vnom * dtap[s];
        p.add_eq(r, rhs);
      }
    }
    // Voltage window softened by the shared slack.
    for (int s = 0; s < n; ++s) {
      Eigen::RowVectorXd lo = row(), hi = row();
      lo[sv.v[s]] = -1.0;
      lo[out.vars.delta[s]] = -1.0;
      hi[sv.v[s]] = 1.0;
      hi[out.vars.delta[s]] = -1.0;
      p.add_le(lo, -vlo[s]);
      p.add_le(hi, vhi[s]);
    }
    // Movement split into nonnegative up and down parts.
    for (size_t u = 0; u < regs.size(); ++u) {
      Eigen::RowVectorXd r = row();
      r[sv.tap[u]] = 1.0;
      r[sv.tap_up[u]] = -1.0;
      r[sv.tap_dn[u]] = 1.0;
      double rhs = prior.devices.taps[u];
      if (t > 0) {
        r[out.vars.steps[t - 1].tap[u]] = -1.0;
        rhs = 0.0;
      }
      p.add_eq(r, rhs);
    }
    for (size_t u = 0; u < caps.size(); ++u) {
      Eigen::RowVectorXd r = row();
      r[sv.cap[u]] = 1.0;
      r[sv.cap_up[u]] = -1.0;
      r[sv.cap_dn[u]] = 1.0;
      double rhs = prior.devices.caps[u];
      if (t > 0) {
        r[out.vars.steps[t - 1].cap[u]] = -1.0;
        rhs = 0.0;
      }
      p.add_eq(r, rhs);
    }
  }

  // Rolling daily budgets: every window of daily_window steps ending inside the horizon.
  const int W = cfg.daily_window;
  for (int t = 0; t < T; ++t) {
    const int first_in = std::max(0, t - W + 1);
    const int past = std::max(0, W - (t + 1));
    for (size_t u = 0; u < regs.size(); ++u) {
      Eigen::RowVectorXd r = row();
      for (int tau = first_in; tau <= t; ++tau) {
        r[out.vars.steps[tau].tap_up[u]] = 1.0;
        r[out.vars.steps[tau].tap_dn[u]] = 1.0;
      }
      p.add_le(r, regs[u].spec.daily_limit - prior.recent_tap_moves(static_cast<int>(u), past));
    }
    for (size_t u = 0; u < caps.size(); ++u) {
      Eigen::RowVectorXd r = row();
      for (int tau = first_in; tau <= t; ++tau) {
        r[out.vars.steps[tau].cap_up[u]] = 1.0;
        r[out.vars.steps[tau].cap_dn[u]] = 1.0;
      }
      p.add_le(r, caps[u].spec.daily_limit - prior.recent_cap_moves(static_cast<int>(u), past));
    }
  }

  // Objective.
  for (int t = 0; t < T; ++t) {
    const StepVariables& sv = out.vars.steps[t];
    for (int br = 0; br < net.num_branches(); ++br) {
      const int first = net.first_slot_of_branch(br);
      for (int j = 0; j < net.branch(br).phases.size(); ++j) {
        const double w = 2.0 * cfg.c_loss * net.branch(br).z(j, j).real() / vnom;
        p.H(sv.P[first + j], sv.P[first + j]) += w;
        p.H(sv.Q[first + j], sv.Q[first + j]) += w;
      }
    }
    auto switching = [&](int now, int before, double prev, double w) {
      p.H(now, now) += 2.0 * w;
      if (before >= 0) {
        p.H(before, before) += 2.0 * w;
        p.H(now, before) -= 2.0 * w;
        p.H(before, now) -= 2.0 * w;
      } else {
        p.c[now] -= 2.0 * w * prev;
        p.c0 += w * prev * prev;
      }
    };
    for (size_t u = 0; u < regs.size(); ++u)
      switching(sv.tap[u], t > 0 ? out.vars.steps[t - 1].tap[u] : -1, prior.devices.taps[u],
                cfg.c_tap * static_cast<double>(regs[u].slots.size()));
    for (size_t u = 0; u < caps.size(); ++u)
      switching(sv.cap[u], t > 0 ? out.vars.steps[t - 1].cap[u] : -1, prior.devices.caps[u], cfg.c_cap);
  }
  for (int s = 0; s < n; ++s) p.H(out.vars.delta[s], out.vars.delta[s]) += 2.0 * cfg.c_delta;
  return out;
}

namespace {

MiqpProblem fix_devices(const RhoProblem& rho, const std::vector<DeviceSettings>& devices) {
  MiqpProblem p = rho.problem;
  if (devices.size() != rho.vars.steps.size()) throw std::invalid_argument("one device setting per step required");
  for (size_t t = 0; t < devices.size(); ++t) {
    const StepVariables& sv = rho.vars.steps[t];
    if (devices[t].taps.size() != sv.tap.size() || devices[t].caps.size() != sv.cap.size())
      throw std::invalid_argument("device count mismatch");
    for (size_t u = 0; u < sv.tap.size(); ++u) p.lb[sv.tap[u]] = p.ub[sv.tap[u]] = devices[t].taps[u];
    for (size_t u = 0; u < sv.cap.size(); ++u) p.lb[sv.cap[u]] = p.ub[sv.cap[u]] = devices[t].caps[u];
  }
  return p;
}

bool within_bounds(const RhoProblem& rho, const std::vector<DeviceSettings>& devices) {
  for (size_t t = 0; t < devices.size(); ++t) {
    const StepVariables& sv = rho.vars.steps[t];
    for (size_t u = 0; u < sv.tap.size(); ++u)
      if (devices[t].taps[u] < rho.problem.lb[sv.tap[u]] || devices[t].taps[u] > rho.problem.ub[sv.tap[u]])
        return false;
    for (size_t u = 0; u < sv.cap.size(); ++u)
      if (devices[t].caps[u] < rho.problem.lb[sv.cap[u]] || devices[t].caps[u] > rho.problem.ub[sv.cap[u]])
        return false;
  }
  return true;
}

DeviceSchedule extract(const RhoProblem& rho, const Eigen::VectorXd& x) {
  DeviceSchedule out;
  for (const StepVariables& sv : rho.vars.steps) {
    DeviceSettings d;
    for (int j : sv.tap) d.taps.push_back(static_cast<int>(std::lround(x[j])));
    for (int j : sv.cap) d.caps.push_back(static_cast<int>(std::lround(x[j])));
    out.devices.push_back(d);
    Eigen::VectorXd q(sv.q_inv.size()), v(sv.v.size());
    for (size_t k = 0; k < sv.q_inv.size(); ++k) q[k] = x[sv.q_inv[k]];
    for (size_t k = 0; k < sv.v.size(); ++k) v[k] = x[sv.v[k]];
    out.q_inv.push_back(q);
    out.v.push_back(v);
  }
  out.nu = out.v.front();
  out.delta.resize(rho.vars.delta.size());
  for (size_t k = 0; k < rho.vars.delta.size(); ++k) out.delta[k] = x[rho.vars.delta[k]];
  return out;
}

}  // namespace

double fixed_device_objective(const RhoProblem& rho, const std::vector<DeviceSettings>& devices) {
  if (!within_bounds(rho, devices)) return kInf;
  const miqp::QpSolution s = miqp::solve_qp(fix_devices(rho, devices));
  return s.status == miqp::QpStatus::kOptimal ? s.objective : kInf;
}

DeviceSchedule schedule(const Network& net, const RhoConfig& cfg, const ForecastSet& forecasts,
                        const PriorState& prior, ScheduleMethod method) {
  const RhoProblem rho = build_rho_problem(net, cfg, forecasts, prior);
  DeviceSchedule out;
  std::vector<std::string> notes = rho.warnings;
  if (method == ScheduleMethod::kBranchAndBound) {
    const miqp::MiqpSolution sol = miqp::solve_miqp(rho.problem, cfg.miqp);
    if (sol.status == miqp::MiqpStatus::kInfeasible || !sol.has_solution)
      throw SolverError("upper layer: horizon problem infeasible despite voltage slack");
    if (sol.status == miqp::MiqpStatus::kNodeLimit)
      throw SolverError("upper layer: node limit reached after " + std::to_string(sol.nodes) + " nodes (gap " +
                        std::to_string(sol.gap) + ")");
    out = extract(rho, sol.x);
    out.objective = sol.objective;
    out.status = sol.status;
    out.nodes = sol.nodes;
    out.gap = sol.gap;
  } else {
    const miqp::MiqpSolution sol = miqp::round_relaxation(rho.problem);
    if (sol.has_solution) {
      out = extract(rho, sol.x);
      out.objective = sol.objective;
      out.status = sol.status;
      out.nodes = sol.nodes;
    } else {
      notes.push_back("rounded relaxation infeasible; holding prior device positions");
      const std::vector<DeviceSettings> hold(rho.vars.steps.size(), prior.devices);
      const miqp::QpSolution s = miqp::solve_qp(fix_devices(rho, hold));
      if (s.status != miqp::QpStatus::kOptimal)
        throw SolverError("upper layer: holding prior positions is infeasible");
      out = extract(rho, s.x);
      out.objective = s.objective;
      out.status = miqp::MiqpStatus::kOptimal;
    }
  }
  out.warnings = std::move(notes);
  out.next_prior = prior;
  out.next_prior.advance(out.first(), cfg.daily_window);
  return out;
}

}  // namespace vvl
