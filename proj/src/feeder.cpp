#include "vvl/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "vvl/error.hpp"

namespace vvl {

namespace {

using Kind = Violation::Kind;

constexpr int kMaxBusId = 1'000'000;

void add(ValidationReport& r, Kind k, std::string msg) {
  r.violations.push_back({k, std::move(msg)});
}

std::string bus_tag(int id) { return "bus " + std::to_string(id); }
std::string branch_tag(const Branch& br) {
  return "branch " + std::to_string(br.from_bus) + "->" + std::to_string(br.to_bus);
}

void check_absent_zero(ValidationReport& r, const PerPhase& vals, PhaseSet phases,
                       const std::string& what) {
  for (Phase p : kAllPhases)
    if (!phases.contains(p) && vals[index(p)] != 0.0)
      add(r, Kind::kPhase, what + " has a value on absent phase " + phase_char(p));
}

void check_regulator(ValidationReport& r, const RegulatorSpec& s, const std::string& where) {
  if (!(s.tap_min <= 0 && 0 <= s.tap_max))
    add(r, Kind::kDevice, where + ": RegulatorSpec requires tap_min <= 0 <= tap_max");
  if (!(s.tap_step > 0.0) || !std::isfinite(s.tap_step))
    add(r, Kind::kDevice, where + ": RegulatorSpec requires tap_step > 0");
  if (s.per_step_limit < 1)
    add(r, Kind::kDevice, where + ": RegulatorSpec requires per_step_limit >= 1");
  if (s.daily_limit < s.per_step_limit)
    add(r, Kind::kDevice, where + ": RegulatorSpec requires daily_limit >= per_step_limit");
}

void check_capacitor(ValidationReport& r, const CapacitorBankSpec& s, const Bus& bus) {
  const std::string where = bus_tag(bus.id) + " capacitor";
  if (s.phases.empty()) add(r, Kind::kDevice, where + ": empty phase set");
  if (!s.phases.subset_of(bus.phases))
    add(r, Kind::kPhase, where + ": phases " + s.phases.str() + " not within bus phases");
  if (!(s.step_size > 0.0) || !std::isfinite(s.step_size))
    add(r, Kind::kDevice, where + ": CapacitorBankSpec requires step_size > 0");
  if (s.max_steps < 0) add(r, Kind::kDevice, where + ": CapacitorBankSpec requires max_steps >= 0");
  if (s.per_step_limit < 1 || s.daily_limit < 1)
    add(r, Kind::kDevice, where + ": CapacitorBankSpec requires positive movement limits");
}

void check_der(ValidationReport& r, const DerInverterSpec& s, const Bus& bus) {
  const std::string where = bus_tag(bus.id) + " der";
  if (s.phases.empty()) add(r, Kind::kDevice, where + ": empty phase set");
  if (!s.phases.subset_of(bus.phases))
    add(r, Kind::kPhase, where + ": phases " + s.phases.str() + " not within bus phases");
  for (Phase p : s.phases.members()) {
    if (!(s.s_inv[index(p)] > 0.0))
      add(r, Kind::kDevice, where + ": DerInverterSpec requires s_inv > 0 on phase " + phase_char(p));
    if (!(s.p_rated[index(p)] >= 0.0))
      add(r, Kind::kDevice, where + ": p_rated must be nonnegative");
  }
  check_absent_zero(r, s.s_inv, s.phases, where + " s_inv");
  check_absent_zero(r, s.p_rated, s.phases, where + " p_rated");
  if (!(s.reserve_factor > 0.0 && s.reserve_factor < 1.0))
    add(r, Kind::kDevice, where + ": DerInverterSpec requires 0 < reserve_factor < 1");
}

}  // namespace

bool ValidationReport::has(Violation::Kind k) const {
  return std::any_of(violations.begin(), violations.end(),
                     [k](const Violation& v) { return v.kind == k; });
}

std::string ValidationReport::str() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].message;
  }
  return os.str();
}

ValidationReport validate_feeder(const Feeder& f) {
  ValidationReport r;
  std::map<int, const Bus*> by_id;
  for (const Bus& b : f.buses) {
    if (b.id < 0 || b.id > kMaxBusId) {
      add(r, Kind::kStructure, bus_tag(b.id) + ": id out of range");
      continue;
    }
    if (!by_id.emplace(b.id, &b).second)
      add(r, Kind::kStructure, bus_tag(b.id) + ": duplicate id");
    if (b.phases.empty()) add(r, Kind::kPhase, bus_tag(b.id) + ": empty phase set");
    check_absent_zero(r, b.p_load, b.phases, bus_tag(b.id) + " p_load");
    check_absent_zero(r, b.q_load, b.phases, bus_tag(b.id) + " q_load");
    for (double p : b.p_load)
      if (!(p >= 0.0)) add(r, Kind::kValue, bus_tag(b.id) + ": negative or non-finite p_load");
    if (b.capacitor) check_capacitor(r, *b.capacitor, b);
    if (b.der) check_der(r, *b.der, b);
  }
  if (!by_id.count(0)) add(r, Kind::kStructure, "no slack bus (id 0)");
  if (f.buses.size() < 2) add(r, Kind::kStructure, "feeder needs at least two buses");
  if (!(f.vnom > 0.0)) add(r, Kind::kValue, "vnom must be positive");
  if (by_id.count(0)) {
    const Bus& s = *by_id.at(0);
    for (Phase p : s.phases.members())
      if (!(f.v0[index(p)] > 0.0))
        add(r, Kind::kValue, std::string("slack v0 must be positive on phase ") + phase_char(p));
    if (s.capacitor || s.der) add(r, Kind::kDevice, "slack bus cannot host devices");
  }

  std::map<int, int> incoming;
  for (const Branch& br : f.branches) {
    const std::string tag = branch_tag(br);
    auto from = by_id.find(br.from_bus);
    auto to = by_id.find(br.to_bus);
    if (from == by_id.end() || to == by_id.end()) {
      add(r, Kind::kStructure, tag + ": unknown endpoint");
      continue;
    }
    if (br.from_bus == br.to_bus) add(r, Kind::kStructure, tag + ": self loop");
    if (br.to_bus == 0) add(r, Kind::kRadiality, tag + ": slack bus cannot be a child");
    ++incoming[br.to_bus];
    if (br.phases.empty()) add(r, Kind::kPhase, tag + ": empty phase set");
    if (!br.phases.subset_of(from->second->phases) || !br.phases.subset_of(to->second->phases))
      add(r, Kind::kPhase, tag + ": branch phases " + br.phases.str() + " not within endpoint phases");
    if (!to->second->phases.subset_of(br.phases))
      add(r, Kind::kPhase, tag + ": child bus phases " + to->second->phases.str() +
                               " exceed branch phases " + br.phases.str());
    const int n = br.phases.size();
    if (br.z.rows() != n || br.z.cols() != n) {
      add(r, Kind::kImpedance, tag + ": impedance dimensions do not match phase count");
    } else {
      for (int k = 0; k < n; ++k) {
        const auto zk = br.z(k, k);
        if (!(zk.real() > 0.0) || !(zk.imag() > 0.0))
          add(r, Kind::kImpedance, tag + ": impedance diagonal needs positive r and x");
      }
      if (!br.z.allFinite()) add(r, Kind::kImpedance, tag + ": non-finite impedance");
    }
    if (br.regulator) check_regulator(r, *br.regulator, tag + " regulator");
  }

  // Radiality: N branches, one parent per non-slack bus, everything reachable from bus 0.
  const std::size_t n_nonslack = by_id.size() - (by_id.count(0) ? 1 : 0);
  if (f.branches.size() != n_nonslack)
    add(r, Kind::kRadiality, "branch count " + std::to_string(f.branches.size()) +
                                 " differs from non-slack bus count " + std::to_string(n_nonslack));
  for (const auto& [id, bus] : by_id) {
    if (id == 0) continue;
    const int k = incoming.count(id) ? incoming.at(id) : 0;
    if (k != 1)
      add(r, Kind::kRadiality, bus_tag(id) + ": has " + std::to_string(k) + " parent branches");
  }
  if (by_id.count(0)) {
    std::multimap<int, int> children;
    for (const Branch& br : f.branches) children.emplace(br.from_bus, br.to_bus);
    std::set<int> seen{0};
    std::queue<int> q;
    q.push(0);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      auto [lo, hi] = children.equal_range(u);
      for (auto it = lo; it != hi; ++it)
        if (seen.insert(it->second).second) q.push(it->second);
    }
    for (const auto& [id, bus] : by_id)
      if (!seen.count(id)) add(r, Kind::kRadiality, bus_tag(id) + ": not reachable from slack");
  }
  return r;
}

IndexMap::IndexMap(const Feeder& f) {
  std::vector<const Bus*> buses;
  for (const Bus& b : f.buses)
    if (b.id != 0) buses.push_back(&b);
  std::sort(buses.begin(), buses.end(), [](auto* a, auto* b) { return a->id < b->id; });
  for (const Bus* b : buses) {
    bus_ids_.push_back(b->id);
    bus_first_.push_back(static_cast<int>(slots_.size()));
    bus_phases_.push_back(b->phases);
    for (Phase p : b->phases.members()) slots_.push_back({b->id, p});
  }
  branch_child_.resize(f.branches.size());
  branch_of_slot_.assign(slots_.size(), -1);
  for (std::size_t k = 0; k < f.branches.size(); ++k) {
    branch_child_[k] = f.branches[k].to_bus;
    for (Phase p : f.branches[k].phases.members())
      if (auto s = bus_slot(f.branches[k].to_bus, p)) branch_of_slot_[*s] = static_cast<int>(k);
  }
}

std::optional<int> IndexMap::bus_slot(int bus_id, Phase p) const {
  auto it = std::lower_bound(bus_ids_.begin(), bus_ids_.end(), bus_id);
  if (it == bus_ids_.end() || *it != bus_id) return std::nullopt;
  const auto k = static_cast<std::size_t>(it - bus_ids_.begin());
  const int pos = bus_phases_[k].position(p);
  if (pos < 0) return std::nullopt;
  return bus_first_[k] + pos;
}

std::optional<int> IndexMap::branch_slot(int branch, Phase p) const {
  if (branch < 0 || branch >= static_cast<int>(branch_child_.size())) return std::nullopt;
  return bus_slot(branch_child_[branch], p);
}

IndexMap phase_index_map(const Feeder& feeder) { return IndexMap(feeder); }

IncidenceMatrices build_incidence(const Feeder& f) {
  const ValidationReport rep = validate_feeder(f);
  if (rep.has(Violation::Kind::kRadiality) || rep.has(Violation::Kind::kStructure))
    throw ValidationError("incidence requires a radial feeder: " + rep.str());

  const IndexMap idx(f);
  const Bus* slack = nullptr;
  for (const Bus& b : f.buses)
    if (b.id == 0) slack = &b;
  std::vector<int> ids;
  for (const Bus& b : f.buses)
    if (b.id != 0) ids.push_back(b.id);
  std::sort(ids.begin(), ids.end());
  auto row_of_bus = [&](int id) -> int {
    if (id == 0) return 0;
    return 1 + static_cast<int>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };
  auto col_of_branch = [&](const Branch& br) { return row_of_bus(br.to_bus) - 1; };

  const int n_bus = static_cast<int>(ids.size());
  const int n = idx.size();
  const int n0 = slack->phases.size();
  IncidenceMatrices m;
  m.g_bar = Eigen::MatrixXd::Zero(n_bus + 1, n_bus);
  m.a_bar = Eigen::MatrixXd::Zero(n0 + n, n);
  for (const Branch& br : f.branches) {
    const int col = col_of_branch(br);
    m.g_bar(row_of_bus(br.from_bus), col) = 1.0;
    m.g_bar(row_of_bus(br.to_bus), col) = -1.0;
    for (Phase p : br.phases.members()) {
      const int c = *idx.bus_slot(br.to_bus, p);
      const int from_row = br.from_bus == 0 ? slack->phases.position(p)
                                            : n0 + *idx.bus_slot(br.from_bus, p);
      m.a_bar(from_row, c) = 1.0;
      m.a_bar(n0 + c, c) = -1.0;
    }
  }
  m.a0 = m.a_bar.topRows(n0);
  m.a = m.a_bar.bottomRows(n);
  return m;
}

const Bus& Network::bus(int id) const {
  if (id < 0 || id >= static_cast<int>(bus_pos_.size()) || bus_pos_[id] < 0)
    throw std::out_of_range("unknown bus " + std::to_string(id));
  return feeder_.buses[bus_pos_[id]];
}

Network::Network(Feeder feeder) : feeder_(std::move(feeder)) {
  const ValidationReport rep = validate_feeder(feeder_);
  if (!rep.ok()) throw ValidationError("invalid feeder: " + rep.str());
  index_ = IndexMap(feeder_);
  incidence_ = build_incidence(feeder_);

  int max_id = 0;
  for (const Bus& b : feeder_.buses) max_id = std::max(max_id, b.id);
  bus_pos_.assign(max_id + 1, -1);
  for (std::size_t k = 0; k < feeder_.buses.size(); ++k) bus_pos_[feeder_.buses[k].id] = static_cast<int>(k);

  // Parent-before-child branch order by breadth-first search from the slack.
  std::multimap<int, int> out;
  for (std::size_t k = 0; k < feeder_.branches.size(); ++k)
    out.emplace(feeder_.branches[k].from_bus, static_cast<int>(k));
  std::queue<int> q;
  q.push(0);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    std::vector<int> kids;
    auto [lo, hi] = out.equal_range(u);
    for (auto it = lo; it != hi; ++it) kids.push_back(it->second);
    std::sort(kids.begin(), kids.end(), [&](int a, int b) {
      return feeder_.branches[a].to_bus < feeder_.branches[b].to_bus;
    });
    for (int k : kids) {
      topo_branches_.push_back(k);
      q.push(feeder_.branches[k].to_bus);
    }
  }

  const int n = index_.size();
  parent_slot_.assign(n, -1);
  branch_first_slot_.assign(feeder_.branches.size(), -1);
  for (std::size_t k = 0; k < feeder_.branches.size(); ++k) {
    const Branch& br = feeder_.branches[k];
    const auto members = br.phases.members();
    branch_first_slot_[k] = *index_.bus_slot(br.to_bus, members.front());
    for (Phase p : members) {
      const int s = *index_.bus_slot(br.to_bus, p);
      if (br.from_bus != 0) parent_slot_[s] = *index_.bus_slot(br.from_bus, p);
    }
  }

  // Devices in slot order: regulators by branch child, capacitors and DERs by bus then phase.
  std::vector<int> by_child(feeder_.branches.size());
  for (std::size_t k = 0; k < by_child.size(); ++k) by_child[k] = static_cast<int>(k);
  std::sort(by_child.begin(), by_child.end(),
            [&](int a, int b) { return branch_first_slot_[a] < branch_first_slot_[b]; });
  for (int k : by_child) {
    const Branch& br = feeder_.branches[k];
    if (!br.regulator) continue;
    const std::string base = "reg:" + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus);
    if (br.regulator->ganged) {
      RegulatorUnit u{k, {}, *br.regulator, base + ":" + br.phases.str()};
      for (Phase p : br.phases.members()) u.slots.push_back(*index_.branch_slot(k, p));
      regulators_.push_back(std::move(u));
    } else {
      for (Phase p : br.phases.members())
        regulators_.push_back({k, {*index_.branch_slot(k, p)}, *br.regulator,
                               base + ":" + std::string(1, phase_char(p))});
    }
  }
  for (const BusPhase& bp : index_.slots()) {
    const Bus& b = bus(bp.bus_id);
    const int s = *index_.bus_slot(bp.bus_id, bp.phase);
    const std::string ph(1, phase_char(bp.phase));
    if (b.capacitor && b.capacitor->phases.contains(bp.phase))
      capacitors_.push_back({b.id, bp.phase, s, *b.capacitor, "cap:" + std::to_string(b.id) + ":" + ph});
    if (b.der && b.der->phases.contains(bp.phase))
      ders_.push_back({b.id, bp.phase, s, b.der->s_inv[vvl::index(bp.phase)], b.der->p_rated[vvl::index(bp.phase)],
                       b.der->reserve_factor, "der:" + std::to_string(b.id) + ":" + ph});
  }
}

DeviceSettings Network::zero_settings() const {
  return {std::vector<int>(regulators_.size(), 0), std::vector<int>(capacitors_.size(), 0)};
}

std::vector<int> Network::tap_vector(const DeviceSettings& s) const {
  if (s.taps.size() != regulators_.size())
    throw std::invalid_argument("tap settings size mismatch");
  std::vector<int> n(num_slots(), 0);
  for (std::size_t u = 0; u < regulators_.size(); ++u)
    for (int slot : regulators_[u].slots) n[slot] = s.taps[u];
  return n;
}

Eigen::VectorXd Network::tap_step_vector() const {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(num_slots());
  for (const RegulatorUnit& u : regulators_)
    for (int slot : u.slots) d[slot] = u.spec.tap_step;
  return d;
}

Eigen::VectorXd Network::capacitor_injection(const DeviceSettings& s) const {
  if (s.caps.size() != capacitors_.size())
    throw std::invalid_argument("capacitor settings size mismatch");
  Eigen::VectorXd q = Eigen::VectorXd::Zero(num_slots());
  for (std::size_t u = 0; u < capacitors_.size(); ++u)
    q[capacitors_[u].slot] += s.caps[u] * capacitors_[u].spec.step_size;
  return q;
}

}  // namespace vvl
