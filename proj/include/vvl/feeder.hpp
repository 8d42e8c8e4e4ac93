#pragma once

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vvl/phase.hpp"

namespace vvl {

using PerPhase = std::array<double, 3>;  // indexed by Phase, entries for absent phases are 0

struct RegulatorSpec {
  int tap_min = -16;
  int tap_max = 16;
  double tap_step = 0.00625;  // per-unit ratio change per tap
  int per_step_limit = 2;     // max |dn| per scheduling step
  int daily_limit = 16;       // max total movement in any 24-step window
  bool ganged = false;        // one compensator circuit drives every phase

  friend bool operator==(const RegulatorSpec&, const RegulatorSpec&) = default;
};

struct CapacitorBankSpec {
  PhaseSet phases;
  double step_size = 0.0;  // per-unit VAR per step, per phase
  int max_steps = 0;
  int per_step_limit = 1;
  int daily_limit = 4;

  friend bool operator==(const CapacitorBankSpec&, const CapacitorBankSpec&) = default;
};

struct DerInverterSpec {
  PhaseSet phases;
  PerPhase s_inv{};    // apparent-power capacity per phase
  PerPhase p_rated{};  // active output at a profile value of 1.0
  double reserve_factor = 0.8;

  friend bool operator==(const DerInverterSpec&, const DerInverterSpec&) = default;
};

struct Bus {
  int id = 0;
  PhaseSet phases;
  PerPhase p_load{};  // consumption at a profile value of 1.0
  PerPhase q_load{};
  std::optional<CapacitorBankSpec> capacitor;
  std::optional<DerInverterSpec> der;
  std::string load_profile_ref;
  std::string der_profile_ref;

  friend bool operator==(const Bus&, const Bus&) = default;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  PhaseSet phases;
  Eigen::MatrixXcd z;  // |phases| x |phases|, per unit, rows/cols in phase order
  std::optional<RegulatorSpec> regulator;

  friend bool operator==(const Branch& a, const Branch& b) {
    return a.from_bus == b.from_bus && a.to_bus == b.to_bus && a.phases == b.phases &&
           a.z.rows() == b.z.rows() && a.z.cols() == b.z.cols() && a.z == b.z &&
           a.regulator == b.regulator;
  }
};

// Bus 0 is the slack. Every other bus hangs off exactly one branch.
struct Feeder {
  std::string name;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  PerPhase v0{1.0, 1.0, 1.0};  // slack squared voltage magnitude per phase
  double vnom = 1.0;
  double power_base_kva = 1000.0;

  friend bool operator==(const Feeder&, const Feeder&) = default;
};

struct Violation {
  enum class Kind { kStructure, kRadiality, kPhase, kImpedance, kDevice, kValue };
  Kind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(Violation::Kind k) const;
  std::string str() const;
};

ValidationReport validate_feeder(const Feeder& feeder);

// Flat vector layout for every per-bus-phase and per-branch-phase quantity.
struct BusPhase {
  int bus_id;
  Phase phase;
  friend bool operator==(const BusPhase&, const BusPhase&) = default;
};

class IndexMap {
 public:
  IndexMap() = default;
  explicit IndexMap(const Feeder& feeder);

  int size() const { return static_cast<int>(slots_.size()); }
  const BusPhase& at(int slot) const { return slots_.at(slot); }
  std::optional<int> bus_slot(int bus_id, Phase p) const;
  // Branch-phase slots coincide with the bus-phase slots of the branch's child bus.
  std::optional<int> branch_slot(int branch, Phase p) const;
  int branch_of_slot(int slot) const { return branch_of_slot_.at(slot); }
  const std::vector<BusPhase>& slots() const { return slots_; }

 private:
  std::vector<BusPhase> slots_;
  std::vector<int> branch_of_slot_;
  std::vector<int> branch_child_;  // by branch index
  std::vector<int> bus_ids_;       // sorted non-slack ids
  std::vector<int> bus_first_;     // first slot per entry of bus_ids_
  std::vector<PhaseSet> bus_phases_;
};

IndexMap phase_index_map(const Feeder& feeder);

struct IncidenceMatrices {
  Eigen::MatrixXd g_bar;  // (N+1) x N single-phase incidence, row 0 = slack
  Eigen::MatrixXd a_bar;  // (|slack phases| + n) x n extended incidence
  Eigen::MatrixXd a0;     // slack rows of a_bar
  Eigen::MatrixXd a;      // remaining n x n block
};

// +1 at the from bus, -1 at the to bus; columns ordered by child bus id.
IncidenceMatrices build_incidence(const Feeder& feeder);

struct RegulatorUnit {
  int branch;
  std::vector<int> slots;  // branch-phase slots driven by this integer
  RegulatorSpec spec;
  std::string label;
};

struct CapacitorUnit {
  int bus_id;
  Phase phase;
  int slot;
  CapacitorBankSpec spec;
  std::string label;
};

struct DerUnit {
  int bus_id;
  Phase phase;
  int slot;
  double s_inv;
  double p_rated;
  double reserve_factor;
  std::string label;
};

// Integer device positions: one entry per regulator unit and per capacitor unit.
struct DeviceSettings {
  std::vector<int> taps;
  std::vector<int> caps;
  friend bool operator==(const DeviceSettings&, const DeviceSettings&) = default;
};

// Validated feeder plus every derived structure the solvers need. Immutable.
class Network {
 public:
  explicit Network(Feeder feeder);  // throws ValidationError

  const Feeder& feeder() const { return feeder_; }
  const IndexMap& index() const { return index_; }
  const IncidenceMatrices& incidence() const { return incidence_; }
  int num_slots() const { return index_.size(); }
  const Bus& slack() const { return feeder_.buses[bus_pos_.at(0)]; }
  const Bus& bus(int id) const;
  const Branch& branch(int b) const { return feeder_.branches.at(b); }
  int num_branches() const { return static_cast<int>(feeder_.branches.size()); }

  // Branch indices ordered parent-before-child.
  const std::vector<int>& topo_branches() const { return topo_branches_; }
  // Slot of the same phase on the branch's from bus, or -1 if that bus is the slack.
  int parent_slot(int slot) const { return parent_slot_.at(slot); }
  int first_slot_of_branch(int b) const { return branch_first_slot_.at(b); }
  double slack_v0(int slot) const { return feeder_.v0[vvl::index(index_.at(slot).phase)]; }

  const std::vector<RegulatorUnit>& regulators() const { return regulators_; }
  const std::vector<CapacitorUnit>& capacitors() const { return capacitors_; }
  const std::vector<DerUnit>& ders() const { return ders_; }

  int num_integer_devices() const {
    return static_cast<int>(regulators_.size() + capacitors_.size());
  }

  DeviceSettings zero_settings() const;
  // Per branch-phase slot tap positions.
  std::vector<int> tap_vector(const DeviceSettings& s) const;
  // Per branch-phase slot tap step (0 where no regulator is present).
  Eigen::VectorXd tap_step_vector() const;
  // Per bus-phase capacitor injection.
  Eigen::VectorXd capacitor_injection(const DeviceSettings& s) const;

 private:
  Feeder feeder_;
  IndexMap index_;
  IncidenceMatrices incidence_;
  std::vector<int> bus_pos_;  // bus id -> position in feeder_.buses (-1 if unused id)
  std::vector<int> topo_branches_;
  std::vector<int> parent_slot_;
  std::vector<int> branch_first_slot_;
  std::vector<RegulatorUnit> regulators_;
  std::vector<CapacitorUnit> capacitors_;
  std::vector<DerUnit> ders_;
};

}  // namespace vvl
