#include "vvl/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vvl/error.hpp"

namespace vvl {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
  throw ValidationError(where + ": " + msg);
}

std::string location_of(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + " col " + std::to_string(col);
}

json parse_json(std::string_view text, const std::string& source) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) fail(source, "parse error: empty document");
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(source + " " + location_of(text, e.byte), std::string("parse error: ") + e.what());
  }
}

// Minimal typed access into a JSON object with key-path diagnostics.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  void allow_only(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) fail(path_ + "." + k, "unknown key");
  }
  bool has(const char* key) const { return j_.contains(key); }
  std::string sub(const char* key) const { return path_ + "." + key; }
  const json& raw(const char* key) const {
    if (!j_.contains(key)) fail(sub(key), "missing required key");
    return j_.at(key);
  }

  double num(const char* key) const {
    const json& v = raw(key);
    if (!v.is_number()) fail(sub(key), "expected a number");
    return v.get<double>();
  }
  double num_or(const char* key, double dflt) const { return has(key) ? num(key) : dflt; }
  int integer(const char* key) const {
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(sub(key), "expected an integer");
    return v.get<int>();
  }
  int int_or(const char* key, int dflt) const { return has(key) ? integer(key) : dflt; }
  bool boolean_or(const char* key, bool dflt) const {
    if (!has(key)) return dflt;
    const json& v = raw(key);
    if (!v.is_boolean()) fail(sub(key), "expected true or false");
    return v.get<bool>();
  }
  std::string str(const char* key) const {
    const json& v = raw(key);
    if (!v.is_string()) fail(sub(key), "expected a string");
    return v.get<std::string>();
  }
  std::string str_or(const char* key, const std::string& dflt) const { return has(key) ? str(key) : dflt; }
  PhaseSet phases(const char* key) const {
    const auto ps = PhaseSet::parse(str(key));
    if (!ps || ps->empty()) fail(sub(key), "expected a nonempty phase string such as \"abc\"");
    return *ps;
  }
  PerPhase per_phase_or(const char* key, PerPhase dflt) const {
    if (!has(key)) return dflt;
    const Obj o(raw(key), sub(key));
    o.allow_only({"a", "b", "c"});
    PerPhase out{0.0, 0.0, 0.0};
    for (Phase p : kAllPhases) {
      const char name[2] = {phase_char(p), '\0'};
      out[index(p)] = o.num_or(name, 0.0);
    }
    return out;
  }
  const json& array(const char* key) const {
    const json& v = raw(key);
    if (!v.is_array()) fail(sub(key), "expected an array");
    return v;
  }
  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
};

json per_phase_json(const PerPhase& v, PhaseSet phases) {
  json o = json::object();
  for (Phase p : phases.members()) o[std::string(1, phase_char(p))] = v[index(p)];
  return o;
}

Eigen::MatrixXcd parse_impedance(const json& j, const std::string& path, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    fail(path, "expected " + std::to_string(n) + " rows of [r, x] pairs");
  Eigen::MatrixXcd z(n, n);
  for (int r = 0; r < n; ++r) {
    const json& row = j[r];
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!row.is_array() || static_cast<int>(row.size()) != n)
      fail(rp, "expected " + std::to_string(n) + " [r, x] pairs");
    for (int c = 0; c < n; ++c) {
      const json& e = row[c];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
        fail(rp + "[" + std::to_string(c) + "]", "expected [r, x]");
      z(r, c) = {e[0].get<double>(), e[1].get<double>()};
    }
  }
  return z;
}

Bus* find_bus(Feeder& f, int id) {
  for (Bus& b : f.buses)
    if (b.id == id) return &b;
  return nullptr;
}

}  // namespace

Feeder parse_feeder_text(std::string_view text, const std::string& source) {
  const json doc = parse_json(text, source);
  const Obj top(doc, source);
  top.allow_only({"name", "vnom", "v0", "power_base_kva", "buses", "branches", "devices"});
  Feeder f;
  f.name = top.str_or("name", "");
  f.vnom = top.num_or("vnom", 1.0);
  f.power_base_kva = top.num_or("power_base_kva", 1000.0);

  const json& buses = top.array("buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const Obj b(buses[i], top.sub("buses") + "[" + std::to_string(i) + "]");
    b.allow_only({"id", "phases", "p_load", "q_load", "load_profile"});
    Bus bus;
    bus.id = b.integer("id");
    bus.phases = b.phases("phases");
    bus.p_load = b.per_phase_or("p_load", {});
    bus.q_load = b.per_phase_or("q_load", {});
    bus.load_profile_ref = b.str_or("load_profile", "");
    f.buses.push_back(std::move(bus));
  }
  std::sort(f.buses.begin(), f.buses.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });

  PhaseSet slack_phases = PhaseSet::abc();
  if (const Bus* s = find_bus(f, 0)) slack_phases = s->phases;
  f.v0 = top.per_phase_or("v0", {0.0, 0.0, 0.0});
  if (!top.has("v0"))
    for (Phase p : slack_phases.members()) f.v0[index(p)] = 1.0;

  const json& branches = top.array("branches");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const std::string path = top.sub("branches") + "[" + std::to_string(i) + "]";
    const Obj b(branches[i], path);
    b.allow_only({"from", "to", "phases", "z"});
    Branch br;
    br.from_bus = b.integer("from");
    br.to_bus = b.integer("to");
    br.phases = b.phases("phases");
    br.z = parse_impedance(b.raw("z"), b.sub("z"), br.phases.size());
    f.branches.push_back(std::move(br));
  }

  if (top.has("devices")) {
    const json& devices = top.array("devices");
    for (std::size_t i = 0; i < devices.size(); ++i) {
      const std::string path = top.sub("devices") + "[" + std::to_string(i) + "]";
      const Obj d(devices[i], path);
      const std::string type = d.str("type");
      if (type == "regulator") {
        d.allow_only({"type", "from", "to", "tap_min", "tap_max", "tap_step", "per_step_limit", "daily_limit",
                      "ganged"});
        const int from = d.integer("from"), to = d.integer("to");
        auto it = std::find_if(f.branches.begin(), f.branches.end(),
                               [&](const Branch& br) { return br.from_bus == from && br.to_bus == to; });
        if (it == f.branches.end()) fail(path, "no branch " + std::to_string(from) + "->" + std::to_string(to));
        if (it->regulator) fail(path, "branch already has a regulator");
        RegulatorSpec s;
        s.tap_min = d.int_or("tap_min", s.tap_min);
        s.tap_max = d.int_or("tap_max", s.tap_max);
        s.tap_step = d.num_or("tap_step", s.tap_step);
        s.per_step_limit = d.int_or("per_step_limit", s.per_step_limit);
        s.daily_limit = d.int_or("daily_limit", s.daily_limit);
        s.ganged = d.boolean_or("ganged", s.ganged);
        it->regulator = s;
      } else if (type == "capacitor") {
        d.allow_only({"type", "bus", "phases", "step_size", "max_steps", "per_step_limit", "daily_limit"});
        Bus* bus = find_bus(f, d.integer("bus"));
        if (!bus) fail(d.sub("bus"), "unknown bus");
        if (bus->capacitor) fail(path, "bus already has a capacitor bank");
        CapacitorBankSpec s;
        s.phases = d.phases("phases");
        s.step_size = d.num("step_size");
        s.max_steps = d.integer("max_steps");
        s.per_step_limit = d.int_or("per_step_limit", s.per_step_limit);
        s.daily_limit = d.int_or("daily_limit", s.daily_limit);
        bus->capacitor = s;
      } else if (type == "der") {
        d.allow_only({"type", "bus", "phases", "s_inv", "p_rated", "reserve_factor", "profile"});
        Bus* bus = find_bus(f, d.integer("bus"));
        if (!bus) fail(d.sub("bus"), "unknown bus");
        if (bus->der) fail(path, "bus already has a DER inverter");
        DerInverterSpec s;
        s.phases = d.phases("phases");
        if (!d.has("s_inv")) fail(d.sub("s_inv"), "missing required key");
        s.s_inv = d.per_phase_or("s_inv", {});
        s.p_rated = d.per_phase_or("p_rated", {});
        s.reserve_factor = d.num_or("reserve_factor", s.reserve_factor);
        bus->der = s;
        bus->der_profile_ref = d.str_or("profile", "");
      } else {
        fail(d.sub("type"), "unknown device type \"" + type + "\"");
      }
    }
  }

  const ValidationReport rep = validate_feeder(f);
  if (!rep.ok()) throw ValidationError(source + ": " + rep.str());
  return f;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

Feeder parse_feeder_file(const fs::path& path) { return parse_feeder_text(read_text_file(path), path.string()); }

std::string write_feeder_text(const Feeder& f) {
  json doc;
  doc["name"] = f.name;
  doc["vnom"] = f.vnom;
  doc["power_base_kva"] = f.power_base_kva;
  PhaseSet slack_phases = PhaseSet::abc();
  for (const Bus& b : f.buses)
    if (b.id == 0) slack_phases = b.phases;
  doc["v0"] = per_phase_json(f.v0, slack_phases);
  json buses = json::array(), branches = json::array(), devices = json::array();
  for (const Bus& b : f.buses) {
    json jb;
    jb["id"] = b.id;
    jb["phases"] = b.phases.str();
    if (b.id != 0) {
      jb["p_load"] = per_phase_json(b.p_load, b.phases);
      jb["q_load"] = per_phase_json(b.q_load, b.phases);
    }
    if (!b.load_profile_ref.empty()) jb["load_profile"] = b.load_profile_ref;
    buses.push_back(std::move(jb));
  }
  for (const Branch& br : f.branches) {
    json jz = json::array();
    for (Eigen::Index r = 0; r < br.z.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < br.z.cols(); ++c) row.push_back({br.z(r, c).real(), br.z(r, c).imag()});
      jz.push_back(std::move(row));
    }
    branches.push_back({{"from", br.from_bus}, {"to", br.to_bus}, {"phases", br.phases.str()}, {"z", jz}});
    if (br.regulator) {
      const RegulatorSpec& s = *br.regulator;
      devices.push_back({{"type", "regulator"}, {"from", br.from_bus}, {"to", br.to_bus},
                         {"tap_min", s.tap_min}, {"tap_max", s.tap_max}, {"tap_step", s.tap_step},
                         {"per_step_limit", s.per_step_limit}, {"daily_limit", s.daily_limit},
                         {"ganged", s.ganged}});
    }
  }
  for (const Bus& b : f.buses) {
    if (b.capacitor) {
      const CapacitorBankSpec& s = *b.capacitor;
      devices.push_back({{"type", "capacitor"}, {"bus", b.id}, {"phases", s.phases.str()},
                         {"step_size", s.step_size}, {"max_steps", s.max_steps},
                         {"per_step_limit", s.per_step_limit}, {"daily_limit", s.daily_limit}});
    }
    if (b.der) {
      const DerInverterSpec& s = *b.der;
      json d = {{"type", "der"},
                {"bus", b.id},
                {"phases", s.phases.str()},
                {"s_inv", per_phase_json(s.s_inv, s.phases)},
                {"p_rated", per_phase_json(s.p_rated, s.phases)},
                {"reserve_factor", s.reserve_factor}};
      if (!b.der_profile_ref.empty()) d["profile"] = b.der_profile_ref;
      devices.push_back(std::move(d));
    }
  }
  doc["buses"] = std::move(buses);
  doc["branches"] = std::move(branches);
  doc["devices"] = std::move(devices);
  return doc.dump(2) + "\n";
}

double ProfileTable::at_time(double t) const {
  if (values.empty() || !(t >= 0.0)) throw ValidationError("profile " + name + ": time out of range");
  const auto k = static_cast<std::size_t>(std::floor(t / step_s + 1e-9));
  if (k >= values.size()) throw ValidationError("profile " + name + ": time beyond coverage");
  return values[k];
}

ProfileTable parse_profile_csv(std::string_view text, const std::string& name) {
  ProfileTable out;
  out.name = name;
  std::vector<double> times;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::size_t comma = line.find(',');
    const std::string where = "profile " + name + " line " + std::to_string(line_no);
    if (comma == std::string::npos) throw ValidationError(where + ": expected time_s,value");
    const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
    char* e1 = nullptr;
    char* e2 = nullptr;
    const double t = std::strtod(a.c_str(), &e1);
    const double v = std::strtod(b.c_str(), &e2);
    const bool ok1 = e1 != a.c_str() && std::string(e1).find_first_not_of(" \t") == std::string::npos;
    const bool ok2 = e2 != b.c_str() && std::string(e2).find_first_not_of(" \t") == std::string::npos;
    if (!ok1 || !ok2) {
      if (times.empty() && out.values.empty() && line_no == 1) continue;  // header
      throw ValidationError(where + ": malformed number");
    }
    if (!std::isfinite(t) || !std::isfinite(v)) throw ValidationError(where + ": non-finite value");
    times.push_back(t);
    out.values.push_back(v);
  }
  if (times.size() < 2) throw ValidationError("profile " + name + ": need at least two samples");
  if (times[0] != 0.0) throw ValidationError("profile " + name + ": first timestamp must be 0");
  out.step_s = times[1] - times[0];
  if (!(out.step_s > 0.0)) throw ValidationError("profile " + name + ": timestamps must increase strictly");
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double dt = times[i] - times[i - 1];
    if (!(dt > 0.0)) throw ValidationError("profile " + name + ": timestamps must increase strictly");
    if (std::abs(dt - out.step_s) > 1e-6 * out.step_s)
      throw ValidationError("profile " + name + ": non-uniform timestamps at sample " + std::to_string(i));
  }
  return out;
}

ProfileTable resample_zoh(const ProfileTable& src, double step_s) {
  const double ratio = src.step_s / step_s;
  const long k = std::lround(ratio);
  if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-9 * ratio)
    throw ValidationError("profile " + src.name + ": step " + fmt_num(src.step_s) +
                          " s is not a multiple of " + fmt_num(step_s) + " s");
  ProfileTable out{src.name, step_s, {}};
  out.values.reserve(src.values.size() * static_cast<std::size_t>(k));
  for (double v : src.values) out.values.insert(out.values.end(), static_cast<std::size_t>(k), v);
  return out;
}

const ProfileTable& Profiles::at(const std::string& ref) const {
  const auto it = tables.find(ref);
  if (it == tables.end()) throw ValidationError("missing profile \"" + ref + "\"");
  return it->second;
}

int Profiles::num_samples() const {
  if (tables.empty()) return 0;
  std::size_t n = tables.begin()->second.values.size();
  for (const auto& [k, t] : tables) n = std::min(n, t.values.size());
  return static_cast<int>(n);
}

Profiles parse_profiles(const fs::path& dir, double step_s) {
  if (!fs::is_directory(dir)) throw ValidationError(dir.string() + ": not a profile directory");
  Profiles out;
  out.step_s = step_s;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& p : files) {
    const std::string ref = p.stem().string();
    out.tables[ref] = resample_zoh(parse_profile_csv(read_text_file(p), ref), step_s);
  }
  return out;
}

void check_profile_refs(const Network& net, const Profiles& profiles) {
  for (const Bus& b : net.feeder().buses)
    for (const std::string* ref : {&b.load_profile_ref, &b.der_profile_ref})
      if (!ref->empty() && !profiles.contains(*ref))
        throw ValidationError("bus " + std::to_string(b.id) + " references missing profile \"" + *ref + "\"");
}

Injections injections_at(const Network& net, const ProfileValues& values) {
  const int n = net.num_slots();
  Injections inj = Injections::zero(n);
  auto value = [&](const std::string& ref) {
    if (ref.empty()) return 1.0;
    const auto it = values.find(ref);
    if (it == values.end()) throw ValidationError("missing profile \"" + ref + "\"");
    return it->second;
  };
  for (int s = 0; s < n; ++s) {
    const BusPhase& bp = net.index().at(s);
    const Bus& b = net.bus(bp.bus_id);
    const double lv = value(b.load_profile_ref);
    inj.p_c[s] = b.p_load[index(bp.phase)] * lv;
    inj.q_c[s] = b.q_load[index(bp.phase)] * lv;
    if (b.der && b.der->phases.contains(bp.phase))
      inj.p_inv[s] = b.der->p_rated[index(bp.phase)] * value(b.der_profile_ref);
  }
  return inj;
}

ProfileValues profile_values_at(const Profiles& profiles, int sample) {
  ProfileValues out;
  for (const auto& [ref, t] : profiles.tables) {
    if (sample < 0 || sample >= static_cast<int>(t.values.size()))
      throw ValidationError("profile " + ref + ": sample " + std::to_string(sample) + " beyond coverage");
    out[ref] = t.values[static_cast<std::size_t>(sample)];
  }
  return out;
}

Snapshot parse_snapshot_text(std::string_view text, const std::string& source) {
  const json doc = parse_json(text, source);
  const Obj top(doc, source);
  top.allow_only({"profile_values", "devices", "q_inv"});
  Snapshot s;
  auto read_map = [&](const char* key, auto& out, bool integral) {
    if (!top.has(key)) return;
    const json& m = top.raw(key);
    if (!m.is_object()) fail(top.sub(key), "expected an object");
    for (const auto& [k, v] : m.items()) {
      if (integral ? !v.is_number_integer() : !v.is_number())
        fail(top.sub(key) + "." + k, integral ? "expected an integer" : "expected a number");
      out[k] = v.template get<typename std::decay_t<decltype(out)>::mapped_type>();
    }
  };
  read_map("profile_values", s.profile_values, false);
  read_map("devices", s.devices, true);
  read_map("q_inv", s.q_inv, false);
  return s;
}

Snapshot parse_snapshot_file(const fs::path& path) { return parse_snapshot_text(read_text_file(path), path.string()); }

DeviceSettings snapshot_devices(const Network& net, const Snapshot& s) {
  DeviceSettings d = net.zero_settings();
  std::set<std::string> used;
  for (std::size_t i = 0; i < net.regulators().size(); ++i)
    if (auto it = s.devices.find(net.regulators()[i].label); it != s.devices.end()) {
      d.taps[i] = it->second;
      used.insert(it->first);
    }
  for (std::size_t i = 0; i < net.capacitors().size(); ++i)
    if (auto it = s.devices.find(net.capacitors()[i].label); it != s.devices.end()) {
      d.caps[i] = it->second;
      used.insert(it->first);
    }
  for (const auto& [k, v] : s.devices)
    if (!used.count(k)) throw ValidationError("snapshot: unknown device \"" + k + "\"");
  for (std::size_t i = 0; i < net.regulators().size(); ++i) {
    const auto& u = net.regulators()[i];
    if (d.taps[i] < u.spec.tap_min || d.taps[i] > u.spec.tap_max)
      throw ValidationError("snapshot: " + u.label + " tap out of range");
  }
  for (std::size_t i = 0; i < net.capacitors().size(); ++i) {
    const auto& u = net.capacitors()[i];
    if (d.caps[i] < 0 || d.caps[i] > u.spec.max_steps)
      throw ValidationError("snapshot: " + u.label + " steps out of range");
  }
  return d;
}

Injections snapshot_injections(const Network& net, const Snapshot& s) {
  Injections inj = injections_at(net, s.profile_values);
  inj.q_cap = net.capacitor_injection(snapshot_devices(net, s));
  std::set<std::string> used;
  for (const DerUnit& u : net.ders())
    if (auto it = s.q_inv.find(u.label); it != s.q_inv.end()) {
      inj.q_inv[u.slot] = it->second;
      used.insert(it->first);
    }
  for (const auto& [k, v] : s.q_inv)
    if (!used.count(k)) throw ValidationError("snapshot: unknown inverter \"" + k + "\"");
  return inj;
}

std::string fmt_num(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace vvl
