#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vvl/feeder.hpp"
#include "vvl/linear_flow.hpp"

namespace vvl {

// Feeder description files (JSON). Top-level keys: name, vnom, v0, power_base_kva,
// buses[], branches[], devices[]; see README for the full schema.
// Errors are ValidationError with a "line L col C" or key-path location.
Feeder parse_feeder_text(std::string_view text, const std::string& source = "<text>");
Feeder parse_feeder_file(const std::filesystem::path& path);
std::string write_feeder_text(const Feeder& feeder);

// A sampled series on a uniform grid starting at t = 0.
struct ProfileTable {
  std::string name;
  double step_s = 0.0;
  std::vector<double> values;

  double duration_s() const { return step_s * static_cast<double>(values.size()); }
  // Zero-order hold lookup; t must lie in [0, duration).
  double at_time(double t) const;
};

// Parses "time_s,value" CSV text; timestamps must start at 0, increase strictly and be uniform.
ProfileTable parse_profile_csv(std::string_view text, const std::string& name);
// Zero-order hold onto a finer uniform grid; the source step must be a multiple of step_s.
ProfileTable resample_zoh(const ProfileTable& src, double step_s);

class Profiles {
 public:
  std::map<std::string, ProfileTable> tables;
  double step_s = 5.0;

  const ProfileTable& at(const std::string& ref) const;
  bool contains(const std::string& ref) const { return tables.count(ref) > 0; }
  int num_samples() const;  // common length, 0 when empty
};

// One <ref>.csv per table in `dir`, each resampled to step_s.
Profiles parse_profiles(const std::filesystem::path& dir, double step_s = 5.0);
// Throws ValidationError naming the first profile ref used by the feeder but missing.
void check_profile_refs(const Network& net, const Profiles& profiles);

// Multipliers per profile ref; a bus without a ref uses 1.0.
using ProfileValues = std::map<std::string, double>;
Injections injections_at(const Network& net, const ProfileValues& values);
ProfileValues profile_values_at(const Profiles& profiles, int sample);

// Static operating point: profile multipliers, device positions and inverter VARs by label.
struct Snapshot {
  ProfileValues profile_values;
  std::map<std::string, int> devices;
  std::map<std::string, double> q_inv;
};
Snapshot parse_snapshot_text(std::string_view text, const std::string& source = "<text>");
Snapshot parse_snapshot_file(const std::filesystem::path& path);
DeviceSettings snapshot_devices(const Network& net, const Snapshot& s);
Injections snapshot_injections(const Network& net, const Snapshot& s);

// 9 significant digits, the fixed numeric format of every CSV written by the tools.
std::string fmt_num(double v);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace vvl
