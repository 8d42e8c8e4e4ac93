#pragma once

#include <complex>
#include <string>

#include "vvl/feeder.hpp"
#include "vvl/io.hpp"

namespace fx {

inline std::string source_path(const std::string& rel) { return std::string(VVL_SOURCE_DIR) + "/" + rel; }

inline vvl::Feeder d1_feeder() { return vvl::parse_feeder_file(source_path("feeders/d1.json")); }

inline vvl::Bus bus(int id, const char* phases) {
  vvl::Bus b;
  b.id = id;
  b.phases = *vvl::PhaseSet::parse(phases);
  return b;
}

inline vvl::Branch line(int from, int to, const char* phases, std::complex<double> self,
                        std::complex<double> mutual = 0.0) {
  vvl::Branch br;
  br.from_bus = from;
  br.to_bus = to;
  br.phases = *vvl::PhaseSet::parse(phases);
  const int n = br.phases.size();
  br.z = Eigen::MatrixXcd::Constant(n, n, mutual);
  for (int i = 0; i < n; ++i) br.z(i, i) = self;
  return br;
}

// Slack bus 0 and one load bus on phase a.
inline vvl::Feeder two_bus(double r = 0.01, double x = 0.02) {
  vvl::Feeder f;
  f.name = "two_bus";
  f.buses = {bus(0, "a"), bus(1, "a")};
  f.branches = {line(0, 1, "a", {r, x})};
  f.v0 = {1.0, 0.0, 0.0};
  return f;
}

inline vvl::Feeder chain(int n_buses, const char* phases, std::complex<double> z) {
  vvl::Feeder f;
  f.name = "chain";
  f.v0 = {0.0, 0.0, 0.0};
  for (vvl::Phase p : vvl::PhaseSet::parse(phases)->members()) f.v0[vvl::index(p)] = 1.0;
  for (int i = 0; i < n_buses; ++i) f.buses.push_back(bus(i, phases));
  for (int i = 1; i < n_buses; ++i) f.branches.push_back(line(i - 1, i, phases, z));
  return f;
}

}  // namespace fx
