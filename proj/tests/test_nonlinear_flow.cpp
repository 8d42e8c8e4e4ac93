#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "fixtures.hpp"
#include "vvl/nonlinear_flow.hpp"

using namespace vvl;
using doctest::Approx;
using cd = std::complex<double>;

namespace {

struct ScalarOracle {
  cd v1;
  cd current;
  int iterations;
};

// V1 = t V0 - z conj(s / V1) iterated from t V0.
ScalarOracle scalar_fixed_point(cd z, cd s, double t, double tol) {
  const cd v0 = 1.0;
  cd v = t * v0;
  for (int it = 1; it <= 200; ++it) {
    const cd next = t * v0 - z * std::conj(s / v);
    if (std::abs(next - v) < tol) return {next, std::conj(s / next), it};
    v = next;
  }
  return {v, std::conj(s / v), 200};
}

// |V1|^2 from the quadratic v^2 - (t^2 v0 - 2(rP + xQ)) v + |z|^2 |s|^2 = 0, larger root.
double closed_form_v(double r, double x, double p, double q, double t) {
  const double b = t * t - 2.0 * (r * p + x * q);
  const double c = (r * r + x * x) * (p * p + q * q);
  return 0.5 * (b + std::sqrt(b * b - 4.0 * c));
}

Network two_bus_net() {
  Feeder f = fx::two_bus();
  f.branches[0].regulator = RegulatorSpec{};
  return Network(f);
}

Injections two_bus_load(const Network& net) {
  Injections inj = Injections::zero(net.num_slots());
  inj.p_c[0] = 0.5;
  inj.q_c[0] = 0.2;
  return inj;
}

}  // namespace

TEST_CASE("no-load feeder sits at the slack voltage") {
  const Network net(fx::d1_feeder());
  const std::vector<int> taps(net.num_slots(), 0);
  const PowerFlowResult r = solve_power_flow(net, Injections::zero(net.num_slots()), taps);
  REQUIRE(r.converged);
  for (int s = 0; s < net.num_slots(); ++s) CHECK(std::abs(r.V[s]) == Approx(std::sqrt(net.slack_v0(s))).epsilon(1e-14));
  CHECK(std::abs(r.losses) <= 1e-15);
}

TEST_CASE("two-bus plant against the scalar oracles") {
  const Network net = two_bus_net();
  const std::vector<int> taps{0};
  const PowerFlowResult r = solve_power_flow(net, two_bus_load(net), taps);
  REQUIRE(r.converged);
  CHECK(r.iterations <= 10);
  const ScalarOracle o = scalar_fixed_point({0.01, 0.02}, {0.5, 0.2}, 1.0, 1e-14);
  CHECK(std::abs(r.V[0] - o.v1) <= 1e-10);
  const double v_closed = closed_form_v(0.01, 0.02, 0.5, 0.2, 1.0);
  CHECK(r.v[0] == Approx(v_closed).epsilon(1e-10));
  CHECK(std::abs(r.V[0]) == Approx(0.990885).epsilon(1e-6));
  CHECK(std::abs(r.I[0]) == Approx(std::abs(o.current)).epsilon(1e-10));
  CHECK(r.losses == Approx(0.01 * std::norm(o.current)).epsilon(1e-10));
  CHECK(r.losses == Approx(0.0029).epsilon(0.02));
}

TEST_CASE("tap raises the two-bus voltage by about eight steps") {
  const Network net = two_bus_net();
  const std::vector<int> t0{0}, t8{8};
  const PowerFlowResult a = solve_power_flow(net, two_bus_load(net), t0);
  const PowerFlowResult b = solve_power_flow(net, two_bus_load(net), t8);
  REQUIRE(b.converged);
  const ScalarOracle o = scalar_fixed_point({0.01, 0.02}, {0.5, 0.2}, 1.05, 1e-14);
  CHECK(std::abs(b.V[0] - o.v1) <= 1e-10);
  CHECK(b.v[0] == Approx(closed_form_v(0.01, 0.02, 0.5, 0.2, 1.05)).epsilon(1e-10));
  CHECK(std::abs(std::abs(b.V[0]) - std::abs(a.V[0]) - 8 * 0.00625) <= 1e-3);
}

TEST_CASE("energy balance on D1 at full load") {
  const Network net(fx::d1_feeder());
  const Injections inj = injections_at(net, {{"load", 1.0}, {"solar", 0.0}, {"wind", 0.3}});
  const std::vector<int> taps(net.num_slots(), 0);
  const PowerFlowResult r = solve_power_flow(net, inj, taps);
  REQUIRE(r.converged);
  const double net_load = inj.p_c.sum() - inj.p_inv.sum();
  CHECK(std::abs(r.slack_power.real() - net_load - r.losses) <= 1e-8);
  CHECK(r.losses > 0.0);
  const double q_net = inj.q_c.sum() - inj.q_inv.sum() - inj.q_cap.sum();
  // Slack Q = net reactive load + series reactive consumption.
  double q_loss = 0.0;
  for (int s = 0; s < net.num_slots(); ++s) {
    const int ps = net.parent_slot(s);
    const double ang[3] = {0.0, -2.0 * std::numbers::pi / 3.0, 2.0 * std::numbers::pi / 3.0};
    const cd vp = ps >= 0 ? r.V[ps] : std::polar(std::sqrt(net.slack_v0(s)), ang[index(net.index().at(s).phase)]);
    q_loss += std::imag((r.t[s] * vp - r.V[s]) * std::conj(r.I[s]));
  }
  CHECK(std::abs(r.slack_power.imag() - q_net - q_loss) <= 1e-8);
}

TEST_CASE("nodal power balance on D1 with taps and DER") {
  const Network net(fx::d1_feeder());
  DeviceSettings d = net.zero_settings();
  d.taps = {3, -2, 4, 1};
  d.caps = {1, 2, 0};
  Injections inj = injections_at(net, {{"load", 0.7}, {"solar", 0.5}, {"wind", 0.6}});
  for (const DerUnit& u : net.ders()) inj.q_inv[u.slot] = 0.03;
  const PowerFlowResult r = solve_power_flow(net, inj, d);
  REQUIRE(r.converged);
  const Eigen::VectorXd qcap = net.capacitor_injection(d);
  for (int s = 0; s < net.num_slots(); ++s) {
    // Power arriving at the bus-phase minus what leaves downstream equals the net load.
    cd out = 0.0;
    for (int c = 0; c < net.num_slots(); ++c)
      if (net.parent_slot(c) == s) out += r.S_send[c];
    const cd arriving = r.V[s] * std::conj(r.I[s]);
    const cd load(inj.p_c[s] - inj.p_inv[s], inj.q_c[s] - inj.q_inv[s] - qcap[s]);
    CHECK(std::abs(arriving - out - load) <= 1e-9);
  }
}

TEST_CASE("linear model error shrinks with loading") {
  const Network net(fx::d1_feeder());
  const std::vector<int> taps(net.num_slots(), 0);
  double prev = 0.0;
  for (double eps : {0.1, 0.2, 0.5}) {
    const Injections inj = injections_at(net, {{"load", eps}, {"solar", 0.0}, {"wind", 0.0}});
    const PowerFlowResult nl = solve_power_flow(net, inj, taps);
    REQUIRE(nl.converged);
    const double err = (nl.v - evaluate_glbfm(net, inj, taps).v).cwiseAbs().maxCoeff();
    CHECK(err > prev);
    prev = err;
    if (eps == 0.5) CHECK(err <= 1e-2);
    if (eps == 0.1) CHECK(err <= 5e-4);
  }
}

TEST_CASE("plant is deterministic") {
  const Network net(fx::d1_feeder());
  const Injections inj = injections_at(net, {{"load", 0.9}, {"solar", 0.2}, {"wind", 0.4}});
  DeviceSettings d = net.zero_settings();
  d.taps = {2, 1, 0, -1};
  const PowerFlowResult a = solve_power_flow(net, inj, d);
  const PowerFlowResult b = solve_power_flow(net, inj, d);
  CHECK(a.V == b.V);
  CHECK(a.losses == b.losses);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("overload reports non-convergence with the last iterate") {
  const Network net = two_bus_net();
  Injections inj = two_bus_load(net);
  inj.p_c[0] = 40.0;  // far beyond the nose of the PV curve
  const std::vector<int> taps{0};
  const PowerFlowResult r = solve_power_flow(net, inj, taps);
  CHECK_FALSE(r.converged);
  CHECK(r.V.size() == 1);
}
