#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "fixtures.hpp"
#include "vvl/error.hpp"
#include "vvl/sim_harness.hpp"

using namespace vvl;
using doctest::Approx;

namespace {

const Network& d1() {
  static const Network net(fx::d1_feeder());
  return net;
}

const Profiles& bundled() {
  static const Profiles p = parse_profiles(fx::source_path("profiles/d1"));
  return p;
}

// One value per hour for every table, held for the whole hour at 5 s.
Profiles hourly(const std::vector<ProfileValues>& hours) {
  Profiles p;
  p.step_s = 5.0;
  for (const auto& [ref, _] : hours.front()) {
    ProfileTable t{ref, 5.0, {}};
    for (const ProfileValues& h : hours) t.values.insert(t.values.end(), 720, h.at(ref));
    p.tables[ref] = t;
  }
  return p;
}

ScenarioConfig scenario(SimMode mode, double hours) {
  ScenarioConfig c;
  c.mode = mode;
  c.duration_h = hours;
  return c;
}

// Trapezoid rule over an arbitrary (t, y) polyline.
double trapezoid(const std::vector<double>& t, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) s += 0.5 * (y[k] + y[k - 1]) * (t[k] - t[k - 1]);
  return s;
}

std::vector<std::vector<double>> read_csv(const std::filesystem::path& p) {
  std::istringstream in(read_text_file(p));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("vvl_sim_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("scenario invariants") {
  ScenarioConfig c;
  CHECK_NOTHROW(check_scenario(c));
  CHECK(c.ticks_per_period() == 720);
  CHECK(c.num_ticks() == 17280);
  c.lower_period_s = 7.0;
  CHECK_THROWS_AS(check_scenario(c), std::invalid_argument);
  c = ScenarioConfig{};
  c.duration_h = 1.5;
  CHECK_THROWS_AS(check_scenario(c), std::invalid_argument);
  for (SimMode m : {SimMode::kNoControl, SimMode::kUpperOnly, SimMode::kTwoLayer, SimMode::kTwoLayerDroop,
                    SimMode::kRoundedRelaxationUpper})
    CHECK(parse_sim_mode(to_string(m)) == m);
  CHECK_FALSE(parse_sim_mode("two-layer"));
}

TEST_CASE("zero load without control keeps the slack voltage and no losses") {
  const Profiles p = hourly({{{"load", 0.0}, {"solar", 0.0}, {"wind", 0.0}}});
  const SimMetrics m = run_scenario(d1(), p, scenario(SimMode::kNoControl, 1.0));
  REQUIRE(m.time_s.size() == 720);
  for (std::size_t k = 0; k < m.v.size(); ++k) {
    CHECK((m.v[k].array() - 1.0404).abs().maxCoeff() <= 1e-12);
    CHECK(std::abs(m.losses[k]) <= 1e-15);
    CHECK(std::isnan(m.tracking_error[k]));
  }
}

TEST_CASE("coverage and plant failures are reported") {
  ScenarioConfig c = scenario(SimMode::kNoControl, 2.0);
  const Profiles one = hourly({{{"load", 0.5}, {"solar", 0.0}, {"wind", 0.0}}});
  CHECK_THROWS_AS(run_scenario(d1(), one, c), ValidationError);
  const Profiles huge = hourly({{{"load", 60.0}, {"solar", 0.0}, {"wind", 0.0}}});
  c.duration_h = 1.0;
  try {
    run_scenario(d1(), huge, c);
    FAIL("expected a plant failure");
  } catch (const PlantNonConvergence& e) {
    CHECK(std::string(e.what()).rfind("t=0s: ", 0) == 0);
  }
}

TEST_CASE("metric summary") {
  SimMetrics m;
  m.tick_s = 5.0;
  m.period_s = 3600.0;
  m.band_min = 0.9025;
  m.band_max = 1.1025;
  SUBCASE("constant traces") {
    for (int k = 0; k < 10; ++k) {
      m.time_s.push_back(5.0 * k);
      m.losses.push_back(0.02);
      m.v.push_back(Eigen::VectorXd::Constant(3, 1.01));
      m.tracking_error.push_back(1e-4);
      m.violations.push_back(0);
    }
    const SimSummary s = compute_metrics(m);
    CHECK(s.max_v == 1.01);
    CHECK(s.min_v == 1.01);
    CHECK(s.mean_tracking_error == Approx(1e-4).epsilon(1e-14));
    CHECK(s.energy_loss == Approx(0.02 * 50.0 / 3600.0).epsilon(1e-14));
    CHECK(s.violation_samples == 0);
  }
  SUBCASE("violations straddling the upper band edge") {
    const double vals[] = {1.10, 1.1025, 1.1026, 1.2, 1.1024999, 1.11};
    for (int k = 0; k < 6; ++k) {
      m.time_s.push_back(5.0 * k);
      m.losses.push_back(0.0);
      Eigen::VectorXd v(2);
      v << vals[k], 1.0;
      m.v.push_back(v);
      m.tracking_error.push_back(std::nan(""));
    }
    const SimSummary s = compute_metrics(m);
    CHECK(s.violation_samples == 3);
    CHECK(s.violation_ticks == 3);
    CHECK(std::isnan(s.mean_tracking_error));
  }
  SUBCASE("energy matches an independent integration of the held samples") {
    std::vector<double> t, y;
    for (int k = 0; k < 1000; ++k) {
      const double l = 0.01 + 0.005 * std::sin(0.37 * k) + 1e-4 * (k % 7);
      m.time_s.push_back(5.0 * k);
      m.losses.push_back(l);
      t.insert(t.end(), {5.0 * k, 5.0 * (k + 1)});
      y.insert(y.end(), {l, l});
    }
    CHECK(std::abs(compute_metrics(m).energy_loss - trapezoid(t, y) / 3600.0) <= 1e-12);
  }
}

TEST_CASE("switching totals and daily windows") {
  SimMetrics m;
  m.period_s = 3600.0;
  DeviceSettings d{{0}, {0}};
  for (int h = 0; h < 30; ++h) {
    if (h == 2 || h == 3 || h == 26) d.taps[0] += 2;
    if (h == 5) d.caps[0] = 1;
    m.devices.push_back(d);
    m.schedule_time_s.push_back(3600.0 * h);
  }
  const SimSummary s = compute_metrics(m);
  CHECK(s.tap_moves == 6);
  CHECK(s.cap_moves == 1);
  CHECK(s.max_daily_tap_moves == 4);
  CHECK(s.max_daily_cap_moves == 1);
}

TEST_CASE("bundled day: mode ordering") {
  const SimMetrics none = run_scenario(d1(), bundled(), scenario(SimMode::kNoControl, 24.0));
  const SimMetrics upper = run_scenario(d1(), bundled(), scenario(SimMode::kUpperOnly, 24.0));
  const SimMetrics two = run_scenario(d1(), bundled(), scenario(SimMode::kTwoLayer, 24.0));
  const SimSummary a = compute_metrics(none), b = compute_metrics(upper), c = compute_metrics(two);
  CHECK(a.ticks == 17280);
  CHECK(c.ticks == 17280);
  CHECK(two.devices.size() == 24);
  CHECK(a.violation_samples > 0);
  CHECK(c.violation_samples == 0);
  CHECK(c.violation_samples <= b.violation_samples);
  CHECK(b.violation_samples <= a.violation_samples);
  CHECK(c.energy_loss < a.energy_loss);
  CHECK(limit_breaches(d1(), two, d1().zero_settings()).empty());
  CHECK(limit_breaches(d1(), upper, d1().zero_settings()).empty());
  // The planned VARs are not applied without the feedback layer.
  for (const Eigen::VectorXd& q : upper.q_inv) CHECK(q.isZero(0.0));
}

TEST_CASE("heavy evening: devices move within their limits and only at upper boundaries") {
  Profiles p = bundled();
  for (double& x : p.tables.at("load").values) x *= 2.2;
  ScenarioConfig c = scenario(SimMode::kTwoLayer, 8.0);
  c.start_sample = 16 * 720;
  const SimMetrics m = run_scenario(d1(), p, c);
  const SimSummary s = compute_metrics(m);
  CHECK(s.tap_moves + s.cap_moves > 0);
  CHECK(s.violation_samples == 0);
  CHECK(limit_breaches(d1(), m, d1().zero_settings()).empty());
  REQUIRE(m.devices.size() == 8);
  for (std::size_t k = 0; k < m.devices.size(); ++k) CHECK(m.schedule_time_s[k] == 3600.0 * k);
  // Inverter output never leaves the capability left by the present active power.
  const auto& ders = d1().ders();
  for (std::size_t k = 0; k < m.q_inv.size(); ++k) {
    const Injections inj = injections_at(d1(), profile_values_at(p, c.start_sample + static_cast<int>(k)));
    for (std::size_t d = 0; d < ders.size(); ++d)
      CHECK(std::abs(m.q_inv[k][d]) <= reactive_limits(ders[d].s_inv, inj.p_inv[ders[d].slot]).second + 1e-15);
  }
}

TEST_CASE("tracking error falls within each period of a piecewise-constant day") {
  const Profiles p = hourly({{{"load", 0.6}, {"solar", 0.9}, {"wind", 0.5}},
                             {{"load", 1.0}, {"solar", 0.2}, {"wind", 0.9}},
                             {{"load", 1.4}, {"solar", 0.0}, {"wind", 1.0}},
                             {{"load", 0.3}, {"solar", 1.0}, {"wind", 0.1}}});
  const SimMetrics m = run_scenario(d1(), p, scenario(SimMode::kTwoLayer, 4.0));
  const auto& ders = d1().ders();
  for (int h = 0; h < 4; ++h) {
    const std::size_t first = 720 * h, last = 720 * h + 719;
    const Injections inj = injections_at(d1(), profile_values_at(p, static_cast<int>(first)));
    bool saturated = true;
    for (std::size_t d = 0; d < ders.size(); ++d) {
      const double hi = reactive_limits(ders[d].s_inv, inj.p_inv[ders[d].slot]).second;
      saturated = saturated && std::abs(std::abs(m.q_inv[last][d]) - hi) <= 1e-12;
    }
    CHECK((m.tracking_error[last] <= m.tracking_error[first] || saturated));
  }
}

TEST_CASE("integral feedback tracks closer than droop on the heavy snapshot") {
  const Snapshot snap = parse_snapshot_file(fx::source_path("configs/d1_heavy_snapshot.json"));
  const Profiles p = hourly({snap.profile_values});
  const SimMetrics i = run_scenario(d1(), p, scenario(SimMode::kTwoLayer, 1.0));
  const SimMetrics d = run_scenario(d1(), p, scenario(SimMode::kTwoLayerDroop, 1.0));
  CHECK(d.droop_gain > 0.0);
  CHECK(i.tracking_error.back() < d.tracking_error.back());
}

TEST_CASE("forecast horizon shrinks at the end of the data") {
  ScenarioConfig c = scenario(SimMode::kTwoLayer, 2.0);
  c.start_sample = 22 * 720;
  const SimMetrics m = run_scenario(d1(), bundled(), c);
  CHECK(m.time_s.size() == 1440);
}

TEST_CASE("results are byte-stable and re-aggregate to the summary") {
  ScenarioConfig c = scenario(SimMode::kTwoLayer, 3.0);
  c.start_sample = 10 * 720;
  c.forecast_sigma = 0.05;
  c.measurement_sigma = 1e-4;
  const auto d1_dir = scratch("a"), d2_dir = scratch("b");
  const SimMetrics m = run_scenario(d1(), bundled(), c);
  write_results(m, d1_dir);
  write_results(run_scenario(d1(), bundled(), c), d2_dir);
  for (const char* f : {"voltages.csv", "losses.csv", "devices.csv", "qinv.csv", "summary.json"})
    CHECK(read_text_file(d1_dir / f) == read_text_file(d2_dir / f));

  const auto losses = read_csv(d1_dir / "losses.csv");
  const auto volts = read_csv(d1_dir / "voltages.csv");
  REQUIRE(losses.size() == m.time_s.size());
  double energy = 0.0;
  long viol = 0;
  for (std::size_t k = 0; k < losses.size(); ++k) {
    energy += losses[k][1] * 5.0 / 3600.0;
    for (std::size_t s = 1; s < volts[k].size(); ++s)
      if (volts[k][s] < c.band_min || volts[k][s] > c.band_max) ++viol;
  }
  const SimSummary s = compute_metrics(m);
  CHECK(energy == Approx(s.energy_loss).epsilon(1e-8));
  CHECK(viol == s.violation_samples);
  CHECK(read_text_file(d1_dir / "summary.json").find("\"energy_loss_pu_h\": " + fmt_num(s.energy_loss)) !=
        std::string::npos);

  const ScenarioConfig other = [&] {
    ScenarioConfig o = c;
    o.seed = 2;
    return o;
  }();
  const auto d3_dir = scratch("c");
  write_results(run_scenario(d1(), bundled(), other), d3_dir);
  CHECK(read_text_file(d1_dir / "qinv.csv") != read_text_file(d3_dir / "qinv.csv"));
}

TEST_CASE("empty metrics give header-only files") {
  SimMetrics m;
  m.slot_labels = {"1a"};
  m.der_labels = {"der:2:a"};
  m.device_labels = {"reg:0-1"};
  const auto dir = scratch("empty");
  write_results(m, dir);
  CHECK(read_text_file(dir / "voltages.csv") == "time_s,1a\n");
  CHECK(read_text_file(dir / "losses.csv") == "time_s,loss,tracking_error,violations\n");
  CHECK(read_text_file(dir / "devices.csv") == "time_s,reg:0-1\n");
  CHECK(read_text_file(dir / "qinv.csv") == "time_s,der:2:a\n");
  CHECK(read_text_file(dir / "summary.json").find("\"ticks\": 0") != std::string::npos);
}
