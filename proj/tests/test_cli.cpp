#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "fixtures.hpp"
#include "vvl/config.hpp"
#include "vvl/experiments.hpp"
#include "vvl/io.hpp"
#include "vvl/linear_flow.hpp"
#include "vvl/miqp.hpp"

using namespace vvl;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

const fs::path& work() {
  static const fs::path p = [] {
    fs::path d = fs::temp_directory_path() / "vvl_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

Run vvl_run(const std::string& args, const std::string& env = "") {
  const fs::path o = work() / "stdout.txt", e = work() / "stderr.txt";
  const std::string cmd = env + " " + VVL_CLI + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text_file(o), read_text_file(e)};
}

std::string src(const std::string& rel) { return fx::source_path(rel); }

fs::path put(const std::string& name, const std::string& text) {
  const fs::path p = work() / name;
  write_text_file(p, text);
  return p;
}

int lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// The error contract: exactly one line "error=<name> exit=<code> <message>".
void check_error_line(const Run& r, const std::string& name) {
  CHECK(lines(r.err) == 1);
  CHECK(r.err.rfind("error=" + name + " exit=" + std::to_string(r.code) + " ", 0) == 0);
}

std::string d1_text() { return read_text_file(src("feeders/d1.json")); }

}  // namespace

TEST_CASE("validate") {
  const Run ok = vvl_run("validate --feeder " + src("feeders/d1.json") + " --profiles " + src("profiles/d1"));
  CHECK(ok.code == 0);
  CHECK(ok.out.find("buses=4 branches=3") != std::string::npos);
  CHECK(ok.out.find("integer_devices=7") != std::string::npos);
  CHECK(ok.out.find("profile_samples=17280") != std::string::npos);

  std::string bad = d1_text();
  const auto at = bad.find("\"tap_step\": 0.00625");
  REQUIRE(at != std::string::npos);
  bad.replace(at, 19, "\"tap_step\": 0");
  const Run r = vvl_run("validate --feeder " + put("bad.json", bad).string());
  CHECK(r.code == 3);
  check_error_line(r, "validation");
  CHECK(r.err.find("tap_step") != std::string::npos);

  const Run empty = vvl_run("validate --feeder " + put("empty.json", "").string());
  CHECK(empty.code == 3);
  check_error_line(empty, "validation");
}

TEST_CASE("usage errors") {
  Run r = vvl_run("");
  CHECK(r.code == 2);
  check_error_line(r, "usage");
  r = vvl_run("frobnicate");
  CHECK(r.code == 2);
  r = vvl_run("pf --feeder " + src("feeders/d1.json"));
  CHECK(r.code == 2);
  check_error_line(r, "usage");
  r = vvl_run("simulate --mode sideways --feeder " + src("feeders/d1.json") + " --profiles " + src("profiles/d1") +
              " --out " + (work() / "x").string());
  CHECK(r.code == 2);
  check_error_line(r, "usage");
  CHECK(vvl_run("--help").code == 0);
}

TEST_CASE("pf reports voltages and branch losses that add up") {
  const Run r = vvl_run("pf --feeder " + src("feeders/d1.json") + " --snapshot " + src("configs/d1_heavy_snapshot.json"));
  REQUIRE(r.code == 0);
  CHECK(lines(r.out) == 10);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "bus,phase,v,magnitude,angle_deg,branch_loss");
  double sum = 0.0;
  while (std::getline(in, line)) sum += std::stod(line.substr(line.rfind(',') + 1));
  const auto pos = r.err.find("losses=");
  REQUIRE(pos != std::string::npos);
  const double total = std::stod(r.err.substr(pos + 7));
  CHECK(sum == doctest::Approx(total).epsilon(1e-7));

  const Run huge = vvl_run("pf --feeder " + src("feeders/d1.json") + " --snapshot " +
                           put("huge.json", R"({"profile_values": {"load": 60, "solar": 0, "wind": 0}})").string());
  CHECK(huge.code == 5);
  check_error_line(huge, "plant_nonconvergence");
}

TEST_CASE("linerr sweep") {
  const Run r = vvl_run("linerr");
  REQUIRE(r.code == 0);
  CHECK(lines(r.out) == 1 + 33 * 25);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "n,v,error_taps");
  double worst = 0.0;
  while (std::getline(in, line)) worst = std::max(worst, std::abs(std::stod(line.substr(line.rfind(',') + 1))));
  CHECK(worst <= 2.0);
  CHECK(worst > 0.0);
}

TEST_CASE("schedule emits every device, inverter and planned voltage per hour") {
  const Run r = vvl_run("schedule --feeder " + src("feeders/d1.json") + " --profiles " + src("profiles/d1") +
                        " --hours 2 --horizon 2");
  REQUIRE(r.code == 0);
  // 4 regulator units (ganged OLTC, per-phase SVR), 3 capacitor units, 6 inverters, 9 bus-phases.
  CHECK(lines(r.out) == 1 + 2 * (4 + 3 + 6 + 9));
  CHECK(r.out.rfind("t,device,phase,setting\n", 0) == 0);
  CHECK(r.out.find("3600,nu:3,c,") != std::string::npos);
}

TEST_CASE("control comparison table") {
  const Run r = vvl_run("control --iterations 30 --feeder " + src("feeders/d1.json") + " --snapshot " +
                        src("configs/d1_heavy_snapshot.json") + " --config " + src("configs/d1_static.json"));
  REQUIRE(r.code == 0);
  CHECK(lines(r.out) == 32);
  CHECK(r.out.rfind("iteration,integral,droop,open_loop\n", 0) == 0);
  CHECK(r.err.find("gamma_max=2.5116902") != std::string::npos);
}

TEST_CASE("stability") {
  const Network net(fx::d1_feeder());
  const SensitivityModel sm(net);
  const double g = stability_bound(der_sensitivity(net, sm));
  const Run r = vvl_run("stability --feeder " + src("feeders/d1.json") + " --gamma 1");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("gamma_max=" + fmt_num(g)) != std::string::npos);
  CHECK(r.out.find("contraction=") != std::string::npos);
}

TEST_CASE("miqp dump and load") {
  const fs::path dump = work() / "rho.json";
  const Run d = vvl_run("miqp --dump " + dump.string() + " --feeder " + src("feeders/d1.json") + " --snapshot " +
                        src("configs/d1_heavy_snapshot.json") + " --config " + src("configs/d1_static.json"));
  REQUIRE(d.code == 0);
  const Run l = vvl_run("miqp --load " + dump.string());
  REQUIRE(l.code == 0);
  CHECK(l.out.rfind("status=optimal objective=", 0) == 0);

  const Network net(fx::d1_feeder());
  const ScenarioConfig cfg = load_scenario_config(src("configs/d1_static.json"));
  const Injections inj = snapshot_injections(net, parse_snapshot_file(src("configs/d1_heavy_snapshot.json")));
  const DeviceSchedule s = schedule(net, static_rho(cfg.rho), constant_forecast(inj, 1), PriorState::initial(net));
  CHECK(l.out.find("objective=" + fmt_num(s.objective) + " ") != std::string::npos);

  miqp::MiqpProblem p = miqp::MiqpProblem::with_vars(1);
  p.H(0, 0) = 1.0;
  p.lb[0] = 0.2;
  p.ub[0] = 0.8;
  p.integer[0] = true;
  const Run inf = vvl_run("miqp --load " + put("infeasible.json", miqp::dump_problem(p)).string());
  CHECK(inf.code == 4);
  check_error_line(inf, "solver_limit");
}

TEST_CASE("simulate: outputs, config precedence and seeds") {
  const std::string base = "simulate --feeder " + src("feeders/d1.json") + " --profiles " + src("profiles/d1");
  const fs::path cfg = put("noisy.json", R"({"scenario": {"duration_h": 2.0, "start_sample": 8640,
                                              "measurement_sigma": 0.0001}})");
  const fs::path a = work() / "a", b = work() / "b", c = work() / "c", d = work() / "d";

  Run r = vvl_run(base + " --config " + cfg.string() + " --out " + a.string(), "VVL_SEED=5");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"ticks\": 1440") != std::string::npos);
  for (const char* f : {"voltages.csv", "losses.csv", "devices.csv", "qinv.csv", "summary.json"})
    CHECK(fs::exists(a / f));
  CHECK(read_text_file(a / "summary.json") == r.out);

  r = vvl_run(base + " --config " + cfg.string() + " --hours 1 --out " + b.string(), "VVL_SEED=6");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"ticks\": 720") != std::string::npos);

  r = vvl_run(base + " --config " + cfg.string() + " --hours 1 --seed 6 --out " + c.string(), "VVL_SEED=5");
  REQUIRE(r.code == 0);
  CHECK(read_text_file(b / "qinv.csv") == read_text_file(c / "qinv.csv"));

  r = vvl_run(base + " --config " + cfg.string() + " --hours 1 --out " + d.string(), "VVL_SEED=5");
  REQUIRE(r.code == 0);
  CHECK(read_text_file(d / "qinv.csv") != read_text_file(c / "qinv.csv"));

  r = vvl_run(base + " --config " + cfg.string() + " --out " + d.string(), "VVL_SEED=abc");
  CHECK(r.code == 3);
  check_error_line(r, "validation");

  const Run bad = vvl_run(base + " --config " + put("typo.json", R"({"rho": {"horizn": 2}})").string() + " --out " +
                          d.string());
  CHECK(bad.code == 3);
  CHECK(bad.err.find("$.rho.horizn") != std::string::npos);
}
