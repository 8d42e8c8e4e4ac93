#include "vvl/config.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "vvl/error.hpp"

namespace vvl {

namespace {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& j, std::string path, const std::string& source) : j_(j), path_(std::move(path)), source_(source) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw std::invalid_argument("expected an integer");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw std::invalid_argument("expected a string");
      }
      out = it->get<T>();
    } catch (const std::exception& e) {
      fail(path_ + "." + key, e.what());
    }
  }

  void get(const char* key, std::optional<double>& out) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
    } else if (it->is_number()) {
      out = it->get<double>();
    } else {
      fail(path_ + "." + key, "expected a number or null");
    }
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) fail(path_ + "." + k, "unknown key");
  }

  [[noreturn]] void fail(const std::string& where, const std::string& what) const {
    throw ValidationError(source_ + ": " + where + ": " + what);
  }

 private:
  const json& j_;
  std::string path_;
  const std::string& source_;
  std::vector<std::string> seen_;
};

}  // namespace

ScenarioConfig parse_scenario_config(std::string_view text, const std::string& source, ScenarioConfig cfg) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(source + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  Reader top(j, "$", source);
  for (const auto& [k, _] : j.items())
    if (k != "scenario" && k != "rho" && k != "lower") top.fail("$." + k, "unknown key");
  const json empty = json::object();
  auto section = [&](const char* key) -> const json& { return j.contains(key) ? j.at(key) : empty; };

  {
    const json& s = section("scenario");
    Reader r(s, "$.scenario", source);
    std::string mode = to_string(cfg.mode);
    r.get("mode", mode);
    const auto m = parse_sim_mode(mode);
    if (!m) r.fail("$.scenario.mode", "unknown mode '" + mode + "'");
    cfg.mode = *m;
    r.get("duration_h", cfg.duration_h);
    r.get("upper_period_s", cfg.upper_period_s);
    r.get("lower_period_s", cfg.lower_period_s);
    r.get("start_sample", cfg.start_sample);
    r.get("band_min", cfg.band_min);
    r.get("band_max", cfg.band_max);
    r.get("forecast_sigma", cfg.forecast_sigma);
    r.get("measurement_sigma", cfg.measurement_sigma);
    r.get("seed", cfg.seed);
    r.finish();
  }
  {
    const json& s = section("rho");
    Reader r(s, "$.rho", source);
    RhoConfig& o = cfg.rho;
    r.get("horizon", o.horizon);
    r.get("c_loss", o.c_loss);
    r.get("c_tap", o.c_tap);
    r.get("c_cap", o.c_cap);
    r.get("c_delta", o.c_delta);
    r.get("eta", o.eta);
    r.get("v_min", o.v_min);
    r.get("v_max", o.v_max);
    r.get("daily_window", o.daily_window);
    r.get("gap_tol", o.miqp.gap_tol);
    r.get("node_limit", o.miqp.node_limit);
    r.finish();
  }
  {
    const json& s = section("lower");
    Reader r(s, "$.lower", source);
    r.get("gamma", cfg.lower.gamma);
    r.get("droop_gain", cfg.lower.droop_gain);
    r.finish();
  }
  cfg.lower.period_s = cfg.lower_period_s;
  return cfg;
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path, ScenarioConfig base) {
  return parse_scenario_config(read_text_file(path), path.string(), std::move(base));
}

std::string write_scenario_config(const ScenarioConfig& c) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["scenario"] = {{"mode", to_string(c.mode)},
                   {"duration_h", c.duration_h},
                   {"upper_period_s", c.upper_period_s},
                   {"lower_period_s", c.lower_period_s},
                   {"start_sample", c.start_sample},
                   {"band_min", c.band_min},
                   {"band_max", c.band_max},
                   {"forecast_sigma", c.forecast_sigma},
                   {"measurement_sigma", c.measurement_sigma},
                   {"seed", c.seed}};
  j["rho"] = {{"horizon", c.rho.horizon},   {"c_loss", c.rho.c_loss},           {"c_tap", c.rho.c_tap},
              {"c_cap", c.rho.c_cap},       {"c_delta", c.rho.c_delta},         {"eta", opt(c.rho.eta)},
              {"v_min", c.rho.v_min},       {"v_max", c.rho.v_max},             {"daily_window", c.rho.daily_window},
              {"gap_tol", c.rho.miqp.gap_tol}, {"node_limit", c.rho.miqp.node_limit}};
  j["lower"] = {{"gamma", opt(c.lower.gamma)}, {"droop_gain", opt(c.lower.droop_gain)}};
  return j.dump(2) + "\n";
}

}  // namespace vvl
