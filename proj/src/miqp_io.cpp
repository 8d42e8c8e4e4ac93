#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "vvl/miqp.hpp"

namespace vvl::miqp {

namespace {

using nlohmann::json;

json sparse(const Eigen::MatrixXd& m) {
  json entries = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0.0) entries.push_back(json::array({i, j, m(i, j)}));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"entries", std::move(entries)}};
}

Eigen::MatrixXd dense(const json& j, const char* what) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  if (rows < 0 || cols < 0) throw std::invalid_argument(std::string(what) + ": negative dimension");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
  for (const auto& e : j.at("entries")) {
    const auto r = e.at(0).get<Eigen::Index>();
    const auto c = e.at(1).get<Eigen::Index>();
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw std::invalid_argument(std::string(what) + ": entry out of range");
    m(r, c) += e.at(2).get<double>();
  }
  return m;
}

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

Eigen::VectorXd from_json(const json& a, double null_value) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].is_null() ? null_value : a[i].get<double>();
  return v;
}

}  // namespace

// Layout: {"format":"vvl-miqp","version":1,"n","names","integer","lb","ub","c","c0",
//          "H","Aeq","beq","Ain","bin"}; matrices are {"rows","cols","entries":[[i,j,v],...]},
// infinite bounds are null.
std::string dump_problem(const MiqpProblem& p) {
  check_problem(p);
  json j;
  j["format"] = "vvl-miqp";
  j["version"] = 1;
  j["n"] = p.num_vars();
  j["names"] = p.names;
  json ints = json::array();
  for (bool b : p.integer) ints.push_back(b);
  j["integer"] = ints;
  j["lb"] = vec(p.lb);
  j["ub"] = vec(p.ub);
  j["c"] = vec(p.c);
  j["c0"] = p.c0;
  j["H"] = sparse(p.H);
  j["Aeq"] = sparse(p.Aeq);
  j["beq"] = vec(p.beq);
  j["Ain"] = sparse(p.Ain);
  j["bin"] = vec(p.bin);
  return j.dump(1) + "\n";
}

MiqpProblem load_problem(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("MIQP dump parse error: ") + e.what());
  }
  try {
    if (j.value("format", "") != "vvl-miqp") throw std::invalid_argument("not a vvl-miqp dump");
    const int n = j.at("n").get<int>();
    MiqpProblem p = MiqpProblem::with_vars(n);
    p.names = j.value("names", std::vector<std::string>{});
    const auto ints = j.at("integer").get<std::vector<bool>>();
    p.integer = ints;
    p.lb = from_json(j.at("lb"), -kInf);
    p.ub = from_json(j.at("ub"), kInf);
    p.c = from_json(j.at("c"), 0.0);
    p.c0 = j.value("c0", 0.0);
    p.H = dense(j.at("H"), "H");
    p.Aeq = dense(j.at("Aeq"), "Aeq");
    p.beq = from_json(j.at("beq"), 0.0);
    p.Ain = dense(j.at("Ain"), "Ain");
    p.bin = from_json(j.at("bin"), 0.0);
    check_problem(p);
    return p;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("MIQP dump malformed: ") + e.what());
  }
}

}  // namespace vvl::miqp
