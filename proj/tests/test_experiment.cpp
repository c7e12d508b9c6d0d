#include "experiment.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ym;
using namespace ym::exp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("yamabe_exp_" + name);
  fs::remove_all(d);
  return d;
}

json sweep_config() {
  return {{"experiment", "curvature-sweep"},
          {"family", {{"family", "NeckJoin"}, {"nu", -1}}},
          {"models",
           {{"prime", {{"kind", "hyperbolic_chart"}, {"n", 3}}}, {"dprime", {{"kind", "hyperbolic_chart"}, {"n", 3}}}}},
          {"t_grid", {0.05, 0.1, 0.15, 0.2}},
          {"expectations",
           {{{"name", "rate"}, {"kind", "slope"}, {"field", "eps_norm_n2"}, {"min", 0.5}, {"max", 10}},
            {{"name", "too tight"}, {"kind", "max"}, {"field", "eps_sup"}, {"max", 1e-9}}}}};
}

}  // namespace

TEST_CASE("slope fits") {
  std::vector<double> x = {0.1, 0.2, 0.3, 0.5}, y, z;
  for (double v : x) y.push_back(7 * v * v), z.push_back(v);
  SlopeFit f = fit_slope(x, y);
  CHECK_THAT(f.slope, WithinAbs(2.0, 1e-12));
  CHECK_THAT(f.r2, WithinAbs(1.0, 1e-12));
  CHECK_THAT(std::exp(f.intercept), WithinRel(7.0, 1e-12));
  CHECK_THAT(fit_slope(x, z).slope, WithinAbs(1.0, 1e-12));

  // noisy data: the 95% interval brackets the slope and is wider with fewer points
  std::vector<double> yn;
  for (size_t i = 0; i < x.size(); ++i) yn.push_back(y[i] * (1 + 0.05 * ((i % 2) ? 1 : -1)));
  f = fit_slope(x, yn);
  CHECK(f.ci_low < f.slope);
  CHECK(f.ci_high > f.slope);
  CHECK(f.r2 < 1);

  CHECK_THROWS_AS(fit_slope({0.1, 0.2}, {1, 2}), ConfigError);
  CHECK_THROWS_AS(fit_slope({0.1, 0.2, 0.3}, {1, -2, 3}), ConfigError);
  CHECK_THROWS_AS(fit_slope({0.1, 0.1, 0.1}, {1, 2, 3}), ConfigError);
}

TEST_CASE("tables round-trip through CSV") {
  Table t({"t", "name", "ok", "value"});
  t.add({0.2, "b,c", true, nullptr});
  t.add({0.1, "a\"q", false, 1.0 / 3});
  t.sort_by("t");
  const std::string csv = t.csv();
  CHECK(csv.rfind("t,name,ok,value\n0.1,", 0) == 0);
  const Table back = Table::from_csv(csv);
  REQUIRE(back.rows().size() == 2);
  CHECK(back.rows()[0][1] == "a\"q");
  CHECK(back.rows()[1][1] == "b,c");
  CHECK(back.rows()[1][3].is_null());
  CHECK(back.csv() == csv);
  CHECK(back.numbers("ok") == std::vector<double>{0, 1});
}

TEST_CASE("expectations") {
  Table t({"t", "y", "flag"});
  for (double x : {0.1, 0.2, 0.4}) t.add({x, 3 * x * x, x < 0.3});
  CHECK(evaluate(Expectation::from_json({{"kind", "slope"}, {"field", "y"}, {"min", 1.9}, {"max", 2.1}}), t).pass);
  CHECK_FALSE(evaluate(Expectation::from_json({{"kind", "slope"}, {"field", "y"}, {"min", 2.5}}), t).pass);
  const Verdict mm = evaluate(Expectation::from_json({{"kind", "max_over_min"}, {"field", "y"}, {"max", 20}}), t);
  CHECK_THAT(mm.value, WithinRel(16.0, 1e-12));
  CHECK(mm.pass);
  CHECK_FALSE(evaluate(Expectation::from_json({{"kind", "all_true"}, {"field", "flag"}}), t).pass);
  CHECK(evaluate(Expectation::from_json({{"kind", "all_true"}, {"field", "flag"}, {"x_max", 0.3}}), t).pass);
  CHECK(evaluate(Expectation::from_json({{"kind", "max"}, {"field", "y"}, {"max", 0.5}}), t).pass);
  CHECK_THROWS_AS(Expectation::from_json({{"kind", "median"}, {"field", "y"}, {"max", 1}}), ConfigError);
  CHECK_THROWS_AS(Expectation::from_json({{"kind", "max"}, {"field", "y"}}), ConfigError);
}

TEST_CASE("worker pool and thread resolution") {
  std::vector<int> out(37, -1);
  parallel_for(37, 4, [&](int i) { out[i] = i * i; });
  for (int i = 0; i < 37; ++i) CHECK(out[i] == i * i);
  CHECK_THROWS_AS(parallel_for(8, 3,
                               [](int i) {
                                 if (i == 5) throw ConfigError("five");
                               }),
                  ConfigError);
  CHECK(resolve_threads(3) == 3);
  CHECK(resolve_threads(0) >= 1);
}

TEST_CASE("config hash is stable and sensitive") {
  const json a = sweep_config();
  json b = a;
  CHECK(config_hash(a) == config_hash(b));
  b["t_grid"] = {0.05, 0.1, 0.15, 0.25};
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("run: deterministic CSV, verdicts and exit codes") {
  const fs::path d1 = scratch("run1"), d2 = scratch("run2");
  RunOptions o;
  o.out_dir = d1.string();
  o.threads = 1;
  const RunResult r1 = run("curvature-sweep", sweep_config(), o);
  o.out_dir = d2.string();
  o.threads = 3;
  const RunResult r2 = run("curvature-sweep", sweep_config(), o);
  CHECK(r1.exit_code == kExpectationFailed);
  CHECK(slurp(d1 / "curvature_sweep.csv") == slurp(d2 / "curvature_sweep.csv"));
  const json s = json::parse(slurp(d1 / "summary.json"));
  CHECK(s["verdicts"][0]["pass"] == true);
  CHECK(s["verdicts"][1]["pass"] == false);
  CHECK(s["config_hash"] == config_hash(sweep_config()));

  // verdicts are recomputable from the CSV alone
  const Table t = Table::from_csv(slurp(d1 / "curvature_sweep.csv"));
  for (size_t i = 0; i < 2; ++i) {
    const Verdict v = evaluate(Expectation::from_json(s["expectations"][i]), t);
    CHECK(v.pass == s["verdicts"][i]["pass"].get<bool>());
    CHECK_THAT(v.value, WithinRel(s["verdicts"][i]["value"].get<double>(), 1e-9));
  }
  for (const auto& row : t.rows()) CHECK(row.back() == config_hash(sweep_config()));

  // report over the run
  const fs::path d3 = scratch("report");
  o.out_dir = d3.string();
  const RunResult rr = run("report", {{"inputs", {d1.string()}}}, o);
  CHECK(rr.exit_code == kExpectationFailed);
  const Table rep = Table::from_csv(slurp(d3 / "report.csv"));
  CHECK(rep.rows().size() == 2);
  CHECK(rep.numbers("matches_summary") == std::vector<double>{1, 1});

  // passing expectations give exit 0
  json ok = sweep_config();
  ok["expectations"] = json::array({ok["expectations"][0]});
  o.out_dir = scratch("run3").string();
  CHECK(run("curvature-sweep", ok, o).exit_code == kOk);
  for (const auto& d : {d1, d2, d3}) fs::remove_all(d);
}

TEST_CASE("run: config errors leave no outputs") {
  RunOptions o;
  const fs::path d = scratch("bad");
  o.out_dir = d.string();
  json c = sweep_config();
  c.erase("t_grid");
  CHECK_THROWS_AS(run("curvature-sweep", c, o), ConfigError);
  c = sweep_config();
  c["t_grid"] = {0.2, 0.1};
  CHECK_THROWS_AS(run("curvature-sweep", c, o), ConfigError);
  c["t_grid"] = {0.1, 0.9};
  CHECK_THROWS_AS(run("curvature-sweep", c, o), ConfigError);
  CHECK_THROWS_AS(run("spectrum", sweep_config(), o), ConfigError);  // experiment mismatch
  CHECK_THROWS_AS(run("bogus", json::object(), o), ConfigError);
  c = sweep_config();
  c["expectations"][0]["field"] = "no_such_column";
  CHECK_THROWS_AS(run("curvature-sweep", c, o), ConfigError);
  c = sweep_config();
  c["family"]["family"] = "ZeroNeck";
  CHECK_THROWS_AS(run("curvature-sweep", c, o), ConfigError);  // nu = -1 on a zero family
  json s = {{"family", {{"family", "NeckJoin"}}},
            {"models", {{"prime", {{"kind", "round_sphere"}}}, {"dprime", {{"kind", "round_sphere"}}}}},
            {"t_grid", {0.1}},
            {"solve", {{"nu", 1}}}};
  CHECK_THROWS_AS(run("solve", s, o), ConfigError);  // tolerance must be explicit
  CHECK_FALSE(fs::exists(d / "curvature_sweep.csv"));
  CHECK_FALSE(fs::exists(d / "summary.json"));
}

TEST_CASE("analytic spectra") {
  const auto t = analytic_spectrum(Model::flat_torus(3, 2.0), 8);
  CHECK(t[0] == 0);
  for (int k = 1; k <= 6; ++k) CHECK_THAT(t[k], WithinRel(8 * M_PI * M_PI, 1e-14));
  CHECK_THAT(t[7], WithinRel(16 * M_PI * M_PI, 1e-14));
  const auto s = analytic_spectrum(Model::round_sphere(3, 1.0), 6);
  for (int k = 1; k <= 4; ++k) CHECK_THAT(s[k], WithinRel(4.0, 1e-14));  // b, multiplicity n+1
  CHECK_THAT(s[5], WithinRel(10.6666666666667, 1e-12));
  const auto p = analytic_spectrum(Model::product_sphere(3, std::sqrt(2.0), 2 * M_PI), 12);
  for (int k = 1; k <= 5; ++k) CHECK_THAT(p[k], WithinRel(8.0, 1e-14));
  for (int k = 6; k <= 11; ++k) CHECK_THAT(p[k], WithinRel(16.0, 1e-14));
  CHECK_THROWS_AS(analytic_spectrum(Model::projective_space(3), 4), ConfigError);
}
