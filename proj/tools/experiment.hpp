#pragma once

#include "yamabe/solver.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ym::exp {

enum ExitCode { kOk = 0, kExpectationFailed = 1, kConfigError = 2, kNumericalFailure = 3 };

struct SlopeFit {
  double slope = 0, intercept = 0, r2 = 0;
  double ci_low = 0, ci_high = 0;  // 95% interval for the slope
  int points = 0;
};
// least squares on (log x, log y)
SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y);

// plot-ready table; cells are numbers, strings, booleans or null
class Table {
 public:
  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}
  void add(std::vector<nlohmann::json> row);
  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<nlohmann::json>>& rows() const { return rows_; }
  int index(const std::string& column) const;
  std::vector<double> numbers(const std::string& column) const;
  void sort_by(const std::string& column);
  std::string csv() const;
  static Table from_csv(const std::string& text);

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<nlohmann::json>> rows_;
};

struct Expectation {
  std::string name, kind, field;
  std::string x = "t";
  std::optional<double> min, max;
  std::optional<double> x_min, x_max;  // restrict to rows with x in range
  static Expectation from_json(const nlohmann::json& j);
};

struct Verdict {
  std::string name, kind, field;
  double value = 0;
  std::optional<double> min, max;
  bool pass = false;
  nlohmann::json fit;
  nlohmann::json to_json() const;
};
Verdict evaluate(const Expectation& e, const Table& t);

struct RunOptions {
  std::string out_dir = "out";
  int threads = 1;
  std::optional<std::string> resolution;
};

struct RunResult {
  int exit_code = kOk;
  nlohmann::json summary;
};

// subcommand: build, curvature-sweep, sobolev-sweep, spectrum, neck-eig, solve,
// three-metrics, mass-fit, report
RunResult run(const std::string& subcommand, const nlohmann::json& config, const RunOptions& opt);
const std::vector<std::string>& subcommands();
std::string config_hash(const nlohmann::json& config);

// thread count: flag if positive, else YAMABE_THREADS, else 1
int resolve_threads(int flag);
// runs fn(i) for i in [0, count) on a pool; rethrows the first failure by index
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

// analytic a Delta spectra of the built-in plain models (with multiplicity, ascending)
std::vector<double> analytic_spectrum(const Model& m, int count);
DiscreteManifold plain_mesh(const Model& m, const Resolution& res);

}  // namespace ym::exp
