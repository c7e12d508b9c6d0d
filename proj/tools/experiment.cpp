#include "experiment.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace ym::exp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string format_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v.get<double>());
    return buf;
  }
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

json parse_cell(const std::string& s) {
  if (s.empty()) return nullptr;
  if (s == "true") return true;
  if (s == "false") return false;
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end && *end == '\0') return x;
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// ------------------------------------------------------------ config access

template <class T>
T need(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

template <class T>
T opt(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

void positive(double x, const std::string& what) {
  if (!(x > 0)) throw ConfigError(what + " must be positive");
}

std::vector<double> t_grid(const json& cfg, double delta) {
  const auto ts = need<std::vector<double>>(cfg, "t_grid", "config");
  if (ts.empty()) throw ConfigError("t_grid is empty");
  for (size_t i = 0; i < ts.size(); ++i) {
    if (!(ts[i] > 0 && ts[i] < delta)) throw ConfigError("t_grid values must lie in (0, delta)");
    if (i > 0 && !(ts[i] > ts[i - 1])) throw ConfigError("t_grid must be strictly increasing");
  }
  return ts;
}

struct Pair {
  Model prime, dprime;
};

Pair models(const json& cfg) {
  const json& m = cfg.contains("models") ? cfg.at("models") : throw ConfigError("config: missing 'models'");
  return {Model::from_json(need<json>(m, "prime", "models")), Model::from_json(need<json>(m, "dprime", "models"))};
}

GlueParams family_at(const json& cfg, double t) {
  json f = need<json>(cfg, "family", "config");
  if (!f.is_object()) throw ConfigError("family must be an object");
  f["t"] = t;
  return GlueParams::from_json(f);
}

double family_delta(const json& cfg) {
  const json f = need<json>(cfg, "family", "config");
  return opt<double>(f, "delta", 0.45);
}

// builds every complex of the sweep up front so invalid combinations fail before any output
std::vector<ChartComplex> complexes(const json& cfg, const std::vector<double>& ts) {
  const Pair mp = models(cfg);
  std::vector<ChartComplex> out;
  for (double t : ts) out.push_back(ChartComplex::build(family_at(cfg, t), mp.prime, mp.dprime));
  return out;
}

Resolution resolution(const json& cfg, const RunOptions& o) {
  const std::string tag = o.resolution ? *o.resolution : opt<std::string>(cfg, "resolution", "default");
  return Resolution::from_tag(tag);
}

double positive_tolerance(const json& j, const std::string& key, const std::string& where) {
  const double v = need<double>(j, key, where);
  positive(v, where + "." + key);
  return v;
}

// ------------------------------------------------------------ outputs

// files written by a run; removed again when a config error surfaces late
class Outputs {
 public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) {}
  std::string path(const std::string& name) {
    std::lock_guard<std::mutex> lk(mu_);
    fs::create_directories(dir_);
    const std::string p = (fs::path(dir_) / name).string();
    written_.push_back(p);
    return p;
  }
  void write(const std::string& name, const std::string& text) {
    const std::string p = path(name);
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p);
    f << text;
  }
  void rollback() {
    std::lock_guard<std::mutex> lk(mu_);
    for (const auto& p : written_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    written_.clear();
  }
  // registers <name>.json and <name>.bin, returns the stem for export_manifold
  std::string stem(const std::string& name) {
    path(name + ".bin");
    const std::string j = path(name + ".json");
    return j.substr(0, j.size() - 5);
  }
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::vector<std::string> written_;
  std::mutex mu_;
};

struct Ctx {
  Ctx(const json& c, RunOptions opt, Outputs& files) : cfg(c), o(std::move(opt)), out(files) {}
  const json& cfg;
  RunOptions o;
  Outputs& out;
  std::string numerical;  // first numerical failure, if any
  std::mutex mu;
  void fail_numeric(const std::string& what) {
    std::lock_guard<std::mutex> lk(mu);
    if (numerical.empty()) numerical = what;
  }
};

using Rows = std::vector<std::vector<json>>;

// runs point(i) on the pool and appends the rows in index order
void gather(Ctx& c, Table& table, int count, const std::function<Rows(int)>& point) {
  std::vector<Rows> rows(count);
  parallel_for(count, c.o.threads, [&](int i) { rows[i] = point(i); });
  for (auto& rs : rows)
    for (auto& r : rs) table.add(std::move(r));
}

double rel(double a, double b) { return b != 0 ? std::abs(a - b) / std::abs(b) : std::abs(a); }

// ------------------------------------------------------------ runners

Table run_build(Ctx& c) {
  const json& cfg = c.cfg;
  const Resolution res = resolution(cfg, c.o);
  const bool do_export = opt<bool>(cfg, "export", false);
  Table table({"t", "family", "backend", "nodes", "volume", "model_volume", "eps_min", "eps_max", "eps_norm_n2",
               "overlap"});
  if (cfg.contains("model")) {
    const Model m = Model::from_json(cfg.at("model"));
    const DiscreteManifold dm = plain_mesh(m, res);
    table.add({nullptr, m.name(), backend_name(dm.backend), (long long)dm.size(), dm.volume(), num(m.volume()),
               dm.eps.minCoeff(), dm.eps.maxCoeff(), lq_norm(dm, dm.eps, dm.n / 2.0), nullptr});
    if (do_export) export_manifold(dm, c.out.stem("manifold"));
    return table;
  }
  const auto ts = t_grid(cfg, family_delta(cfg));
  const auto cxs = complexes(cfg, ts);
  const bool mirrored = opt<bool>(cfg, "mirrored", false);
  gather(c, table, (int)ts.size(), [&](int i) -> Rows {
    const ChartComplex& cx = cxs[i];
    const DiscreteManifold dm = assemble(cx, res, mirrored);
    double mv = cx.prime().volume();
    if (is_neck(cx.params().family)) mv += cx.dprime().volume();
    if (do_export) export_manifold(dm, c.out.stem("manifold_" + std::to_string(i)));
    return {{ts[i], family_name(cx.params().family), backend_name(dm.backend), (long long)dm.size(), dm.volume(),
             num(mv), dm.eps.minCoeff(), dm.eps.maxCoeff(), lq_norm(dm, dm.eps, dm.n / 2.0), cx.overlap_check(200)}};
  });
  return table;
}

Table run_curvature(Ctx& c) {
  const json& cfg = c.cfg;
  const auto ts = t_grid(cfg, family_delta(cfg));
  const auto cxs = complexes(cfg, ts);
  Table table({"t", "r_in", "r_out", "T2", "eps_sup", "eps_norm_n2", "eps_norm_2n_n2", "support_volume", "integral",
               "leading", "integral_ratio", "integral_residual", "overlap"});
  gather(c, table, (int)ts.size(), [&](int i) -> Rows {
    const ChartComplex& cx = cxs[i];
    const int n = cx.dim();
    const EpsNorms a = epsilon_norms(cx, n / 2.0);
    const EpsNorms b = epsilon_norms(cx, 2.0 * n / (n + 2.0));
    json integ = nullptr, lead = nullptr, ratio = nullptr, resid = nullptr;
    if (is_zero(cx.params().family)) {
      const CurvatureIntegral ci = total_curvature_integral(cx);
      const double L = ci.leading * ci.per_annulus.size();
      integ = ci.integral;
      lead = L;
      ratio = num(ci.integral / L);
      resid = num(std::abs(ci.integral - L));
    }
    return {{ts[i], cx.r_in(), cx.r_out(), cx.T2(), a.sup, a.norm, b.norm, b.support_volume, integ, lead, ratio,
             resid, cx.overlap_check(200)}};
  });
  return table;
}

Table run_sobolev(Ctx& c) {
  const json& cfg = c.cfg;
  const Resolution res = resolution(cfg, c.o);
  const auto seed = opt<uint64_t>(cfg, "seed", 1);
  const int iterations = need<int>(cfg, "iterations", "config");
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  Table table({"t", "nodes", "volume", "A_lower", "constant_ratio", "indicator_ratio", "best_seed", "diverged"});
  auto row = [&](const DiscreteManifold& dm, json t, bool glued) -> std::vector<json> {
    const SobolevEstimate se = sobolev_constant_estimate(dm, seed, iterations);
    std::string best;
    double bv = -1;
    for (const auto& [name, v] : se.seeds)
      if (v > bv) bv = v, best = name;
    return {t, (long long)dm.size(), dm.volume(), se.A_lower, se.constant_ratio,
            glued ? num(sobolev_ratio(dm, indicator_profile(dm))) : json(nullptr), best, se.diverged};
  };
  if (cfg.contains("model")) {
    const Model m = Model::from_json(cfg.at("model"));
    table.add(row(plain_mesh(m, res), nullptr, false));
    return table;
  }
  const auto ts = t_grid(cfg, family_delta(cfg));
  const auto cxs = complexes(cfg, ts);
  gather(c, table, (int)ts.size(), [&](int i) -> Rows { return {row(assemble(cxs[i], res), ts[i], true)}; });
  return table;
}

Table run_spectrum(Ctx& c) {
  const json& cfg = c.cfg;
  const Resolution res = resolution(cfg, c.o);
  const int count = need<int>(cfg, "count", "config");
  if (count < 1) throw ConfigError("count must be at least 1");
  EigenOptions eo;
  eo.sector = opt<int>(cfg, "sector", -1);
  eo.max_sector = opt<int>(cfg, "max_sector", 3);
  eo.tol = positive_tolerance(cfg, "tolerance", "config");
  std::optional<std::pair<double, double>> gap;
  if (cfg.contains("gap")) {
    const json& g = cfg.at("gap");
    gap = std::make_pair(need<double>(g, "center", "gap"), need<double>(g, "halfwidth", "gap"));
    if (gap->second < 0) throw ConfigError("gap halfwidth must be nonnegative");
  }
  Table table({"t", "index", "value", "sector", "residual", "analytic", "rel_error", "gap_holds", "gap_inside",
               "covered_upto"});
  auto rows = [&](const DiscreteManifold& dm, json t, const std::vector<double>& exact) -> Rows {
    const SpectrumReport rep = lowest_eigenpairs(dm, count, eo);
    if (!rep.converged) c.fail_numeric("eigensolver did not converge");
    GapVerdict gv;
    if (gap) gv = gap_check(rep, gap->first, gap->second);
    Rows out;
    for (size_t k = 0; k < rep.values.size() && k < size_t(count); ++k) {
      json an = nullptr, re = nullptr;
      if (k < exact.size()) {
        an = exact[k];
        re = exact[k] > 1e-12 ? num(rel(rep.values[k], exact[k])) : num(std::abs(rep.values[k]));
      }
      out.push_back({t, (long long)k, rep.values[k], rep.sector[k], num(rep.residuals[k]), an, re,
                     gap ? json(gv.holds) : json(nullptr), gap ? json((long long)gv.inside.size()) : json(nullptr),
                     num(rep.covered_upto)});
    }
    return out;
  };
  if (cfg.contains("model")) {
    const Model m = Model::from_json(cfg.at("model"));
    const bool analytic = opt<bool>(cfg, "analytic", true);
    for (auto& r : rows(plain_mesh(m, res), nullptr, analytic ? analytic_spectrum(m, count) : std::vector<double>{}))
      table.add(std::move(r));
    return table;
  }
  const auto ts = t_grid(cfg, family_delta(cfg));
  const auto cxs = complexes(cfg, ts);
  gather(c, table, (int)ts.size(), [&](int i) -> Rows { return rows(assemble(cxs[i], res), ts[i], {}); });
  return table;
}

// max relative deviation of beta from its constant value on the bulk of each side
void beta_profile(const DiscreteManifold& dm, const NeckEigenReport& ne, double& dev_p, double& dev_pp) {
  dev_p = 0;
  dev_pp = 0;
  for (Eigen::Index i = 0; i < dm.size(); ++i) {
    const Node& nd = dm.nodes[i];
    if (nd.chart != NodeChart::Grid && nd.chart != NodeChart::Bulk) continue;
    if (nd.side == 0) dev_p = std::max(dev_p, std::abs(ne.beta[i] - ne.c_prime) / ne.c_prime);
    else dev_pp = std::max(dev_pp, std::abs(ne.beta[i] + ne.c_dprime) / ne.c_dprime);
  }
}

NeckEigenOptions neck_options(const json& cfg) {
  NeckEigenOptions no;
  no.gamma = opt<double>(cfg, "gamma", 1.0);
  positive(no.gamma, "gamma");
  no.tol = positive_tolerance(cfg, "tolerance", "config");
  no.max_iter = opt<int>(cfg, "max_iterations", 100);
  no.require_balanced = opt<bool>(cfg, "require_balanced", true);
  return no;
}

Table run_neck(Ctx& c) {
  const json& cfg = c.cfg;
  const Resolution res = resolution(cfg, c.o);
  const auto ts = t_grid(cfg, family_delta(cfg));
  const auto cxs = complexes(cfg, ts);
  for (const auto& cx : cxs)
    if (cx.params().family != Family::ZeroNeck) throw ConfigError("neck-eig needs the ZeroNeck family");
  const NeckEigenOptions no = neck_options(cfg);
  const bool cross = opt<bool>(cfg, "crosscheck", true);
  Table table({"t", "nodes", "lambda_t", "lambda2", "rel_diff", "D0", "D1", "residual", "iterations", "converged",
               "int_beta", "int_ew", "c_prime", "c_dprime", "beta_dev_prime", "beta_dev_dprime"});
  gather(c, table, (int)ts.size(), [&](int i) -> Rows {
    const DiscreteManifold dm = assemble(cxs[i], res);
    const NeckEigenReport ne = neck_eigenvector(dm, no);
    if (!ne.converged) c.fail_numeric("neck eigenvector iteration did not converge at t = " + std::to_string(ts[i]));
    json l2 = nullptr, rd = nullptr;
    if (cross) {
      EigenOptions eo;
      eo.sector = 0;
      eo.shift = std::max(1e-3, ne.lambda);
      const SpectrumReport sp = lowest_eigenpairs(dm, 2, eo);
      if (!sp.converged) c.fail_numeric("eigensolver did not converge");
      if (sp.values.size() > 1) {
        l2 = sp.values[1];
        rd = num(rel(ne.lambda, sp.values[1]));
      }
    }
    double dp = 0, dpp = 0;
    beta_profile(dm, ne, dp, dpp);
    return {{ts[i], (long long)dm.size(), ne.lambda, l2, rd, ne.D0, ne.D1, ne.residual, ne.iterations, ne.converged,
             ne.int_beta, ne.int_ew, ne.c_prime, ne.c_dprime, dp, dpp}};
  });
  return table;
}

SolveConfig solve_config(const json& cfg) {
  const json s = need<json>(cfg, "solve", "config");
  positive_tolerance(s, "tolerance", "solve");
  need<int>(s, "max_iterations", "solve");
  return SolveConfig::from_json(s);
}

ZeroSolveConfig zero_config(const json& cfg) {
  const json z = need<json>(cfg, "zero", "config");
  ZeroSolveConfig zc;
  zc.tolerance = positive_tolerance(z, "tolerance", "zero");
  zc.max_iterations = need<int>(z, "max_iterations", "zero");
  zc.gate_tolerance = positive_tolerance(z, "gate_tolerance", "zero");
  zc.enforce_gate = opt<bool>(z, "enforce_gate", true);
  zc.paper_D0 = opt<bool>(z, "paper_D0", false);
  if (z.contains("mu")) zc.mu = need<double>(z, "mu", "zero");
  if (zc.max_iterations < 1) throw ConfigError("zero.max_iterations must be at least 1");
  return zc;
}

Table run_solve(Ctx& c) {
  const json& cfg = c.cfg;
  const Resolution res = resolution(cfg, c.o);
  const auto ts = t_grid(cfg, family_delta(cfg));
  const auto cxs = complexes(cfg, ts);
  const bool zero = is_zero(cxs.front().params().family);
  if (cxs.front().params().family == Family::HatNegZero) throw ConfigError("HatNegZero has no solver");
  SolveConfig sc;
  ZeroSolveConfig zc;
  NeckEigenOptions no;
  std::vector<ChartComplex> sources;
  if (zero) {
    zc = zero_config(cfg);
    if (cxs.front().params().family == Family::ZeroNeck) no = neck_options(need<json>(cfg, "neck", "config"));
  } else {
    sc = solve_config(cfg);
    if (cfg.contains("transplant")) {
      const json& tr = cfg.at("transplant");
      const Pair src = models(tr);
      for (double t : ts) {
        GlueParams gp = family_at(cfg, t);
        gp.nu = need<double>(tr, "nu", "transplant");
        sources.push_back(ChartComplex::build(gp, src.prime, src.dprime));
      }
    }
  }
  const bool fields = opt<bool>(cfg, "export_fields", false);
  Table table({"t", "nodes", "status", "converged", "iterations", "eps_norm_n2", "phi_norm", "W", "S_mean",
               "S_rel_std", "target", "residual_max", "fixed_point_gap", "min_psi", "positive", "certified",
               "has_root", "root", "contraction", "A", "B", "B_formula", "Q", "D0", "lambda_t", "rho_norm",
               "tau_norm", "beta_eps", "gate_value", "gate_passed", "max_orthogonality"});
  gather(c, table, (int)ts.size(), [&](int i) -> Rows {
    DiscreteManifold dm = assemble(cxs[i], res);
    SolveReport rep;
    json lam = nullptr;
    if (zero) {
      std::optional<NeckEigenReport> ne;
      if (cxs[i].params().family == Family::ZeroNeck) {
        ne = neck_eigenvector(dm, no);
        lam = ne->lambda;
      }
      rep = projected_solve_zero(dm, ne ? &*ne : nullptr, zc);
    } else {
      if (!sources.empty()) transplant_eps(dm, sources[i]);
      rep = run_iteration(dm, dm.eps, sc);
    }
    if (rep.status == "diverged" || rep.status == "not_converged")
      c.fail_numeric("solve " + rep.status + " at t = " + std::to_string(ts[i]));
    json j = rep.to_json(false);
    j["t"] = ts[i];
    c.out.write("solve_" + std::to_string(i) + "_report.json", j.dump(2) + "\n");
    if (fields && rep.S.size() == dm.size())
      export_manifold(dm, c.out.stem("solve_" + std::to_string(i) + "_fields"),
                      {{"phi", rep.phi}, {"psi", rep.psi}, {"S", rep.S}});
    const auto& d = rep.trace.diag;
    const double phin = rep.phi.size() ? sobolev_norm(dm, rep.phi) : nan();
    const bool z = rep.zero_case;
    return {{ts[i], (long long)dm.size(), rep.status, rep.converged, rep.iterations, d.s, num(phin),
             num(d.s > 0 ? phin / d.s : nan()), num(rep.S_mean), num(rep.S_mean != 0 ? rep.S_std / std::abs(rep.S_mean) : nan()),
             rep.target, num(rep.residual_max), num(rep.fixed_point_gap), num(rep.positivity.min_psi),
             rep.positivity.positive, rep.trace.certified, d.has_root, num(d.has_root ? d.root : nan()),
             num(d.has_root ? d.contraction : nan()), num(z ? nan() : d.A), num(z ? nan() : d.B),
             num(z ? nan() : d.B_formula), num(rep.Q), num(z ? rep.D0 : nan()), lam,
             num(z ? rep.rho_norm : nan()), num(z ? rep.tau_norm : nan()), num(z ? rep.beta_eps : nan()),
             num(z ? rep.gate_value : nan()), z ? json(rep.gate_passed) : json(nullptr),
             num(z ? rep.max_orthogonality : nan())}};
  });
  return table;
}

Table run_three(Ctx& c) {
  const json& cfg = c.cfg;
  const Resolution res = resolution(cfg, c.o);
  const Pair mp = models(cfg);
  const double t = need<double>(cfg, "t", "config");
  if (!(t > 0 && t < 0.45)) throw ConfigError("t must lie in (0, delta)");
  const SolveConfig sc = solve_config(cfg);
  const ThreeMetricsReport r = three_metrics(mp.prime, mp.dprime, t, res, sc);
  Table table({"t", "metric", "label", "status", "converged", "S_mean", "S_rel_std", "min_psi", "d_to_1", "d_to_2",
               "d_to_3", "swap_symmetry"});
  for (int k = 0; k < 3; ++k) {
    const SolveReport& s = r.metric[k];
    if (s.status == "diverged" || s.status == "not_converged") c.fail_numeric("metric " + r.label[k] + " " + s.status);
    table.add({t, k + 1, r.label[k], s.status, s.converged, num(s.S_mean),
               num(s.S_mean != 0 ? s.S_std / std::abs(s.S_mean) : nan()), num(s.positivity.min_psi),
               num(r.distance[k][0]), num(r.distance[k][1]), num(r.distance[k][2]), num(r.swap_symmetry)});
  }
  c.out.write("three_metrics.json", r.to_json().dump(2) + "\n");
  return table;
}

Table run_mass(Ctx& c) {
  const json& cfg = c.cfg;
  const json list = need<json>(cfg, "models", "config");
  if (!list.is_array() || list.empty()) throw ConfigError("mass-fit needs a non-empty array of models");
  const json radii = need<json>(cfg, "radii", "config");
  const double rmin = need<double>(radii, "min", "radii"), rmax = need<double>(radii, "max", "radii");
  const int count = need<int>(radii, "count", "radii");
  if (!(rmin > 0 && rmax > rmin) || count < 4) throw ConfigError("radii need 0 < min < max and count >= 4");
  std::vector<Model> ms;
  for (const auto& j : list) ms.push_back(Model::from_json(j));
  const bool green = cfg.contains("green");
  const Resolution res = green ? Resolution::from_tag(c.o.resolution ? *c.o.resolution
                                                                     : need<std::string>(cfg.at("green"), "resolution", "green"))
                               : Resolution{};
  Table table({"model", "mu_model", "mu_fit", "c_fit", "fit_residual", "used", "mu_rel_error", "pole_fit",
               "pole_expected", "pole_rel_error"});
  gather(c, table, (int)ms.size(), [&](int i) -> Rows {
    const Model& m = ms[i];
    json mass = {nullptr, nullptr, nullptr, nullptr, nullptr, nullptr};
    if (m.has_stereographic()) {
      std::vector<std::pair<double, double>> samples;
      for (int k = 0; k < count; ++k) {
        const double rho = rmin * std::pow(rmax / rmin, double(k) / (count - 1));
        samples.emplace_back(rho, m.stereo_value(rho, 0.0));
      }
      const MassFit f = extract_mass(samples, make_constants(m.dim()));
      mass = {m.mass(), f.mu, f.c, f.residual, f.used, num(rel(f.mu, m.mass()))};
    }
    json pf = nullptr, pe = nullptr, pr = nullptr;
    if (green && (m.kind() == Model::Kind::FlatTorus || m.kind() == Model::Kind::ProductSphere)) {
      const DiscreteManifold dm = plain_mesh(m, res);
      const Eigen::Index node = m.kind() == Model::Kind::FlatTorus ? nearest_node(dm, NodeChart::Grid, 0, 0, 0)
                                                                   : nearest_node(dm, NodeChart::Bulk, 0, 0);
      const GreenResult g = green_function(dm, node, m.kind() == Model::Kind::FlatTorus ? GreenMode::MeanCorrected
                                                                                          : GreenMode::APlusS);
      pf = g.pole_coefficient;
      pe = g.pole_expected;
      pr = rel(g.pole_coefficient, g.pole_expected);
    }
    return {{m.name(), mass[0], mass[1], mass[2], mass[3], mass[4], mass[5], pf, pe, pr}};
  });
  return table;
}

}  // namespace

// ------------------------------------------------------------ public pieces

SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ConfigError("slope fit: x and y differ in length");
  if (x.size() < 3) throw ConfigError("slope fit needs at least 3 records");
  const size_t m = x.size();
  std::vector<double> lx(m), ly(m);
  for (size_t i = 0; i < m; ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw ConfigError("slope fit needs positive values");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / m;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / m;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < m; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0) throw ConfigError("slope fit needs distinct x values");
  SlopeFit f;
  f.points = (int)m;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  const double sse = std::max(0.0, syy - f.slope * sxy);
  f.r2 = syy > 0 ? 1 - sse / syy : 1;
  if (m > 2) {
    const double se = std::sqrt(sse / (m - 2) / sxx);
    boost::math::students_t dist(double(m - 2));
    const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
    f.ci_low = f.slope - q * se;
    f.ci_high = f.slope + q * se;
  }
  return f;
}

void Table::add(std::vector<json> row) {
  if (row.size() != columns_.size()) throw Error("table row has the wrong number of cells");
  rows_.push_back(std::move(row));
}

int Table::index(const std::string& column) const {
  for (size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i] == column) return (int)i;
  return -1;
}

std::vector<double> Table::numbers(const std::string& column) const {
  const int k = index(column);
  if (k < 0) throw ConfigError("no column '" + column + "'");
  std::vector<double> v;
  for (const auto& r : rows_) {
    const json& c = r[k];
    if (c.is_boolean()) v.push_back(c.get<bool>() ? 1 : 0);
    else if (c.is_number()) v.push_back(c.get<double>());
    else v.push_back(nan());
  }
  return v;
}

void Table::sort_by(const std::string& column) {
  const int k = index(column);
  if (k < 0) return;
  std::stable_sort(rows_.begin(), rows_.end(), [k](const auto& a, const auto& b) {
    const double x = a[k].is_number() ? a[k].template get<double>() : -1;
    const double y = b[k].is_number() ? b[k].template get<double>() : -1;
    return x < y;
  });
}

std::string Table::csv() const {
  std::string s;
  for (size_t i = 0; i < columns_.size(); ++i) s += (i ? "," : "") + columns_[i];
  s += "\n";
  for (const auto& r : rows_) {
    for (size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + format_cell(r[i]);
    s += "\n";
  }
  return s;
}

Table Table::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty CSV");
  Table t(split_csv_line(line));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<json> row;
    for (const auto& cell : split_csv_line(line)) row.push_back(parse_cell(cell));
    if (row.size() != t.columns_.size()) throw ConfigError("CSV row has the wrong number of cells");
    t.rows_.push_back(std::move(row));
  }
  return t;
}

Expectation Expectation::from_json(const json& j) {
  Expectation e;
  e.kind = need<std::string>(j, "kind", "expectation");
  e.field = need<std::string>(j, "field", "expectation");
  e.name = opt<std::string>(j, "name", e.kind + ":" + e.field);
  e.x = opt<std::string>(j, "x", std::string("t"));
  if (j.contains("min")) e.min = need<double>(j, "min", "expectation");
  if (j.contains("max")) e.max = need<double>(j, "max", "expectation");
  if (j.contains("x_min")) e.x_min = need<double>(j, "x_min", "expectation");
  if (j.contains("x_max")) e.x_max = need<double>(j, "x_max", "expectation");
  static const std::vector<std::string> kinds = {"slope", "max_over_min", "max", "min", "mean", "all_true"};
  if (std::find(kinds.begin(), kinds.end(), e.kind) == kinds.end())
    throw ConfigError("unknown expectation kind '" + e.kind + "'");
  if (e.kind != "all_true" && !e.min && !e.max) throw ConfigError("expectation '" + e.name + "' needs min or max");
  return e;
}

json Verdict::to_json() const {
  json j = {{"name", name}, {"kind", kind}, {"field", field}, {"value", num(value)}, {"pass", pass}};
  j["min"] = min ? json(*min) : json(nullptr);
  j["max"] = max ? json(*max) : json(nullptr);
  if (!fit.is_null()) j["fit"] = fit;
  return j;
}

Verdict evaluate(const Expectation& e, const Table& t) {
  Verdict v{e.name, e.kind, e.field, nan(), e.min, e.max, false, nullptr};
  const std::vector<double> ys = t.numbers(e.field);
  std::vector<double> xs;
  const bool need_x = e.kind == "slope" || e.x_min || e.x_max;
  if (need_x) xs = t.numbers(e.x);
  std::vector<double> X, Y;
  for (size_t i = 0; i < ys.size(); ++i) {
    if (!std::isfinite(ys[i])) continue;  // empty cells
    if (need_x) {
      if (!std::isfinite(xs[i])) continue;
      if (e.x_min && xs[i] < *e.x_min) continue;
      if (e.x_max && xs[i] > *e.x_max) continue;
      X.push_back(xs[i]);
    }
    Y.push_back(ys[i]);
  }
  const bool finite = !Y.empty() && std::all_of(Y.begin(), Y.end(), [](double y) { return std::isfinite(y); });
  if (e.kind == "all_true") {
    if (Y.empty()) return v;
    v.value = double(std::count(Y.begin(), Y.end(), 1.0)) / Y.size();
    v.pass = v.value == 1.0;
    return v;
  }
  if (!finite) return v;
  if (e.kind == "slope") {
    try {
      const SlopeFit f = fit_slope(X, Y);
      v.value = f.slope;
      v.fit = {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"ci_low", f.ci_low},
               {"ci_high", f.ci_high}, {"points", f.points}};
    } catch (const ConfigError& err) {
      v.fit = {{"error", err.what()}};
      return v;
    }
  } else if (e.kind == "max_over_min") {
    const auto [lo, hi] = std::minmax_element(Y.begin(), Y.end());
    if (!(*lo > 0)) return v;
    v.value = *hi / *lo;
  } else if (e.kind == "max") {
    v.value = *std::max_element(Y.begin(), Y.end());
  } else if (e.kind == "min") {
    v.value = *std::min_element(Y.begin(), Y.end());
  } else {
    v.value = std::accumulate(Y.begin(), Y.end(), 0.0) / Y.size();
  }
  v.pass = (!e.min || v.value >= *e.min) && (!e.max || v.value <= *e.max);
  return v;
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s = {"build",         "curvature-sweep", "sobolev-sweep",
                                             "spectrum",      "neck-eig",        "solve",
                                             "three-metrics", "mass-fit",        "report"};
  return s;
}

std::string config_hash(const json& config) {
  // FNV-1a over the canonical dump, stable across platforms
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("YAMABE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int w = std::max(1, std::min(threads, count));
  if (w == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < w; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<double> analytic_spectrum(const Model& m, int count) {
  const int n = m.dim();
  const double a = make_constants(n).a;
  std::vector<double> v;
  auto binom = [](int top, int k) {
    if (top < k || k < 0) return 0.0;
    double r = 1;
    for (int i = 1; i <= k; ++i) r = r * (top - k + i) / i;
    return r;
  };
  switch (m.kind()) {
    case Model::Kind::FlatTorus: {
      const double w = 2 * M_PI / m.torus_side();
      const int K = 1 + (int)std::ceil(std::pow(count, 1.0 / n));
      std::vector<int> k(n, -K);
      while (true) {
        double s = 0;
        for (int x : k) s += x * x;
        v.push_back(a * w * w * s);
        int d = 0;
        while (d < n && ++k[d] > K) k[d++] = -K;
        if (d == n) break;
      }
      break;
    }
    case Model::Kind::ProductSphere: {
      const double R = m.radius(), w = 2 * M_PI / m.length();
      const int K = count + 2;
      for (int l = 0; l <= K; ++l) {
        const int mult = (int)(binom(l + n - 1, n - 1) - binom(l + n - 3, n - 1));
        for (int q = -K; q <= K; ++q)
          for (int r = 0; r < mult; ++r) v.push_back(a * (l * (l + n - 2) / (R * R) + w * w * q * q));
      }
      break;
    }
    case Model::Kind::RoundSphere: {
      const double rho2 = n * (n - 1) / m.sphere_curvature();
      for (int k = 0; k <= count + 1; ++k) {
        const int mult = (int)(binom(k + n, n) - binom(k + n - 2, n));
        for (int r = 0; r < mult; ++r) v.push_back(a * k * (k + n - 1) / rho2);
      }
      break;
    }
    default:
      throw ConfigError("no analytic spectrum for " + m.name());
  }
  std::sort(v.begin(), v.end());
  if ((int)v.size() > count) v.resize(count);
  return v;
}

DiscreteManifold plain_mesh(const Model& m, const Resolution& res) {
  switch (m.kind()) {
    case Model::Kind::FlatTorus:
      if (m.dim() != 3) throw ConfigError("torus meshes are three-dimensional");
      return flat_torus_mesh(m.torus_side(), res);
    case Model::Kind::ProductSphere: return product_sphere_mesh(m.dim(), m.radius(), m.length(), res);
    case Model::Kind::RoundSphere: return round_sphere_mesh(m.dim(), m.sphere_curvature(), res);
    default: throw ConfigError("no standalone mesh for " + m.name());
  }
}

// ------------------------------------------------------------ driver

namespace {

RunResult run_report(const json& cfg, const RunOptions& o) {
  const auto inputs = need<std::vector<std::string>>(cfg, "inputs", "config");
  if (inputs.empty()) throw ConfigError("report needs at least one input directory");
  struct Src {
    std::string dir;
    json summary;
    Table table{{}};
  };
  std::vector<Src> srcs;
  for (const auto& d : inputs) {
    std::ifstream sf(fs::path(d) / "summary.json");
    if (!sf) throw ConfigError("no summary.json in " + d);
    Src s{d, json::parse(sf, nullptr, false)};
    if (s.summary.is_discarded() || !s.summary.contains("csv")) throw ConfigError("unreadable summary in " + d);
    std::ifstream cf(fs::path(d) / s.summary.at("csv").get<std::string>());
    if (!cf) throw ConfigError("missing CSV in " + d);
    std::stringstream ss;
    ss << cf.rdbuf();
    s.table = Table::from_csv(ss.str());
    srcs.push_back(std::move(s));
  }
  Table out({"source", "experiment", "expectation", "kind", "field", "value", "min", "max", "pass",
             "matches_summary"});
  bool all = true;
  for (const auto& s : srcs) {
    const json exps = s.summary.value("expectations", json::array());
    const json given = s.summary.value("verdicts", json::array());
    for (size_t i = 0; i < exps.size(); ++i) {
      const Verdict v = evaluate(Expectation::from_json(exps[i]), s.table);
      const bool same = i < given.size() && given[i].value("pass", !v.pass) == v.pass;
      all = all && v.pass;
      out.add({s.dir, s.summary.value("experiment", ""), v.name, v.kind, v.field, num(v.value),
               v.min ? json(*v.min) : json(nullptr), v.max ? json(*v.max) : json(nullptr), v.pass, same});
    }
  }
  Outputs files(o.out_dir);
  files.write("report.csv", out.csv());
  RunResult r;
  r.summary = {{"experiment", "report"}, {"config_hash", config_hash(cfg)}, {"config", cfg}, {"csv", "report.csv"},
               {"rows", out.rows().size()}, {"passed", all}};
  files.write("summary.json", r.summary.dump(2) + "\n");
  r.exit_code = all ? kOk : kExpectationFailed;
  return r;
}

}  // namespace

RunResult run(const std::string& sub, const json& cfg, const RunOptions& o) {
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  if (cfg.contains("experiment") && cfg.at("experiment") != sub)
    throw ConfigError("config is for '" + cfg.at("experiment").dump() + "', not '" + sub + "'");
  if (std::find(subcommands().begin(), subcommands().end(), sub) == subcommands().end())
    throw ConfigError("unknown experiment '" + sub + "'");
  if (sub == "report") return run_report(cfg, o);

  std::vector<Expectation> exps;
  for (const auto& j : cfg.value("expectations", json::array())) exps.push_back(Expectation::from_json(j));

  Outputs files(o.out_dir);
  Ctx c(cfg, o, files);
  static const std::map<std::string, Table (*)(Ctx&)> runners = {
      {"build", run_build},       {"curvature-sweep", run_curvature}, {"sobolev-sweep", run_sobolev},
      {"spectrum", run_spectrum}, {"neck-eig", run_neck},             {"solve", run_solve},
      {"three-metrics", run_three}, {"mass-fit", run_mass}};
  std::optional<Table> table;
  try {
    table = runners.at(sub)(c);
  } catch (const ConfigError&) {
    files.rollback();
    throw;
  }
  table->sort_by("t");

  // every record carries the config hash
  const std::string hash = config_hash(cfg);
  std::vector<std::string> cols = table->columns();
  cols.push_back("config_hash");
  Table final(cols);
  for (auto row : table->rows()) {
    row.push_back(hash);
    final.add(std::move(row));
  }
  for (const auto& e : exps)
    if (final.index(e.field) < 0 || (e.kind == "slope" && final.index(e.x) < 0)) {
      files.rollback();
      throw ConfigError("expectation '" + e.name + "' refers to a missing column");
    }

  std::string stem = sub;
  std::replace(stem.begin(), stem.end(), '-', '_');
  const std::string csv_name = stem + ".csv";
  files.write(csv_name, final.csv());

  RunResult r;
  json verdicts = json::array(), ejs = json::array();
  bool all = true;
  for (size_t i = 0; i < exps.size(); ++i) {
    const Verdict v = evaluate(exps[i], final);
    all = all && v.pass;
    verdicts.push_back(v.to_json());
    ejs.push_back(cfg.at("expectations")[i]);
  }
  r.summary = {{"experiment", sub},
               {"config_hash", hash},
               {"config", cfg},
               {"resolution", o.resolution ? json(*o.resolution) : cfg.value("resolution", json("default"))},
               {"csv", csv_name},
               {"rows", final.rows().size()},
               {"expectations", ejs},
               {"verdicts", verdicts},
               {"passed", all}};
  if (!c.numerical.empty()) {
    r.summary["error"] = {{"code", kNumericalFailure}, {"kind", "numerical"}, {"message", c.numerical}};
    r.exit_code = kNumericalFailure;
  } else {
    r.exit_code = all ? kOk : kExpectationFailed;
  }
  files.write("summary.json", r.summary.dump(2) + "\n");
  return r;
}

}  // namespace ym::exp
