#include "yamabe/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

namespace ym {

namespace {

Field f_of(const Field& x, const Constants& C) {
  Field out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = nonlinearity_f(x[i], C);
  return out;
}

nlohmann::json vec_json(const Field& f) { return std::vector<double>(f.data(), f.data() + f.size()); }

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

// ---------------------------------------------------------------- config

void SolveConfig::validate() const {
  if (!(nu == 1 || nu == -1)) throw ConfigError("solve nu must be +1 or -1 (the zero case has its own solver)");
  if (!(tolerance > 0)) throw ConfigError("tolerance must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  if (!(gamma > 0)) throw ConfigError("gamma must be positive");
  if (!(ceiling > 0)) throw ConfigError("ceiling must be positive");
  if (A < 0 || B < 0) throw ConfigError("A and B must be nonnegative");
}

nlohmann::json SolveConfig::to_json() const {
  return {{"nu", nu},
          {"gamma", gamma},
          {"max_iterations", max_iterations},
          {"tolerance", tolerance},
          {"positivity", positivity == PositivityPolicy::Fail ? "fail" : "report"},
          {"ceiling", ceiling},
          {"A", A},
          {"B", B},
          {"diagnostics", diagnostics}};
}

SolveConfig SolveConfig::from_json(const nlohmann::json& j) {
  SolveConfig c;
  try {
    c.nu = j.value("nu", c.nu);
    c.gamma = j.value("gamma", c.gamma);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.tolerance = j.value("tolerance", c.tolerance);
    const std::string pol = j.value("positivity", std::string("fail"));
    if (pol == "fail") c.positivity = PositivityPolicy::Fail;
    else if (pol == "report") c.positivity = PositivityPolicy::Report;
    else throw ConfigError("positivity policy must be fail or report");
    c.ceiling = j.value("ceiling", c.ceiling);
    c.A = j.value("A", c.A);
    c.B = j.value("B", c.B);
    c.diagnostics = j.value("diagnostics", c.diagnostics);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad solve config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json ZeroSolveConfig::to_json() const {
  nlohmann::json j = {{"max_iterations", max_iterations},
                      {"tolerance", tolerance},
                      {"gate_tolerance", gate_tolerance},
                      {"enforce_gate", enforce_gate},
                      {"paper_D0", paper_D0}};
  if (mu) j["mu"] = *mu;
  return j;
}

// ---------------------------------------------------------------- T and constants

TMap::TMap(const DiscreteManifold& dm, const Field& eps, double nu)
    : dm_(dm), eps_(eps), nu_(nu), op_(dm, -nu * dm.C.b) {
  if (eps.size() != dm.size()) throw ConfigError("eps has the wrong length");
}

Field TMap::operator()(const Field& eta) const {
  const Field rhs = eps_ + eps_.cwiseProduct(eta) + nu_ * f_of(eta, dm_.C);
  return op_.solve(rhs);
}

Field apply_T(const DiscreteManifold& dm, const Field& eta, const Field& eps, double nu) {
  return TMap(dm, eps, nu)(eta);
}

double ContractionDiagnostics::chi(double x, int n) const {
  return F0 * s + F1 * s * x + F2 * x * x + F3 * std::pow(x, (n + 2.0) / (n - 2.0));
}

nlohmann::json ContractionDiagnostics::to_json() const {
  return {{"s", s},   {"A", A},   {"B", B},   {"B_formula", B_formula}, {"X", X},   {"F0", F0},
          {"F1", F1}, {"F2", F2}, {"F3", F3}, {"F4", F4}, {"F5", F5},
          {"has_root", has_root}, {"root", has_root ? root : nan()}, {"contraction", has_root ? contraction : nan()}};
}

ContractionDiagnostics contraction_diagnostics(const DiscreteManifold& dm, const Field& eps, double A, double B,
                                               double ceiling) {
  const int n = dm.n;
  ContractionDiagnostics d;
  d.s = lq_norm(dm, eps, n / 2.0);
  d.A = A;
  d.B = B;
  d.X = dm.volume();
  const LipschitzF L = lipschitz_constants(dm.C);
  d.F4 = L.F4;
  d.F5 = L.F5;
  d.F0 = B * std::pow(d.X, (n - 2.0) / (2.0 * n));
  d.F1 = A * B;
  d.F2 = A * A * B * d.F4 * std::pow(d.X, (6.0 - n) / (2.0 * n));
  d.F3 = std::pow(A, (n + 2.0) / (n - 2.0)) * B * d.F5;
  auto g = [&](double x) { return x - 2 * d.chi(x, n); };
  if (d.s == 0) {
    d.has_root = true;
    d.root = 0;
  } else {
    const int N = 4000;
    double prev = 0;
    for (int i = 0; i <= N; ++i) {
      const double x = ceiling * std::pow(10.0, -14.0 * (N - i) / N);
      if (g(x) >= 0) {
        double lo = prev, hi = x;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          (g(mid) >= 0 ? hi : lo) = mid;
        }
        d.has_root = true;
        d.root = hi;
        break;
      }
      prev = x;
    }
  }
  if (d.has_root) d.contraction = d.F1 * d.s + 2 * d.F2 * d.root + 2 * d.F3 * std::pow(d.root, 4.0 / (n - 2));
  return d;
}

double estimate_inverse_bound(const DiscreteManifold& dm, double nu, const Field& eps) {
  ShiftedOperator op(dm, -nu * dm.C.b);
  const double q = 2.0 * dm.n / (dm.n + 2.0);
  auto ratio = [&](const Field& rhs, Field* out) {
    const Field x = op.solve(rhs);
    if (out) *out = x;
    const double den = lq_norm(dm, rhs, q);
    return den > 0 ? sobolev_norm(dm, x) / den : 0.0;
  };
  double B = ratio(Field::Ones(dm.size()), nullptr);
  if (eps.cwiseAbs().maxCoeff() > 0) B = std::max(B, ratio(eps, nullptr));
  // inverse power iteration drifts to the eigenmode closest to nu b
  Field x(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i) x[i] = std::sin(0.37 * i + 1.1) + 0.3 * std::cos(2.9 * i);
  for (int it = 0; it < 8; ++it) {
    Field y;
    B = std::max(B, ratio(x, &y));
    const double nrm = std::sqrt(dm.M.dot(y.cwiseAbs2()));
    if (!(nrm > 0)) break;
    x = y / nrm;
  }
  return B;
}

// ---------------------------------------------------------------- traces and verdicts

nlohmann::json IterationTrace::to_json() const {
  return {{"diagnostics", diag.to_json()},
          {"norms", norms},
          {"increments", increments},
          {"increment_ratios", increment_ratios},
          {"certified", certified},
          {"induction_violations", induction_violations},
          {"W_empirical", W_empirical}};
}

nlohmann::json PositivityVerdict::to_json() const {
  return {{"positive", positive}, {"min_psi", min_psi}, {"xi_p", xi_p},
          {"support_volume", support_volume}, {"F6", F6}, {"F7", F7}, {"bound_consistent", bound_consistent}};
}

PositivityVerdict positivity_check(const DiscreteManifold& dm, const Field& psi, double nu, double A, double Y) {
  if (psi.size() != dm.size()) throw ConfigError("psi has the wrong length");
  PositivityVerdict v;
  v.min_psi = psi.minCoeff();
  v.positive = v.min_psi > 0;
  const double a = dm.C.a;
  v.F6 = A > 0 ? a / (A * A) : nan();
  v.F7 = std::max(a - nu + Y, 0.0);
  if (v.positive) return v;
  const Field xi = psi.cwiseMin(0.0);
  v.xi_p = lq_norm(dm, xi, dm.C.p);
  for (Eigen::Index i = 0; i < dm.size(); ++i)
    if (psi[i] <= 0) v.support_volume += dm.M[i];
  const double lhs = std::pow(v.xi_p, 4.0 / (dm.n - 2));
  v.bound_consistent = A > 0 && lhs >= v.F6 - v.F7 * std::pow(v.support_volume, 2.0 / dm.n);
  return v;
}

void achieved_curvature(const DiscreteManifold& dm, const Field& psi, const Field& S_bg, Field& S, double& mean,
                        double& stddev) {
  const Constants& C = dm.C;
  const Field lap = (dm.K * psi).cwiseQuotient(dm.M);
  S.resize(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i)
    S[i] = std::pow(std::abs(psi[i]), 1 - C.p) * (C.a * lap[i] + S_bg[i] * psi[i]);
  const Field w = dm.M.cwiseProduct(psi.cwiseAbs().array().pow(C.p).matrix());
  const double W = w.sum();
  mean = S.dot(w) / W;
  stddev = std::sqrt(w.dot((S.array() - mean).square().matrix()) / W);
}

void achieved_curvature(const DiscreteManifold& dm, const Field& psi, Field& S, double& mean, double& stddev) {
  achieved_curvature(dm, psi, dm.S(), S, mean, stddev);
}

namespace {

void finish_report(const DiscreteManifold& dm, SolveReport& rep, const Field& S_bg, double target) {
  rep.psi = Field::Ones(dm.size()) + rep.phi;
  rep.target = target;
  achieved_curvature(dm, rep.psi, S_bg, rep.S, rep.S_mean, rep.S_std);
  const Field M = dm.M;
  const SpMat& K = dm.K;
  const Field res = yamabe_residual(dm.C, rep.psi, S_bg, target,
                                    [&](const Field& x) { return Field((K * x).cwiseQuotient(M)); });
  rep.residual_max = res.cwiseAbs().maxCoeff();
  const Field w = dm.M.cwiseProduct(rep.psi.cwiseAbs().array().pow(dm.C.p).matrix());
  rep.Q = hilbert_action(dm.C, rep.S, w);
}

}  // namespace

SolveReport run_iteration(const DiscreteManifold& dm, const Field& eps, const SolveConfig& cfg) {
  cfg.validate();
  if (eps.size() != dm.size()) throw ConfigError("eps has the wrong length");
  const int n = dm.n;
  SolveReport rep;
  TMap T(dm, eps, cfg.nu);

  double A = cfg.A, B = cfg.B;
  if (cfg.diagnostics) {
    if (A == 0) A = sobolev_constant_estimate(dm).A_lower;
    if (B == 0) B = estimate_inverse_bound(dm, cfg.nu, eps);
    rep.trace.diag = contraction_diagnostics(dm, eps, A, B, cfg.ceiling);
    const double a = dm.C.a, b = dm.C.b;
    rep.trace.diag.B_formula = cfg.nu < 0 ? A / b : (a + b + cfg.gamma) * A / (a * cfg.gamma);
  } else {
    rep.trace.diag.s = lq_norm(dm, eps, n / 2.0);
  }
  const ContractionDiagnostics& d = rep.trace.diag;

  Field prev = Field::Zero(dm.size());
  Field phi = prev;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    phi = T(prev);
    rep.iterations = it;
    const double nrm = sobolev_norm(dm, phi);
    const double inc = sobolev_norm(dm, phi - prev);
    if (!rep.trace.increments.empty() && rep.trace.increments.back() > 0)
      rep.trace.increment_ratios.push_back(inc / rep.trace.increments.back());
    rep.trace.norms.push_back(nrm);
    rep.trace.increments.push_back(inc);
    if (d.has_root && nrm > d.root * (1 + 1e-9)) ++rep.trace.induction_violations;
    if (!phi.allFinite() || nrm > cfg.ceiling) {
      rep.status = "diverged";
      break;
    }
    prev = phi;
    if (inc <= cfg.tolerance * nrm || inc == 0) {
      rep.converged = true;
      break;
    }
  }
  if (rep.status != "diverged" && !rep.converged) rep.status = "not_converged";
  rep.phi = phi;
  if (rep.status == "diverged") {
    rep.psi = Field::Ones(dm.size()) + phi;
    return rep;
  }
  rep.fixed_point_gap = sobolev_norm(dm, phi - T(phi));
  const Field S_bg = Field::Constant(dm.size(), cfg.nu) - eps;
  finish_report(dm, rep, S_bg, cfg.nu);
  rep.trace.W_empirical = d.s > 0 ? rep.trace.norms.back() / d.s : 0;
  rep.trace.certified = d.has_root && rep.trace.induction_violations == 0 && rep.converged;
  rep.positivity = positivity_check(dm, rep.psi, cfg.nu, A, eps.maxCoeff());
  if (!rep.positivity.positive && cfg.positivity == PositivityPolicy::Fail) rep.status = "nonpositive";
  return rep;
}

// ---------------------------------------------------------------- zero case

double measured_graft_mass(const ChartComplex& cx) {
  const Model& m = cx.dprime();
  if (!m.has_stereographic()) throw ConfigError("M'' has no stereographic projection");
  std::vector<std::pair<double, double>> samples;
  for (int i = 0; i <= 60; ++i) {
    const double rho = std::pow(10.0, 1.0 + 2.0 * i / 60);
    samples.emplace_back(rho, m.stereo_value(rho, 0.0));
  }
  return extract_mass(samples, cx.constants()).mu;
}

double zero_target_constant(const DiscreteManifold& dm, bool paper_D0, double mu) {
  if (!dm.complex) throw ConfigError("zero-case target needs a glued manifold");
  const int n = dm.n;
  const double base = (n - 2) * sphere_area(n) * mu / dm.complex->prime().volume();
  return paper_D0 ? base : dm.C.a * base;
}

SolveReport projected_solve_zero(const DiscreteManifold& dm, const NeckEigenReport* neck, const ZeroSolveConfig& cfg) {
  if (!dm.complex) throw ConfigError("the zero-case solve needs a glued manifold");
  const ChartComplex& cx = *dm.complex;
  const Family fam = cx.params().family;
  if (fam != Family::ZeroGraft && fam != Family::ZeroNeck)
    throw ConfigError("projected solve needs a ZeroGraft or ZeroNeck family");
  if (fam == Family::ZeroNeck && neck == nullptr) throw ConfigError("ZeroNeck needs the neck eigenvector report");
  if (!(cfg.tolerance > 0) || cfg.max_iterations < 1 || !(cfg.gate_tolerance > 0))
    throw ConfigError("bad zero-case solve settings");
  const int n = dm.n;
  const double t = cx.params().t;
  const Constants& C = dm.C;

  SolveReport rep;
  rep.zero_case = true;
  const double mu = fam == Family::ZeroNeck ? 1.0 : (cfg.mu ? *cfg.mu : measured_graft_mass(cx));
  rep.D0 = zero_target_constant(dm, cfg.paper_D0, mu);
  const double kappa = rep.D0 * std::pow(t, n - 2);
  const Field& eps = dm.eps;
  const Field eta = eps.array() - kappa;

  // basis of P, M-orthonormalized
  Eigen::MatrixXd P(dm.size(), fam == Family::ZeroNeck ? 2 : 1);
  P.col(0).setOnes();
  if (fam == Family::ZeroNeck) {
    if (neck->beta.size() != dm.size()) throw ConfigError("neck eigenvector belongs to another manifold");
    P.col(1) = neck->beta;
  }
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    for (Eigen::Index k = 0; k < j; ++k) P.col(j) -= dm.M.dot(P.col(j).cwiseProduct(P.col(k))) * P.col(k);
    P.col(j) /= std::sqrt(dm.M.dot(P.col(j).cwiseAbs2()));
  }
  auto project = [&](const Field& x) {
    Field r = Field::Zero(x.size());
    for (Eigen::Index j = 0; j < P.cols(); ++j) r += dm.M.dot(x.cwiseProduct(P.col(j))) * P.col(j);
    return r;
  };

  const double int_eps = dm.M.dot(eps);
  rep.pi_eta_const = std::abs(dm.M.dot(eta));
  if (fam == Family::ZeroNeck) {
    const Field& beta = neck->beta;
    rep.beta_eps = dm.M.dot(beta.cwiseProduct(eps));
    const double coef = dm.M.dot(beta.cwiseProduct(eta)) / dm.M.dot(beta.cwiseAbs2());
    rep.pi_eta_beta = std::abs(coef) * dm.M.dot(beta.cwiseAbs());
    rep.gate_value = int_eps != 0 ? std::abs(rep.beta_eps) / std::abs(int_eps) : 0;
    rep.gate_passed = rep.gate_value <= cfg.gate_tolerance;
  }
  const Field S_bg = -eps;
  if (!rep.gate_passed && cfg.enforce_gate) {
    rep.status = "gate_failed";
    rep.phi = Field::Zero(dm.size());
    rep.rho = rep.phi;
    rep.tau = rep.phi;
    finish_report(dm, rep, S_bg, -kappa);
    return rep;
  }

  ShiftedOperator op(dm, C.b * kappa);
  Field prev = Field::Zero(dm.size());
  Field phi = prev;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Field rhs = eta + eta.cwiseProduct(prev) - kappa * f_of(prev, C);
    phi = op.solve(rhs);
    rep.iterations = it;
    const Field rho = project(phi);
    const Field tau = phi - rho;
    const double tn = std::sqrt(dm.M.dot(tau.cwiseAbs2()));
    for (Eigen::Index j = 0; j < P.cols(); ++j)
      if (tn > 0) rep.max_orthogonality = std::max(rep.max_orthogonality, std::abs(dm.M.dot(tau.cwiseProduct(P.col(j)))) / tn);
    rep.rho_norms.push_back(sobolev_norm(dm, rho));
    rep.tau_norms.push_back(sobolev_norm(dm, tau));
    const double nrm = sobolev_norm(dm, phi);
    const double inc = sobolev_norm(dm, phi - prev);
    if (!rep.trace.increments.empty() && rep.trace.increments.back() > 0)
      rep.trace.increment_ratios.push_back(inc / rep.trace.increments.back());
    rep.trace.norms.push_back(nrm);
    rep.trace.increments.push_back(inc);
    if (!phi.allFinite() || nrm > 1e6) {
      rep.status = "diverged";
      break;
    }
    prev = phi;
    if (inc <= cfg.tolerance * nrm || inc == 0) {
      rep.converged = true;
      break;
    }
  }
  if (rep.status != "diverged" && !rep.converged) rep.status = "not_converged";
  rep.phi = phi;
  rep.rho = project(phi);
  rep.tau = phi - rep.rho;
  rep.rho_norm = sobolev_norm(dm, rep.rho);
  rep.tau_norm = sobolev_norm(dm, rep.tau);
  rep.trace.diag.s = lq_norm(dm, eps, n / 2.0);
  if (rep.status == "diverged") {
    rep.psi = Field::Ones(dm.size()) + phi;
    return rep;
  }
  finish_report(dm, rep, S_bg, -kappa);
  rep.positivity = positivity_check(dm, rep.psi, 0, 0, eps.maxCoeff());
  if (!rep.positivity.positive) rep.status = "nonpositive";
  return rep;
}

nlohmann::json SolveReport::to_json(bool with_fields) const {
  nlohmann::json j = {{"status", status},
                      {"converged", converged},
                      {"iterations", iterations},
                      {"phi_norm", phi.size() ? std::sqrt(phi.squaredNorm() / std::max<Eigen::Index>(phi.size(), 1)) : 0.0},
                      {"target", target},
                      {"S_mean", S_mean},
                      {"S_std", S_std},
                      {"S_relative_std", S_mean != 0 ? S_std / std::abs(S_mean) : nan()},
                      {"residual_max", residual_max},
                      {"fixed_point_gap", fixed_point_gap},
                      {"Q", Q},
                      {"positivity", positivity.to_json()},
                      {"trace", trace.to_json()}};
  if (!trace.norms.empty()) j["sobolev_norm"] = trace.norms.back();
  if (zero_case) {
    j["zero_case"] = {{"D0", D0},
                      {"rho_norm", rho_norm},
                      {"tau_norm", tau_norm},
                      {"pi_eta_const", pi_eta_const},
                      {"pi_eta_beta", pi_eta_beta},
                      {"beta_eps", beta_eps},
                      {"gate_value", gate_value},
                      {"gate_passed", gate_passed},
                      {"max_orthogonality", max_orthogonality},
                      {"rho_norms", rho_norms},
                      {"tau_norms", tau_norms}};
  }
  if (with_fields) {
    j["fields"] = {{"phi", vec_json(phi)}, {"psi", vec_json(psi)}, {"S", vec_json(S)}};
    if (zero_case) {
      j["fields"]["rho"] = vec_json(rho);
      j["fields"]["tau"] = vec_json(tau);
    }
  }
  return j;
}

// ---------------------------------------------------------------- three metrics

double factor_distance(const DiscreteManifold& a, const Field& psi_a, const DiscreteManifold& b, const Field& psi_b) {
  using Key = std::tuple<int, int, long long, long long, long long>;
  auto key = [](const Node& nd) {
    return Key{nd.side, static_cast<int>(nd.chart), std::llround(nd.u * 1e8), std::llround(nd.v * 1e8),
               std::llround(nd.w * 1e8)};
  };
  std::map<Key, Eigen::Index> idx;
  for (Eigen::Index j = 0; j < b.size(); ++j)
    if (b.nodes[j].chart == NodeChart::Bulk || b.nodes[j].chart == NodeChart::Grid) idx[key(b.nodes[j])] = j;
  double d = -1;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const Node& nd = a.nodes[i];
    if (nd.chart != NodeChart::Bulk && nd.chart != NodeChart::Grid) continue;
    auto it = idx.find(key(nd));
    if (it == idx.end()) continue;
    d = std::max(d, std::abs(a.wfac[i] * psi_a[i] - b.wfac[it->second] * psi_b[it->second]));
  }
  return d < 0 ? nan() : d;
}

nlohmann::json ThreeMetricsReport::to_json() const {
  nlohmann::json j;
  j["t"] = t;
  for (int i = 0; i < 3; ++i) j["metrics"].push_back({{"label", label[i]}, {"report", metric[i].to_json()}});
  j["distance"] = {{"1-2", distance[0][1]}, {"1-3", distance[0][2]}, {"2-3", distance[1][2]}};
  j["swap_symmetry"] = swap_symmetry;
  j["distinctness_metric"] = "sup over shared product-chart nodes of |w_a(1+phi_a) - w_b(1+phi_b)|";
  return j;
}

ThreeMetricsReport three_metrics(const Model& Mp, const Model& Mpp, double t, const Resolution& res,
                                 const SolveConfig& cfg_in) {
  SolveConfig cfg = cfg_in;
  cfg.nu = 1;
  cfg.validate();
  const int n = Mp.dim();
  const Constants C = make_constants(n);
  for (const Model* m : {&Mp, &Mpp}) {
    if (std::abs(m->nu() - 1) > 1e-12) throw ConfigError("three metrics need components of scalar curvature 1");
    if (m->kind() == Model::Kind::RoundSphere)
      throw ConfigError("the round sphere has a Delta-eigenvalue b: the gap hypothesis fails");
    if (m->kind() != Model::Kind::ProductSphere) throw ConfigError("three metrics need product-sphere components");
    const DiscreteManifold md = product_sphere_mesh(n, m->radius(), m->length(), res);
    EigenOptions eo;
    eo.sector = -1;
    eo.keep_vectors = false;
    const GapVerdict gv = gap_check(lowest_eigenpairs(md, 12, eo), C.b, cfg.gamma);
    if (!gv.holds) throw ConfigError("component has a Delta-eigenvalue near b");
  }
  ThreeMetricsReport out;
  out.t = t;
  GlueParams g1;
  g1.family = Family::PosGraft;
  g1.t = t * t;
  g1.nu = 1;
  GlueParams g3 = g1;
  g3.family = Family::NeckJoin;
  g3.t = t;
  const DiscreteManifold d1 = assemble(ChartComplex::build(g1, Mp, Mpp), res);
  const DiscreteManifold d2 = assemble(ChartComplex::build(g1, Mpp, Mp), res, true);
  const DiscreteManifold d3 = assemble(ChartComplex::build(g3, Mp, Mpp), res);
  const DiscreteManifold* d[3] = {&d1, &d2, &d3};
  out.label[0] = "M'' grafted into M' (PosGraft, t^2)";
  out.label[1] = "M' grafted into M'' (PosGraft, t^2)";
  out.label[2] = "neck join (NeckJoin, t)";
  for (int i = 0; i < 3; ++i) {
    out.metric[i] = run_iteration(*d[i], d[i]->eps, cfg);
    if (!out.metric[i].converged || out.metric[i].status != "ok")
      throw NumericalError("three metrics: solve " + std::to_string(i + 1) + " ended with " + out.metric[i].status);
  }
  for (int i = 0; i < 3; ++i)
    for (int k = i + 1; k < 3; ++k)
      out.distance[i][k] = out.distance[k][i] = factor_distance(*d[i], out.metric[i].psi, *d[k], out.metric[k].psi);
  if (Mp.to_json() == Mpp.to_json()) {
    const auto perm = swap_permutation(d1, d2);
    double s = 0;
    for (Eigen::Index i = 0; i < d1.size(); ++i)
      s = std::max(s, std::abs(out.metric[0].psi[i] - out.metric[1].psi[perm[static_cast<size_t>(i)]]));
    out.swap_symmetry = s;
  } else {
    out.swap_symmetry = nan();
  }
  return out;
}

}  // namespace ym
