#pragma once

#include "yamabe/discrete.hpp"
#include "yamabe/spectral.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace ym {

enum class PositivityPolicy { Fail, Report };

struct SolveConfig {
  double nu = 1;           // +1 or -1; the zero case goes through projected_solve_zero
  double gamma = 1;        // spectral-gap half-width
  int max_iterations = 200;
  double tolerance = 1e-10;  // relative increment in ||.||_{2,1}
  PositivityPolicy positivity = PositivityPolicy::Fail;
  double ceiling = 10;     // search range for the root of x = 2 chi(x); larger iterates count as divergence
  double A = 0, B = 0;     // Sobolev and inverse bounds; 0 = measure on the manifold
  bool diagnostics = true;
  void validate() const;
  nlohmann::json to_json() const;
  static SolveConfig from_json(const nlohmann::json& j);
};

struct ContractionDiagnostics {
  double s = 0;  // ||eps||_{n/2}
  double A = 0, B = 0, X = 0;
  double B_formula = 0;  // A/b for nu = -1, (a+b+gamma)A/(a gamma) for nu = +1
  double F0 = 0, F1 = 0, F2 = 0, F3 = 0, F4 = 0, F5 = 0;
  bool has_root = false;
  double root = 0;         // smallest x > 0 with x = 2 chi(x)
  double contraction = 0;  // F1 s + 2 F2 x + 2 F3 x^{4/(n-2)} at the root
  double chi(double x, int n) const;
  nlohmann::json to_json() const;
};
ContractionDiagnostics contraction_diagnostics(const DiscreteManifold& dm, const Field& eps, double A, double B,
                                               double ceiling = 10);

// empirical bound ||(a Delta - nu b)^{-1} rho||_{2,1} <= B ||rho||_{2n/(n+2)} over probe right-hand sides
double estimate_inverse_bound(const DiscreteManifold& dm, double nu, const Field& eps);

struct IterationTrace {
  ContractionDiagnostics diag;
  std::vector<double> norms, increments;
  std::vector<double> increment_ratios;
  bool certified = false;        // a root exists and the measured increments stayed below it
  int induction_violations = 0;  // iterates with ||phi_i|| > x while the root exists
  double W_empirical = 0;
  nlohmann::json to_json() const;
};

struct PositivityVerdict {
  bool positive = true;
  double min_psi = 1;
  // diagnostics on xi = min(psi, 0)
  double xi_p = 0, support_volume = 0;
  double F6 = 0, F7 = 0;
  bool bound_consistent = false;  // ||xi||_p^{4/(n-2)} >= F6 - F7 vol(supp)^{2/n}
  nlohmann::json to_json() const;
};
// A: Sobolev constant, Y: sup of eps (S >= nu - Y)
PositivityVerdict positivity_check(const DiscreteManifold& dm, const Field& psi, double nu, double A, double Y);

struct SolveReport {
  std::string status = "ok";  // ok, diverged, nonpositive, not_converged, gate_failed
  bool converged = false;
  int iterations = 0;
  Field phi, psi;
  Field S;                // achieved scalar curvature, nodal
  double S_mean = 0, S_std = 0;
  double target = 0;      // constant the solve aims for
  double residual_max = 0;  // max |yamabe residual|
  double fixed_point_gap = 0;  // ||phi - T(phi)||_{2,1}
  double Q = 0;
  PositivityVerdict positivity;
  IterationTrace trace;
  // zero case
  bool zero_case = false;
  Field rho, tau;
  double rho_norm = 0, tau_norm = 0;
  double D0 = 0;
  double pi_eta_const = 0, pi_eta_beta = 0;  // ||pi(eta)||_1 along 1 and beta_t
  double beta_eps = 0;                        // int beta_t eps_t dV
  double gate_value = 0;
  bool gate_passed = true;
  double max_orthogonality = 0;  // max over iterations of |<tau_i, P>_M| relative
  std::vector<double> rho_norms, tau_norms;

  nlohmann::json to_json(bool with_fields = false) const;
};

// xi = (a Delta - nu b)^{-1}(eps + eps eta + nu f(eta))
Field apply_T(const DiscreteManifold& dm, const Field& eta, const Field& eps, double nu);
class TMap {
 public:
  TMap(const DiscreteManifold& dm, const Field& eps, double nu);
  Field operator()(const Field& eta) const;

 private:
  const DiscreteManifold& dm_;
  Field eps_;
  double nu_;
  ShiftedOperator op_;
};

SolveReport run_iteration(const DiscreteManifold& dm, const Field& eps, const SolveConfig& cfg);
// achieved curvature of psi^{p-2} g_mesh (lumped Laplacian) and its volume statistics;
// S_bg is the mesh metric's curvature (dm.S() when omitted)
void achieved_curvature(const DiscreteManifold& dm, const Field& psi, const Field& S_bg, Field& S, double& mean,
                        double& stddev);
void achieved_curvature(const DiscreteManifold& dm, const Field& psi, Field& S, double& mean, double& stddev);

struct ZeroSolveConfig {
  int max_iterations = 200;
  double tolerance = 1e-10;
  double gate_tolerance = 0.05;  // |int beta_t eps_t| / |int eps_t|
  bool enforce_gate = true;
  // paper: D0 = (n-2) omega mu / vol(M'); oracle: a (n-2) omega mu / vol(M'), the flux of a Delta
  bool paper_D0 = false;
  std::optional<double> mu;  // graft mass; measured from the model's stereographic factor if absent
  nlohmann::json to_json() const;
};
SolveReport projected_solve_zero(const DiscreteManifold& dm, const NeckEigenReport* neck, const ZeroSolveConfig& cfg);
double zero_target_constant(const DiscreteManifold& dm, bool paper_D0, double mu);
double measured_graft_mass(const ChartComplex& cx);

struct ThreeMetricsReport {
  SolveReport metric[3];
  std::string label[3];
  double distance[3][3] = {};
  double swap_symmetry = 0;  // sup |psi_1 - psi_2 o swap|
  double t = 0;
  nlohmann::json to_json() const;
};
ThreeMetricsReport three_metrics(const Model& Mp, const Model& Mpp, double t, const Resolution& res,
                                 const SolveConfig& cfg);

// pulled-back factor distance: sup over bulk nodes present in both meshes of
// |wfac_a (1 + phi_a) - wfac_b (1 + phi_b)|
double factor_distance(const DiscreteManifold& a, const Field& psi_a, const DiscreteManifold& b, const Field& psi_b);

}  // namespace ym
