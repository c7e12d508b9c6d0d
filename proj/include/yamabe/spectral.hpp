#pragma once

#include "yamabe/discrete.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace ym {

// Checks a supernodal Cholesky factor on a probe problem.  Some OpenBLAS builds
// pick a kernel that produces wrong factors; select_blas_kernel re-executes the
// program with OPENBLAS_CORETYPE=Haswell in that case (call first thing in main).
bool supernodal_factor_ok();
void select_blas_kernel(char** argv);

double lq_norm(const DiscreteManifold& dm, const Field& phi, double q);
// ||phi||_{2,1}^2 = ||phi||_2^2 + phi^T K phi
double sobolev_norm(const DiscreteManifold& dm, const Field& phi);
double integral(const DiscreteManifold& dm, const Field& phi);

// Solves (a K + c M) x = b in the weak form.  Factorizes once; c > 0 uses a
// supernodal Cholesky factor, c <= 0 runs MINRES preconditioned by the c = |c| + b factor.
// c = 0 is solved on the mean-zero subspace (rhs must integrate to zero).
class ShiftedOperator {
 public:
  ShiftedOperator(const DiscreteManifold& dm, double c, double tol = 1e-12, int max_iter = 2000);
  ~ShiftedOperator();
  ShiftedOperator(const ShiftedOperator&) = delete;
  ShiftedOperator& operator=(const ShiftedOperator&) = delete;
  // weak right-hand side b
  Field solve_weak(const Field& b) const;
  // nodal right-hand side f, b = M f
  Field solve(const Field& f) const { return solve_weak(dm_.M.cwiseProduct(f)); }
  double shift() const { return c_; }
  std::string method() const;
  int last_iterations() const { return last_iter_; }
  double last_residual() const { return last_res_; }

 private:
  struct Impl;
  const DiscreteManifold& dm_;
  double c_;
  double tol_;
  int max_iter_;
  std::unique_ptr<Impl> impl_;
  mutable int last_iter_ = 0;
  mutable double last_res_ = 0;
};

struct ShiftedSolve {
  Field phi;
  double ratio = 0;  // ||phi||_{2,1} / ||rhs||_{2n/(n+2)}
  std::string method;
  int iterations = 0;
  double residual = 0;
};
// (a Delta - nu b shift) phi = rhs
ShiftedSolve solve_shifted(const DiscreteManifold& dm, double nu, double shift, const Field& rhs);

struct SobolevEstimate {
  double A_lower = 0;
  Field maximizer;
  std::vector<std::pair<std::string, double>> seeds;  // best ratio reached from each seed
  bool diverged = false;
  double constant_ratio = 0;
};
SobolevEstimate sobolev_constant_estimate(const DiscreteManifold& dm, uint64_t seed = 1, int iterations = 60);
// ||phi||_p / ||phi||_{2,1} for a given profile
double sobolev_ratio(const DiscreteManifold& dm, const Field& phi);
// 0 on the M' side, 1 on the M'' side, quintic in sigma across the neck (glued meshes)
Field indicator_profile(const DiscreteManifold& dm);

struct EigenOptions {
  int sector = 0;        // azimuthal sector; -1 merges sectors 0..max_sector
  int max_sector = 3;
  double shift = 1.0;    // shift-invert pole at -shift
  double tol = 1e-9;     // relative eigen-residual
  int max_iter = 400;
  int guard = 4;
  bool keep_vectors = true;
};

struct SpectrumReport {
  std::vector<double> values;  // eigenvalues of a Delta, ascending
  std::vector<int> sector;
  std::vector<double> residuals;
  Eigen::MatrixXd vectors;     // sector-0 eigenvectors (full node set), columns aligned with `vector_index`
  std::vector<int> vector_index;
  int iterations = 0;
  bool converged = false;
  double covered_upto = 0;     // every eigenvalue below this is listed
  nlohmann::json to_json() const;
};
SpectrumReport lowest_eigenpairs(const DiscreteManifold& dm, int count, const EigenOptions& opt = {});

struct GapVerdict {
  bool holds = false;
  bool covered = false;
  double below = 0, above = 0;  // nearest eigenvalues outside the interval (NaN if none)
  std::vector<double> inside;
  nlohmann::json to_json() const;
};
GapVerdict gap_check(const SpectrumReport& rep, double center, double halfwidth);

enum class GreenMode { APlusS, MeanCorrected };
struct GreenResult {
  Field G;
  double pole_coefficient = 0;
  double pole_expected = 0;  // 1 / (a (n-2) omega_{n-1})
  double fit_residual = 0;
  int fit_points = 0;
  double min_value = 0;
};
GreenResult green_function(const DiscreteManifold& dm, Eigen::Index node, GreenMode mode);
// node closest to the given chart coordinates (Bulk: (s, theta); Grid: (x, y, z))
Eigen::Index nearest_node(const DiscreteManifold& dm, NodeChart chart, double u, double v, double w = 0);

struct NeckEigenReport {
  double lambda = 0;
  Field beta, e, y;
  double c_prime = 0, c_dprime = 0;
  double D0 = 0, D1 = 0;
  std::vector<double> trace_lambda, trace_w;
  double int_beta = 0, int_ew = 0;  // relative to ||beta||_1 and ||e||_2 ||w||_2
  double residual = 0;
  int iterations = 0;
  bool converged = false;
  double volume_prime = 0, volume_dprime = 0;
  nlohmann::json to_json() const;
};
struct NeckEigenOptions {
  double gamma = 1;
  double tol = 1e-10;
  int max_iter = 100;
  bool require_balanced = true;
};
NeckEigenReport neck_eigenvector(const DiscreteManifold& dm, const NeckEigenOptions& opt = {});

}  // namespace ym
