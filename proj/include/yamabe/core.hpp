#pragma once

#include <Eigen/Core>

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ym {

using Field = Eigen::VectorXd;
using LaplaceOp = std::function<Field(const Field&)>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};

// a = 4(n-1)/(n-2), b = 4/(n-2), p = 2n/(n-2)
struct Constants {
  int n = 3;
  double a = 8, b = 4, p = 6;
  double crit() const { return (n + 2.0) / (n - 2.0); }  // p - 1
};

Constants make_constants(int n);

// volume of the unit sphere S^{n-1} in R^n
double sphere_area(int n);

// Radial conformal factor on a flat chart, with analytic derivatives in r.
class ModelFactor {
 public:
  enum class Kind { Flat, RoundSphere, Hyperbolic, Neck, Synthetic };

  static ModelFactor flat(int n);
  // (1 + S r^2 / (4n(n-1)))^{-(n-2)/2}: constant curvature S > 0, psi(0) = 1
  static ModelFactor round_sphere(int n, double S = 1.0);
  // ball model with constant curvature -|S|
  static ModelFactor hyperbolic(int n, double S = -1.0);
  // 1 + m r^{2-n}
  static ModelFactor neck(int n, double m = 1.0);
  // 1 + mu r^{2-n} + c r^{1-n}
  static ModelFactor synthetic(int n, double mu, double c);

  Kind kind() const { return kind_; }
  int dim() const { return n_; }
  double value(double r) const;
  double d1(double r) const;
  double d2(double r) const;
  // curvature of psi^{p-2} h where it is constant (0 for Neck/Synthetic/Flat)
  double curvature() const;
  // open radial domain (lo, hi) on which the factor is positive and smooth
  double r_min() const;
  double r_max() const;
  double param(int i) const { return par_[i]; }
  std::string describe() const;

 private:
  ModelFactor(Kind k, int n, double p0, double p1) : kind_(k), n_(n), par_{p0, p1} {}
  Kind kind_;
  int n_;
  double par_[2];
};

// S~ = psi^{1-p}(a Delta psi + S psi) for a radial factor, Delta = -(d2 + (n-1)/r d1)
double radial_scalar_curvature(const Constants& C, const ModelFactor& f, double S_bg, double r);
double radial_laplacian(int n, double d1, double d2, double r);

// discrete versions; laplace is the nonnegative Laplacian of the background metric
Field conformal_scalar_curvature(const Constants& C, const Field& psi, const Field& S_bg,
                                 const LaplaceOp& laplace);
Field yamabe_residual(const Constants& C, const Field& psi, const Field& S_bg, double nu,
                      const LaplaceOp& laplace);

// f(x) = |1+x|^{(n+2)/(n-2)} - 1 - (n+2)x/(n-2)
double nonlinearity_f(double x, const Constants& C);
double nonlinearity_df(double x, const Constants& C);

// |f(x)-f(y)| <= |x-y| (F4(|x|+|y|) + F5(|x|^{4/(n-2)} + |y|^{4/(n-2)}))
struct LipschitzF {
  double F4 = 0, F5 = 0;
};
LipschitzF lipschitz_constants(const Constants& C);

// Q = (int S dV) / vol^{2/p}
double hilbert_action(const Constants& C, const Field& S, const Field& volume_weights);

struct MassFit {
  double mu = 0, c = 0, residual = 0;
  int used = 0;
};
// fit psi - 1 = mu r^{2-n} + c r^{1-n} over the outermost decade of radii
MassFit extract_mass(const std::vector<std::pair<double, double>>& samples, const Constants& C);

}  // namespace ym
