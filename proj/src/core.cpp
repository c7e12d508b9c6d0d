#include "yamabe/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <cmath>
#include <sstream>

namespace ym {

Constants make_constants(int n) {
  if (n < 3) throw ConfigError("dimension must be at least 3, got " + std::to_string(n));
  Constants C;
  C.n = n;
  C.a = 4.0 * (n - 1) / (n - 2);
  C.b = 4.0 / (n - 2);
  C.p = 2.0 * n / (n - 2);
  return C;
}

double sphere_area(int n) { return 2.0 * std::pow(M_PI, 0.5 * n) / std::tgamma(0.5 * n); }

ModelFactor ModelFactor::flat(int n) { return {Kind::Flat, n, 0, 0}; }

ModelFactor ModelFactor::round_sphere(int n, double S) {
  if (!(S > 0)) throw ConfigError("round sphere factor needs positive curvature");
  return {Kind::RoundSphere, n, S / (4.0 * n * (n - 1)), 0};
}

ModelFactor ModelFactor::hyperbolic(int n, double S) {
  if (!(S < 0)) throw ConfigError("hyperbolic factor needs negative curvature");
  return {Kind::Hyperbolic, n, -S / (4.0 * n * (n - 1)), 0};
}

ModelFactor ModelFactor::neck(int n, double m) {
  if (!(m > 0)) throw ConfigError("neck coefficient must be positive");
  return {Kind::Neck, n, m, 0};
}

ModelFactor ModelFactor::synthetic(int n, double mu, double c) { return {Kind::Synthetic, n, mu, c}; }

double ModelFactor::value(double r) const {
  const double e = -(n_ - 2) / 2.0;
  switch (kind_) {
    case Kind::Flat: return 1.0;
    case Kind::RoundSphere: return std::pow(1 + par_[0] * r * r, e);
    case Kind::Hyperbolic: return std::pow(1 - par_[0] * r * r, e);
    case Kind::Neck: return 1 + par_[0] * std::pow(r, 2 - n_);
    case Kind::Synthetic: return 1 + par_[0] * std::pow(r, 2 - n_) + par_[1] * std::pow(r, 1 - n_);
  }
  return 1.0;
}

double ModelFactor::d1(double r) const {
  const double e = -(n_ - 2) / 2.0;
  switch (kind_) {
    case Kind::Flat: return 0.0;
    case Kind::RoundSphere: return e * std::pow(1 + par_[0] * r * r, e - 1) * 2 * par_[0] * r;
    case Kind::Hyperbolic: return -e * std::pow(1 - par_[0] * r * r, e - 1) * 2 * par_[0] * r;
    case Kind::Neck: return (2 - n_) * par_[0] * std::pow(r, 1 - n_);
    case Kind::Synthetic:
      return (2 - n_) * par_[0] * std::pow(r, 1 - n_) + (1 - n_) * par_[1] * std::pow(r, -n_);
  }
  return 0.0;
}

double ModelFactor::d2(double r) const {
  const double e = -(n_ - 2) / 2.0;
  const double c = par_[0];
  switch (kind_) {
    case Kind::Flat: return 0.0;
    case Kind::RoundSphere: {
      const double q = 1 + c * r * r;
      return e * (e - 1) * std::pow(q, e - 2) * 4 * c * c * r * r + e * std::pow(q, e - 1) * 2 * c;
    }
    case Kind::Hyperbolic: {
      const double q = 1 - c * r * r;
      return e * (e - 1) * std::pow(q, e - 2) * 4 * c * c * r * r - e * std::pow(q, e - 1) * 2 * c;
    }
    case Kind::Neck: return (2 - n_) * (1 - n_) * c * std::pow(r, -n_);
    case Kind::Synthetic:
      return (2 - n_) * (1 - n_) * c * std::pow(r, -n_) +
             (1 - n_) * (-n_) * par_[1] * std::pow(r, -n_ - 1);
  }
  return 0.0;
}

double ModelFactor::curvature() const {
  switch (kind_) {
    case Kind::RoundSphere: return 4.0 * n_ * (n_ - 1) * par_[0];
    case Kind::Hyperbolic: return -4.0 * n_ * (n_ - 1) * par_[0];
    default: return 0.0;
  }
}

double ModelFactor::r_min() const {
  switch (kind_) {
    case Kind::Neck:
    case Kind::Synthetic: return 0.0;  // exclusive; positivity checked by callers
    default: return 0.0;
  }
}

double ModelFactor::r_max() const {
  if (kind_ == Kind::Hyperbolic) return 1.0 / std::sqrt(par_[0]);
  return std::numeric_limits<double>::infinity();
}

std::string ModelFactor::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Flat: os << "flat"; break;
    case Kind::RoundSphere: os << "round_sphere(S=" << curvature() << ")"; break;
    case Kind::Hyperbolic: os << "hyperbolic(S=" << curvature() << ")"; break;
    case Kind::Neck: os << "neck(m=" << par_[0] << ")"; break;
    case Kind::Synthetic: os << "synthetic(mu=" << par_[0] << ",c=" << par_[1] << ")"; break;
  }
  return os.str();
}

double radial_laplacian(int n, double d1, double d2, double r) { return -(d2 + (n - 1) * d1 / r); }

double radial_scalar_curvature(const Constants& C, const ModelFactor& f, double S_bg, double r) {
  const double psi = f.value(r);
  if (!(psi > 0)) throw NumericalError("non-positive conformal factor");
  const double lap = radial_laplacian(C.n, f.d1(r), f.d2(r), r);
  return std::pow(psi, 1 - C.p) * (C.a * lap + S_bg * psi);
}

static void check_sizes(const Field& a, const Field& b) {
  if (a.size() != b.size()) throw Error("field domain mismatch");
}

Field conformal_scalar_curvature(const Constants& C, const Field& psi, const Field& S_bg,
                                 const LaplaceOp& laplace) {
  check_sizes(psi, S_bg);
  if (psi.size() > 0 && !(psi.minCoeff() > 0)) throw NumericalError("non-positive conformal factor");
  const Field lap = laplace(psi);
  check_sizes(psi, lap);
  Field out(psi.size());
  for (Eigen::Index i = 0; i < psi.size(); ++i)
    out[i] = std::pow(psi[i], 1 - C.p) * (C.a * lap[i] + S_bg[i] * psi[i]);
  return out;
}

Field yamabe_residual(const Constants& C, const Field& psi, const Field& S_bg, double nu,
                      const LaplaceOp& laplace) {
  check_sizes(psi, S_bg);
  const Field lap = laplace(psi);
  check_sizes(psi, lap);
  Field out(psi.size());
  for (Eigen::Index i = 0; i < psi.size(); ++i) {
    // |psi|^{p-1} taken literally, no sign branch
    out[i] = C.a * lap[i] + S_bg[i] * psi[i] - nu * std::pow(std::abs(psi[i]), C.p - 1);
  }
  return out;
}

double nonlinearity_f(double x, const Constants& C) {
  const double q = C.crit();
  return std::pow(std::abs(1 + x), q) - 1 - q * x;
}

double nonlinearity_df(double x, const Constants& C) {
  const double q = C.crit();
  const double y = 1 + x;
  const double s = (y > 0) - (y < 0);
  return q * (s * std::pow(std::abs(y), q - 1) - 1);
}

LipschitzF lipschitz_constants(const Constants& C) {
  const double e = 4.0 / (C.n - 2);
  LipschitzF L;
  double s4 = 0, s5 = 0;
  const int N = 40000;
  for (int sgn : {-1, 1}) {
    for (int i = 0; i <= N; ++i) {
      const double z = sgn * std::pow(10.0, -6.0 + 12.0 * i / N);
      const double g = std::abs(nonlinearity_df(z, C));
      if (C.n >= 6) {
        s5 = std::max(s5, g / std::pow(std::abs(z), e));
      } else if (std::abs(z) <= 1) {
        s4 = std::max(s4, g / std::abs(z));
      } else {
        s5 = std::max(s5, g / std::pow(std::abs(z), e));
      }
    }
    // neighbourhood of the kink at z = -1 is sampled densely as well
    for (int i = 0; i <= N; ++i) {
      const double z = -1 + sgn * 1e-3 * i / N;
      const double g = std::abs(nonlinearity_df(z, C));
      if (C.n >= 6) s5 = std::max(s5, g / std::pow(std::abs(z), e));
      else if (std::abs(z) <= 1) s4 = std::max(s4, g / std::abs(z));
      else s5 = std::max(s5, g / std::pow(std::abs(z), e));
    }
  }
  L.F4 = C.n >= 6 ? 0.0 : s4 * (1 + 1e-6);
  L.F5 = s5 * (1 + 1e-6);
  return L;
}

double hilbert_action(const Constants& C, const Field& S, const Field& w) {
  check_sizes(S, w);
  const double vol = w.sum();
  if (!(vol > 0)) throw Error("zero total volume");
  return S.dot(w) / std::pow(vol, 2.0 / C.p);
}

MassFit extract_mass(const std::vector<std::pair<double, double>>& samples, const Constants& C) {
  std::vector<std::pair<double, double>> s = samples;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end(),
                      [](auto& x, auto& y) { return x.first == y.first; }),
          s.end());
  if (s.size() < 2) throw Error("mass fit needs at least two distinct radii");
  for (auto& [r, v] : s)
    if (!(r > 0) || !(v > 0)) throw Error("mass fit needs positive radii and values");
  const double rmax = s.back().first;
  std::vector<std::pair<double, double>> use;
  for (auto& q : s)
    if (q.first >= rmax / 10) use.push_back(q);
  if (use.size() < 3) use = s;
  const int m = static_cast<int>(use.size());
  Eigen::MatrixXd A(m, 2);
  Eigen::VectorXd y(m);
  const double n = C.n;
  for (int i = 0; i < m; ++i) {
    const double r = use[i].first / rmax;
    A(i, 0) = std::pow(r, 2 - n);
    A(i, 1) = std::pow(r, 1 - n);
    y[i] = use[i].second - 1;
  }
  Eigen::VectorXd x;
  if (m == 2 || A.col(0).isApprox(A.col(1))) {
    x = Eigen::VectorXd::Zero(2);
    x[0] = A.col(0).dot(y) / A.col(0).squaredNorm();
  } else {
    x = A.colPivHouseholderQr().solve(y);
  }
  MassFit out;
  out.mu = x[0] * std::pow(rmax, n - 2);
  out.c = x[1] * std::pow(rmax, n - 1);
  out.residual = std::sqrt((A * x - y).squaredNorm() / m);
  out.used = m;
  return out;
}

}  // namespace ym
