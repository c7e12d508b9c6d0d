#include "yamabe/models.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>

namespace ym {

namespace {

struct V2 {
  double z, rho;
};
inline V2 operator-(V2 a, V2 b) { return {a.z - b.z, a.rho - b.rho}; }
inline V2 operator+(V2 a, V2 b) { return {a.z + b.z, a.rho + b.rho}; }
inline V2 operator*(double s, V2 a) { return {s * a.z, s * a.rho}; }
inline double dot(V2 a, V2 b) { return a.z * b.z + a.rho * b.rho; }
inline double norm2(V2 a) { return dot(a, a); }

}  // namespace

Model Model::flat_torus(int n, double side) {
  if (!(side > 0)) throw ConfigError("torus side must be positive");
  Model m;
  m.kind_ = Kind::FlatTorus;
  m.n_ = n;
  m.nu_ = 0;
  m.L_ = side;
  return m;
}

Model Model::round_sphere(int n, double S) {
  if (!(S > 0)) throw ConfigError("round sphere needs positive curvature");
  Model m;
  m.kind_ = Kind::RoundSphere;
  m.n_ = n;
  m.nu_ = S;
  m.S_ = S;
  return m;
}

Model Model::hyperbolic_chart(int n, double S) {
  if (!(S < 0)) throw ConfigError("hyperbolic chart needs negative curvature");
  Model m;
  m.kind_ = Kind::HyperbolicChart;
  m.n_ = n;
  m.nu_ = S;
  m.S_ = S;
  return m;
}

Model Model::product_sphere(int n, double radius, double length) {
  if (!(radius > 0) || !(length > 0)) throw ConfigError("product sphere needs positive radius and length");
  Model m;
  m.kind_ = Kind::ProductSphere;
  m.n_ = n;
  m.R_ = radius;
  m.L_ = length;
  m.S_ = (n - 1.0) * (n - 2.0) / (radius * radius);
  m.nu_ = m.S_;
  return m;
}

Model Model::projective_space(int n, double S) {
  if (!(S > 0)) throw ConfigError("projective space needs positive curvature");
  Model m;
  m.kind_ = Kind::ProjectiveSpace;
  m.n_ = n;
  m.S_ = S;
  m.nu_ = S;
  return m;
}

Model Model::synthetic_end(int n, double mu, double c) {
  Model m;
  m.kind_ = Kind::SyntheticEnd;
  m.n_ = n;
  m.mu_ = mu;
  m.c_ = c;
  m.nu_ = 0;
  return m;
}

std::string Model::name() const {
  switch (kind_) {
    case Kind::FlatTorus: return "flat_torus";
    case Kind::RoundSphere: return "round_sphere";
    case Kind::HyperbolicChart: return "hyperbolic_chart";
    case Kind::ProductSphere: return "product_sphere";
    case Kind::ProjectiveSpace: return "projective_space";
    case Kind::SyntheticEnd: return "synthetic_end";
  }
  return "?";
}

bool Model::compact() const {
  return kind_ != Kind::HyperbolicChart && kind_ != Kind::SyntheticEnd;
}

bool Model::has_stereographic() const {
  return kind_ == Kind::RoundSphere || kind_ == Kind::ProductSphere || kind_ == Kind::ProjectiveSpace ||
         kind_ == Kind::SyntheticEnd;
}

double Model::volume() const {
  const int n = n_;
  switch (kind_) {
    case Kind::FlatTorus: return std::pow(L_, n);
    case Kind::RoundSphere: {
      const double k = std::sqrt(n * (n - 1.0) / S_);
      return sphere_area(n + 1) * std::pow(k, n);
    }
    case Kind::ProjectiveSpace: {
      const double k = std::sqrt(n * (n - 1.0) / S_);
      return 0.5 * sphere_area(n + 1) * std::pow(k, n);
    }
    case Kind::ProductSphere: return sphere_area(n) * std::pow(R_, n - 1) * L_;
    default: throw Error(name() + " has no finite volume");
  }
}

double Model::chart_radius() const {
  switch (kind_) {
    case Kind::FlatTorus: return 0.5 * L_;
    case Kind::RoundSphere: return std::numeric_limits<double>::infinity();
    case Kind::ProjectiveSpace: return std::sqrt(4.0 * n_ * (n_ - 1) / S_);
    case Kind::HyperbolicChart: return std::sqrt(4.0 * n_ * (n_ - 1) / -S_);
    case Kind::ProductSphere: {
      // the chart ball must stay inside the fundamental domain |s| < L/(2R)
      const double c = 2 * R_;
      return c * std::tanh(L_ / (4 * R_));
    }
    case Kind::SyntheticEnd: return 0;
  }
  return 0;
}

ModelFactor Model::chart_factor() const {
  switch (kind_) {
    case Kind::FlatTorus: return ModelFactor::flat(n_);
    case Kind::RoundSphere:
    case Kind::ProjectiveSpace: return ModelFactor::round_sphere(n_, S_);
    case Kind::HyperbolicChart: return ModelFactor::hyperbolic(n_, S_);
    default: throw Error(name() + " has no radial chart factor");
  }
}

double Model::chart_value(double r, double alpha) const {
  if (kind_ != Kind::ProductSphere) return chart_factor().value(r);
  const double c = 2 * R_;
  const V2 u{r * std::cos(alpha), r * std::sin(alpha)};
  const double q = std::sqrt(norm2(u - V2{c, 0}) * norm2(u + V2{c, 0}));
  return std::pow(4 * R_ * R_ / q, 0.5 * (n_ - 2));
}

double Model::chart_dr(double r, double alpha) const {
  if (kind_ != Kind::ProductSphere) return chart_factor().d1(r);
  const double c = 2 * R_;
  const double ca = std::cos(alpha);
  const V2 u{r * ca, r * std::sin(alpha)};
  const double d1 = norm2(u - V2{c, 0}), d2 = norm2(u + V2{c, 0});
  const double dlog = (r - c * ca) / d1 + (r + c * ca) / d2;
  return -0.5 * (n_ - 2) * chart_value(r, alpha) * dlog;
}

double Model::mass() const {
  switch (kind_) {
    case Kind::RoundSphere: return 0;
    case Kind::ProjectiveSpace: return std::pow(4.0 * n_ * (n_ - 1) / S_, -0.5 * (n_ - 2));
    case Kind::SyntheticEnd: return mu_;
    case Kind::ProductSphere: return green_regular(0, 0);
    default: throw Error(name() + " has no stereographic projection");
  }
}

std::optional<ModelFactor> Model::stereo_factor() const {
  switch (kind_) {
    case Kind::RoundSphere: return ModelFactor::flat(n_);
    case Kind::ProjectiveSpace: return ModelFactor::neck(n_, mass());
    case Kind::SyntheticEnd: return ModelFactor::synthetic(n_, mu_, c_);
    default: return std::nullopt;
  }
}

double Model::stereo_value(double rho, double alpha) const {
  if (auto f = stereo_factor()) return f->value(rho);
  if (kind_ != Kind::ProductSphere) throw Error(name() + " has no stereographic projection");
  const double r = 1 / rho;
  return 1 + chart_value(r, alpha) * std::pow(r, n_ - 2) * green_regular(r, alpha);
}

double Model::stereo_dr(double rho, double alpha) const {
  if (auto f = stereo_factor()) return f->d1(rho);
  if (kind_ != Kind::ProductSphere) throw Error(name() + " has no stereographic projection");
  const double r = 1 / rho;
  const double P = chart_value(r, alpha), Pr = chart_dr(r, alpha);
  const double H = green_regular(r, alpha), Hr = green_regular_dr(r, alpha);
  const int n = n_;
  const double dd = Pr * std::pow(r, n - 2) * H + P * (n - 2) * std::pow(r, n - 3) * H +
                    P * std::pow(r, n - 2) * Hr;
  return -dd * r * r;
}

double Model::dilation() const { return std::exp(L_ / R_); }

namespace {

// sum over images k != 0 (or all k) of |v - lam^k y|^{2-n} (|v| lam^k)^{(n-2)/2}
// with y = (-1, 0); also returns the derivative along dv
double image_sum(int n, double lam, V2 v, V2 dv, bool skip_zero, double* deriv) {
  const double h = 0.5 * (n - 2);
  const double vn2 = norm2(v);
  const double vn = std::sqrt(vn2);
  const double dvn = dot(v, dv) / vn;
  double sum = 0, dsum = 0;
  const double llam = std::log(lam);
  for (int dir : {1, -1}) {
    for (int k = (dir == 1 ? 0 : -1);; k += dir) {
      if (k == 0 && skip_zero) continue;
      const double lk = std::exp(k * llam);
      const V2 w = v - V2{-lk, 0};
      const double wn2 = norm2(w);
      const double A = std::pow(wn2, 0.5 * (2 - n));
      const double B = std::pow(vn * lk, h);
      const double term = A * B;
      sum += term;
      if (deriv) {
        const double dA = (2 - n) * std::pow(wn2, 0.5 * (2 - n) - 1) * dot(w, dv);
        const double dB = h * std::pow(vn * lk, h - 1) * lk * dvn;
        dsum += dA * B + A * dB;
      }
      if (std::abs(k) > 2 && std::abs(term) < 1e-18 * std::abs(sum)) break;
      if (std::abs(k) > 4000) break;
    }
  }
  if (deriv) *deriv = dsum;
  return sum;
}

}  // namespace

void Model::chart_to_product(double r, double alpha, double& s, double& theta) const {
  const double c = 2 * R_;
  const V2 u{r * std::cos(alpha), r * std::sin(alpha)};
  const V2 w = u - V2{c, 0};
  const V2 v = (2 * c / norm2(w)) * w + V2{1, 0};
  s = 0.5 * std::log(norm2(v));
  theta = std::atan2(std::abs(v.rho), v.z);
}

void Model::product_to_chart(double s, double theta, double& r, double& alpha) const {
  const double c = 2 * R_;
  const V2 v{std::exp(s) * std::cos(theta), std::exp(s) * std::sin(theta)};
  const V2 d = v - V2{1, 0};
  const V2 u = (2 * c / norm2(d)) * d + V2{c, 0};
  r = std::sqrt(norm2(u));
  alpha = std::atan2(std::abs(u.rho), u.z);
}

double Model::green_power_volume(double rho) const {
  if (kind_ != Kind::ProductSphere) throw Error("green_power_volume needs a product sphere");
  using boost::math::quadrature::gauss_kronrod;
  const double s0 = 0.5 * L_ / R_;
  const double p = 2.0 * n_ / (n_ - 2);
  const double wang = sphere_area(n_ - 1);
  auto inner = [&](double s) {
    auto f = [&](double th) {
      double r, a;
      product_to_chart(s, th, r, a);
      if (r < rho) return 0.0;
      return std::pow(green_product(s, th), p) * std::pow(std::sin(th), n_ - 2);
    };
    return gauss_kronrod<double, 31>::integrate(f, 0, M_PI, 12, 1e-7);
  };
  const double I = gauss_kronrod<double, 31>::integrate(inner, -s0, s0, 12, 1e-7);
  return I * wang * std::pow(R_, n_);
}

double Model::green_product(double s, double theta) const {
  const V2 v{std::exp(s) * std::cos(theta), std::exp(s) * std::sin(theta)};
  return image_sum(n_, dilation(), v, {0, 0}, false, nullptr) / std::pow(R_, n_ - 2);
}

double Model::green_regular(double r, double alpha) const {
  const double c = 2 * R_;
  const V2 u{r * std::cos(alpha), r * std::sin(alpha)};
  const V2 w = u - V2{c, 0};
  const V2 v = (2 * c / norm2(w)) * w + V2{1, 0};
  return image_sum(n_, dilation(), v, {0, 0}, true, nullptr) / std::pow(R_, n_ - 2);
}

double Model::green_regular_dr(double r, double alpha) const {
  const double c = 2 * R_;
  const V2 uh{std::cos(alpha), std::sin(alpha)};
  const V2 u = r * uh;
  const V2 w = u - V2{c, 0};
  const double w2 = norm2(w);
  const V2 v = (2 * c / w2) * w + V2{1, 0};
  // dv = 2c (dw/|w|^2 - 2 w (w.dw)/|w|^4), dw = uh dr
  const V2 dv = (2 * c / w2) * uh + (-4 * c * dot(w, uh) / (w2 * w2)) * w;
  double d = 0;
  image_sum(n_, dilation(), v, dv, true, &d);
  return d / std::pow(R_, n_ - 2);
}

nlohmann::json Model::to_json() const {
  nlohmann::json j;
  j["kind"] = name();
  j["n"] = n_;
  switch (kind_) {
    case Kind::FlatTorus: j["side"] = L_; break;
    case Kind::RoundSphere:
    case Kind::ProjectiveSpace:
    case Kind::HyperbolicChart: j["curvature"] = S_; break;
    case Kind::ProductSphere:
      j["radius"] = R_;
      j["length"] = L_;
      break;
    case Kind::SyntheticEnd:
      j["mu"] = mu_;
      j["c"] = c_;
      break;
  }
  return j;
}

Model Model::from_json(const nlohmann::json& j) {
  try {
    const std::string k = j.at("kind").get<std::string>();
    const int n = j.value("n", 3);
    if (k == "flat_torus") return flat_torus(n, j.at("side").get<double>());
    if (k == "round_sphere") return round_sphere(n, j.value("curvature", 1.0));
    if (k == "projective_space") return projective_space(n, j.value("curvature", 1.0));
    if (k == "hyperbolic_chart") return hyperbolic_chart(n, j.value("curvature", -1.0));
    if (k == "product_sphere") return product_sphere(n, j.at("radius").get<double>(), j.at("length").get<double>());
    if (k == "synthetic_end") return synthetic_end(n, j.at("mu").get<double>(), j.value("c", 0.0));
    throw ConfigError("unknown model kind '" + k + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model descriptor: ") + e.what());
  }
}

}  // namespace ym
