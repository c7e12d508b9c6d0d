#pragma once

#include "yamabe/core.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <string>

namespace ym {

// Built-in component manifolds.  Points near the gluing point are given in the
// normalized conformally flat chart (psi(0) = 1, d psi(0) = 0) by polar data
// (r, alpha), alpha measured from the rotation axis through the gluing point.
class Model {
 public:
  enum class Kind { FlatTorus, RoundSphere, HyperbolicChart, ProductSphere, ProjectiveSpace, SyntheticEnd };

  static Model flat_torus(int n, double side);
  static Model round_sphere(int n, double S = 1.0);
  static Model hyperbolic_chart(int n, double S = -1.0);
  // S^{n-1}(radius) x S^1(length)
  static Model product_sphere(int n, double radius, double length);
  // RP^n with the round metric of scalar curvature S
  static Model projective_space(int n, double S = 1.0);
  // asymptotically flat end 1 + mu r^{2-n} + c r^{1-n}, no compact core
  static Model synthetic_end(int n, double mu, double c);

  Kind kind() const { return kind_; }
  int dim() const { return n_; }
  double nu() const { return nu_; }
  std::string name() const;
  bool compact() const;
  bool has_chart() const { return kind_ != Kind::SyntheticEnd; }
  bool has_stereographic() const;
  bool radial() const { return kind_ != Kind::ProductSphere; }
  double volume() const;
  // largest radius of the normalized chart around the gluing point
  double chart_radius() const;

  // normalized chart factor psi' and its radial derivative
  double chart_value(double r, double alpha) const;
  double chart_dr(double r, double alpha) const;
  // radial ModelFactor of the chart (radial models only)
  ModelFactor chart_factor() const;

  // stereographic projection factor xi at asymptotic radius rho (x = u/|u|^2)
  double mass() const;
  double stereo_value(double rho, double alpha) const;
  double stereo_dr(double rho, double alpha) const;
  std::optional<ModelFactor> stereo_factor() const;

  // product sphere only
  double radius() const { return R_; }
  double length() const { return L_; }
  double dilation() const;  // lambda = exp(length/radius)
  // Green's function of a Delta + S with pole at the gluing point, divided by the
  // flat pole constant 1/(a(n-2)omega); argument in product coordinates (s, theta)
  double green_product(double s, double theta) const;
  // regular part H(u) = G(u) - |u|^{2-n}/psi'(u) in the normalized chart
  double green_regular(double r, double alpha) const;
  double green_regular_dr(double r, double alpha) const;
  // normalized chart point -> product coordinates (s, theta)
  void chart_to_product(double r, double alpha, double& s, double& theta) const;
  void product_to_chart(double s, double theta, double& r, double& alpha) const;
  // integral of G^p dV over the component minus the chart ball of radius rho
  double green_power_volume(double rho) const;

  double torus_side() const { return L_; }
  double sphere_curvature() const { return S_; }

  nlohmann::json to_json() const;
  static Model from_json(const nlohmann::json& j);

 private:
  Kind kind_ = Kind::FlatTorus;
  int n_ = 3;
  double nu_ = 0;
  double R_ = 0, L_ = 0, S_ = 0, mu_ = 0, c_ = 0;
};

}  // namespace ym
