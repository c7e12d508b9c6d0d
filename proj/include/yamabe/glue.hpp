#pragma once

#include "yamabe/core.hpp"
#include "yamabe/models.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace ym {

// C^2 quintic step: 1 for x <= 1, 0 for x >= 2
struct Cutoff {
  static double value(double x);
  static double d1(double x);
  static double d2(double x);
};

// beta1(r) = sigma(1 + log(r/r_out)/log(r_in/r_out)); 1 at r_out, 0 at r_in
struct RadialCutoff {
  int n = 3;
  double r_in = 0, r_out = 0;
  double beta1(double r) const;
  double beta2(double r) const { return 1 - beta1(r); }
  double dbeta1(double r) const;
  double d2beta1(double r) const;
  double lap_beta1(double r) const;  // nonnegative Laplacian on R^n
};
RadialCutoff beta_fields(int n, double r_in, double r_out);

enum class Family { PosGraft, NeckJoin, ZeroGraft, ZeroNeck, HatNegZero };
std::string family_name(Family f);
Family family_from_name(const std::string& s);
bool is_neck(Family f);
bool is_zero(Family f);

// admissible open interval for k
double k_lower(int n);
double k_upper(int n);
double k_default(int n);
double alpha_exponent(int n, double k);

struct GlueParams {
  Family family = Family::NeckJoin;
  double t = 0.1;
  double delta = 0.45;
  double nu = 1;
  double k = 0;  // 0 selects the midpoint for the zero-curvature families
  uint64_t seed = 1;
  void validate(int n) const;
  nlohmann::json to_json() const;
  static GlueParams from_json(const nlohmann::json& j);
};

enum class Region { Prime, AnnulusPrime, Inner, AnnulusDouble, Double };
std::string region_name(Region r);

// side 0: normalized chart v' of M'; side 1: normalized chart u'' of M''
struct ChartPoint {
  int side = 0;
  double r = 1;
  double alpha = 0;
};

struct Chart {
  std::string name;
  std::string domain;
  double lo = 0, hi = 0;  // radial extent in the chart's own coordinate
  double homothety = 1;
};

struct Gluing {
  std::string a, b;
  std::string map;  // "scaling" or "inversion"
  double lambda = 1;
  double lo = 0, hi = 0;  // overlap radii in chart a
};

// The glued manifold g_t as conformally flat charts of the two components,
// joined across the annulus (annuli) and the neck or grafted region.
class ChartComplex {
 public:
  static ChartComplex build(const GlueParams& params, const Model& Mp, const Model& Mpp);

  const GlueParams& params() const { return params_; }
  const Model& prime() const { return mp_; }
  const Model& dprime() const { return mpp_; }
  const Constants& constants() const { return C_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  int dim() const { return C_.n; }
  double k() const { return k_; }

  // |v'| |u''| = T2 on the identification
  double T2() const { return T2_; }
  double r_in() const { return r_in_; }
  double r_out() const { return r_out_; }
  // radius (in v') where the description switches from side 0 to side 1
  double waist() const { return waist_; }
  bool two_annuli() const { return is_neck(params_.family); }
  // graft into RP^n closes the neck at the waist by the antipodal map
  bool antipodal_waist() const;
  RadialCutoff cutoff() const { return beta_fields(C_.n, r_in_, r_out_); }
  // neck coefficient m in 1 + m r^{2-n}, or the graft scaling t^{-1}, t^{-6}
  double neck_coefficient() const { return neck_m_; }
  double graft_scale() const { return graft_s_; }

  ChartPoint point_from_sigma(double sigma, double alpha) const;
  double sigma_of(const ChartPoint& p) const;
  Region region(const ChartPoint& p) const;

  // component factor (psi' or psi'') in the normalized chart
  double component_factor(const ChartPoint& p) const;
  double component_dr(const ChartPoint& p) const;
  // inner factor: neck or stereographic end, expressed in the chart of p
  double inner_factor(const ChartPoint& p) const;
  double inner_dr(const ChartPoint& p) const;
  // g_t = psi^{p-2} h in the chart of p
  double psi(const ChartPoint& p) const;
  double psi_dr(const ChartPoint& p) const;
  // cylinder-normalized factor psi r^{(n-2)/2}, the same in both charts
  double cyl_factor(const ChartPoint& p) const;
  // g_t has scalar curvature nu - eps (curvature -eps when nu = 0)
  double eps(const ChartPoint& p) const;
  // g_t / g_component outside the chart balls, as a factor w with g_t = w^{p-2} g
  // (product-coordinate point (s, theta) of the component)
  double bulk_factor(int side, double s, double theta) const;
  double bulk_eps(int side) const;

  std::vector<Chart> charts() const;
  std::vector<Gluing> gluings() const;
  // max relative discrepancy of the factors across all gluings on sampled points
  double overlap_check(int samples) const;

  nlohmann::json to_json() const;
  static ChartComplex from_json(const nlohmann::json& j);

 private:
  GlueParams params_;
  Model mp_, mpp_;
  Constants C_;
  double k_ = 0;
  double T2_ = 1, r_in_ = 0, r_out_ = 0, waist_ = 0;
  double neck_m_ = 0, graft_s_ = 1;
  std::vector<std::string> warnings_;
  double factor_in_chart(const std::string& chart, double r, double alpha) const;
};

// radial (or axisymmetric) profile of one gluing annulus
struct AnnulusModel {
  const ChartComplex* complex = nullptr;
  int side = 0;
  double r_in = 0, r_out = 0;
  std::vector<double> r, beta1, psi_t, eps;  // sampled on a log-uniform grid, alpha = 0
};
AnnulusModel epsilon_field(const ChartComplex& cx, int side = 0, int samples = 400);

struct EpsNorms {
  double norm = 0;      // ||eps||_q in the g_t volume form
  double sup = 0;       // sup |eps| over annuli and constant regions
  double annulus = 0;   // q-th power contribution of the annuli
  double constant = 0;  // q-th power contribution of the regions where eps is constant
  double support_volume = 0;
  double quad_error = 0;
};
EpsNorms epsilon_norms(const ChartComplex& cx, double q);

struct CurvatureIntegral {
  std::vector<double> per_annulus;
  double integral = 0;
  double leading = 0;  // (n-2) omega mu t^{n-2}, per annulus
  double alpha = 0;
  double quad_error = 0;
};
CurvatureIntegral total_curvature_integral(const ChartComplex& cx);

// g_t volume of the annulus on one side (quadrature)
double annulus_volume(const ChartComplex& cx, int side);

// hat metric on M'' from a mean-corrected Green's function xi with min xi = 0
struct HatMetric {
  Field factor;
  Field S_hat;
  double t = 0, kappa = 0;
};
HatMetric build_hat_metric(int n, double volume, double t, const Field& xi);

// sup over sample points of the deviation of g_a/g_b from a single conformal factor
double conformal_class_match(const ChartComplex& a, const ChartComplex& b, int samples = 2000);

}  // namespace ym
