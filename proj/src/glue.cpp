#include "yamabe/glue.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ym {

using boost::math::quadrature::gauss;
using boost::math::quadrature::gauss_kronrod;

double Cutoff::value(double x) {
  if (x <= 1) return 1;
  if (x >= 2) return 0;
  const double u = x - 1;
  return 1 - u * u * u * (10 - 15 * u + 6 * u * u);
}

double Cutoff::d1(double x) {
  if (x <= 1 || x >= 2) return 0;
  const double u = x - 1;
  return -30 * u * u * (1 - u) * (1 - u);
}

double Cutoff::d2(double x) {
  if (x <= 1 || x >= 2) return 0;
  const double u = x - 1;
  return -60 * u * (1 - u) * (1 - 2 * u);
}

static double cut_arg(const RadialCutoff& c, double r) {
  return 1 + std::log(r / c.r_out) / std::log(c.r_in / c.r_out);
}

double RadialCutoff::beta1(double r) const { return Cutoff::value(cut_arg(*this, r)); }

double RadialCutoff::dbeta1(double r) const {
  const double L = std::log(r_in / r_out);
  return Cutoff::d1(cut_arg(*this, r)) / (r * L);
}

double RadialCutoff::d2beta1(double r) const {
  const double L = std::log(r_in / r_out);
  const double x = cut_arg(*this, r);
  return Cutoff::d2(x) / (r * L * r * L) - Cutoff::d1(x) / (r * r * L);
}

double RadialCutoff::lap_beta1(double r) const { return -(d2beta1(r) + (n - 1) * dbeta1(r) / r); }

RadialCutoff beta_fields(int n, double r_in, double r_out) {
  if (!(r_in > 0) || !(r_in < r_out)) throw ConfigError("cutoff radii out of order");
  return {n, r_in, r_out};
}

std::string family_name(Family f) {
  switch (f) {
    case Family::PosGraft: return "PosGraft";
    case Family::NeckJoin: return "NeckJoin";
    case Family::ZeroGraft: return "ZeroGraft";
    case Family::ZeroNeck: return "ZeroNeck";
    case Family::HatNegZero: return "HatNegZero";
  }
  return "?";
}

Family family_from_name(const std::string& s) {
  for (Family f : {Family::PosGraft, Family::NeckJoin, Family::ZeroGraft, Family::ZeroNeck, Family::HatNegZero})
    if (family_name(f) == s) return f;
  throw ConfigError("unknown family '" + s + "'");
}

bool is_neck(Family f) { return f == Family::NeckJoin || f == Family::ZeroNeck; }
bool is_zero(Family f) { return f == Family::ZeroGraft || f == Family::ZeroNeck || f == Family::HatNegZero; }

double k_lower(int n) { return (n - 2.0) * (n + 2.0) / (2.0 * (n + 1)); }
double k_upper(int n) { return (n - 2.0) * (n + 2.0) / (2.0 * n); }
double k_default(int n) { return 0.5 * (k_lower(n) + k_upper(n)); }

double alpha_exponent(int n, double k) {
  return std::min(2.0 / n, 2 * k * (n + 1) / (n + 2) - (n - 2));
}

void GlueParams::validate(int n) const {
  if (!(delta > 0 && delta < 1)) throw ConfigError("delta must lie in (0,1)");
  if (!(t > 0)) throw ConfigError("t must be positive");
  if (!(t < delta)) throw ConfigError("t must be smaller than delta");
  if (nu != -1 && nu != 0 && nu != 1) throw ConfigError("nu must be -1, 0 or 1");
  if (is_zero(family)) {
    if (family != Family::HatNegZero && nu != 0) throw ConfigError(family_name(family) + " needs nu = 0");
    if (family == Family::HatNegZero && nu != -1) throw ConfigError("HatNegZero needs nu = -1");
    const double kk = k == 0 ? k_default(n) : k;
    if (!(kk > k_lower(n) && kk < k_upper(n))) {
      std::ostringstream os;
      os << "k = " << kk << " outside (" << k_lower(n) << ", " << k_upper(n) << ")";
      throw ConfigError(os.str());
    }
  } else if (nu == 0) {
    throw ConfigError(family_name(family) + " needs nu = +-1; use the zero-curvature families for nu = 0");
  }
}

nlohmann::json GlueParams::to_json() const {
  return {{"family", family_name(family)}, {"t", t}, {"delta", delta}, {"nu", nu}, {"k", k}, {"seed", seed}};
}

GlueParams GlueParams::from_json(const nlohmann::json& j) {
  try {
    GlueParams p;
    p.family = family_from_name(j.at("family").get<std::string>());
    p.t = j.at("t").get<double>();
    p.delta = j.value("delta", 0.45);
    p.nu = j.value("nu", is_zero(p.family) ? (p.family == Family::HatNegZero ? -1.0 : 0.0) : 1.0);
    p.k = j.value("k", 0.0);
    p.seed = j.value("seed", uint64_t{1});
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad family descriptor: ") + e.what());
  }
}

std::string region_name(Region r) {
  switch (r) {
    case Region::Prime: return "prime";
    case Region::AnnulusPrime: return "annulus_prime";
    case Region::Inner: return "inner";
    case Region::AnnulusDouble: return "annulus_double";
    case Region::Double: return "double";
  }
  return "?";
}

ChartComplex ChartComplex::build(const GlueParams& params, const Model& Mp, const Model& Mpp) {
  const int n = Mp.dim();
  if (Mpp.dim() != n) throw ConfigError("component dimensions differ");
  params.validate(n);
  ChartComplex cx;
  cx.params_ = params;
  cx.mp_ = Mp;
  cx.mpp_ = Mpp;
  cx.C_ = make_constants(n);
  const Family f = params.family;
  const double t = params.t;
  cx.k_ = is_zero(f) ? (params.k == 0 ? k_default(n) : params.k) : 0;

  if (!Mp.has_chart()) throw ConfigError("M' needs a chart around the gluing point");
  auto same = [](double x, double y) { return std::abs(x - y) <= 1e-12 * std::max(1.0, std::abs(y)); };
  if (f != Family::HatNegZero && !same(Mp.nu(), params.nu)) {
    std::ostringstream os;
    os << "M' has curvature " << Mp.nu() << " but the family targets nu = " << params.nu;
    throw ConfigError(os.str());
  }
  if (is_neck(f)) {
    if (!Mpp.has_chart()) throw ConfigError("M'' needs a chart around the gluing point");
    if (!same(Mpp.nu(), params.nu)) throw ConfigError("M'' curvature does not match nu");
  } else if (!Mpp.has_stereographic()) {
    throw ConfigError("grafting needs a stereographic projection of M''");
  }

  switch (f) {
    case Family::PosGraft:
      cx.T2_ = std::pow(t, 6);
      cx.r_in_ = t * t;
      cx.r_out_ = t;
      break;
    case Family::NeckJoin:
      cx.T2_ = std::pow(t, 12);
      cx.r_in_ = t * t;
      cx.r_out_ = t;
      break;
    case Family::ZeroGraft:
    case Family::HatNegZero:
      cx.T2_ = t;
      cx.r_in_ = std::pow(t, (n - 2.0) / n);
      cx.r_out_ = std::pow(t, 2 * cx.k_ / (n + 2.0));
      break;
    case Family::ZeroNeck:
      cx.T2_ = t * t;
      cx.r_in_ = std::pow(t, (n - 2.0) / n);
      cx.r_out_ = std::pow(t, 2 * cx.k_ / (n + 2.0));
      break;
  }
  if (!(cx.r_in_ < cx.r_out_)) throw ConfigError("annulus radii out of order");
  if (!(cx.r_out_ < Mp.chart_radius())) throw ConfigError("outer annulus radius leaves the chart of M'");
  if (is_neck(f) && !(cx.r_out_ < Mpp.chart_radius())) throw ConfigError("outer annulus radius leaves the chart of M''");

  cx.waist_ = Mpp.has_chart() ? std::sqrt(cx.T2_) : 0.0;
  if (is_neck(f)) cx.neck_m_ = std::pow(cx.T2_, 0.5 * (n - 2));
  else cx.graft_s_ = cx.T2_;
  if (!is_neck(f) && Mpp.has_chart() && !(cx.T2_ / cx.waist_ < Mpp.chart_radius()))
    throw ConfigError("waist leaves the chart of M''");

  if (f == Family::ZeroNeck && Mp.compact() && Mpp.compact()) {
    const double v1 = Mp.volume(), v2 = Mpp.volume();
    if (std::abs(v1 - v2) > 1e-9 * std::max(v1, v2)) {
      std::ostringstream os;
      os << "volume_mismatch: vol(M')=" << v1 << " vol(M'')=" << v2
         << "; the neck eigenfunction is then not balanced and its curvature pairing is O(t^{n-2})";
      cx.warnings_.push_back(os.str());
    }
  }
  if (f == Family::HatNegZero)
    cx.warnings_.push_back("hat_metric_only: built for metadata, kappa = (n-2)/n, no solve");
  return cx;
}

bool ChartComplex::antipodal_waist() const {
  return !is_neck(params_.family) && mpp_.kind() == Model::Kind::ProjectiveSpace;
}

ChartPoint ChartComplex::point_from_sigma(double sigma, double alpha) const {
  if (waist_ > 0 && sigma < std::log(waist_)) return {1, T2_ * std::exp(-sigma), alpha};
  return {0, std::exp(sigma), alpha};
}

double ChartComplex::sigma_of(const ChartPoint& p) const {
  return p.side == 0 ? std::log(p.r) : std::log(T2_ / p.r);
}

Region ChartComplex::region(const ChartPoint& p) const {
  if (p.side == 0) {
    if (p.r >= r_out_) return Region::Prime;
    if (p.r >= r_in_) return Region::AnnulusPrime;
    return Region::Inner;
  }
  if (!is_neck(params_.family)) return Region::Inner;
  if (p.r >= r_out_) return Region::Double;
  if (p.r >= r_in_) return Region::AnnulusDouble;
  return Region::Inner;
}

double ChartComplex::component_factor(const ChartPoint& p) const {
  if (p.side == 0) return mp_.chart_value(p.r, p.alpha);
  if (!mpp_.has_chart()) throw Error("M'' has no chart around the gluing point");
  return mpp_.chart_value(p.r, p.alpha);
}

double ChartComplex::component_dr(const ChartPoint& p) const {
  if (p.side == 0) return mp_.chart_dr(p.r, p.alpha);
  if (!mpp_.has_chart()) throw Error("M'' has no chart around the gluing point");
  return mpp_.chart_dr(p.r, p.alpha);
}

double ChartComplex::inner_factor(const ChartPoint& p) const {
  const int n = C_.n;
  if (is_neck(params_.family)) return 1 + neck_m_ * std::pow(p.r, 2 - n);
  if (p.side == 0) return mpp_.stereo_value(p.r / graft_s_, p.alpha);
  const double h = 0.5 * (n - 2);
  return std::pow(T2_, h) * mpp_.stereo_value(1 / p.r, p.alpha) * std::pow(p.r, 2 - n);
}

double ChartComplex::inner_dr(const ChartPoint& p) const {
  const int n = C_.n;
  if (is_neck(params_.family)) return (2 - n) * neck_m_ * std::pow(p.r, 1 - n);
  if (p.side == 0) return mpp_.stereo_dr(p.r / graft_s_, p.alpha) / graft_s_;
  const double h = 0.5 * (n - 2);
  const double r = p.r;
  const double xi = mpp_.stereo_value(1 / r, p.alpha), dxi = mpp_.stereo_dr(1 / r, p.alpha);
  return std::pow(T2_, h) * (-dxi * std::pow(r, -n) + (2 - n) * xi * std::pow(r, 1 - n));
}

double ChartComplex::psi(const ChartPoint& p) const {
  switch (region(p)) {
    case Region::Prime:
    case Region::Double: return component_factor(p);
    case Region::Inner: return inner_factor(p);
    default: {
      const double b = cutoff().beta1(p.r);
      return b * component_factor(p) + (1 - b) * inner_factor(p);
    }
  }
}

double ChartComplex::psi_dr(const ChartPoint& p) const {
  switch (region(p)) {
    case Region::Prime:
    case Region::Double: return component_dr(p);
    case Region::Inner: return inner_dr(p);
    default: {
      const RadialCutoff c = cutoff();
      const double b = c.beta1(p.r), db = c.dbeta1(p.r);
      return b * component_dr(p) + (1 - b) * inner_dr(p) + db * (component_factor(p) - inner_factor(p));
    }
  }
}

double ChartComplex::cyl_factor(const ChartPoint& p) const { return psi(p) * std::pow(p.r, 0.5 * (C_.n - 2)); }

double ChartComplex::eps(const ChartPoint& p) const {
  const Region reg = region(p);
  if (reg == Region::Prime || reg == Region::Double) return 0;
  if (reg == Region::Inner) return params_.nu;
  const RadialCutoff c = cutoff();
  const double r = p.r;
  const double pc = component_factor(p), dpc = component_dr(p);
  const double xi = inner_factor(p), dxi = inner_dr(p);
  const double b = c.beta1(r);
  const double pt = b * pc + (1 - b) * xi;
  if (!(pt > 0)) throw NumericalError("non-positive glued factor in the annulus");
  const double Sc = p.side == 0 ? mp_.nu() : mpp_.nu();
  const double lap = Sc * b * std::pow(pc, C_.p - 1) +
                     C_.a * (c.lap_beta1(r) * (pc - xi) - 2 * c.dbeta1(r) * (dpc - dxi));
  return params_.nu - std::pow(pt, 1 - C_.p) * lap;
}

double ChartComplex::bulk_factor(int side, double s, double theta) const {
  if (side == 0 || is_neck(params_.family)) return 1;
  if (mpp_.kind() != Model::Kind::ProductSphere) throw Error("bulk factor needs a product-sphere M''");
  return std::pow(T2_, 0.5 * (C_.n - 2)) * mpp_.green_product(s, theta);
}

double ChartComplex::bulk_eps(int side) const {
  if (side == 0 || is_neck(params_.family)) return 0;
  return params_.nu;
}

double ChartComplex::factor_in_chart(const std::string& chart, double r, double alpha) const {
  const int n = C_.n;
  const double h = 0.5 * (n - 2);
  if (chart == "M'") return psi({0, r, alpha});
  if (chart == "M''") {
    if (is_neck(params_.family)) return psi({1, r, alpha});
    // psi'' G written through the regular part of the Green's function
    if (mpp_.kind() == Model::Kind::ProductSphere)
      return std::pow(T2_, h) * (std::pow(r, 2 - n) + mpp_.chart_value(r, alpha) * mpp_.green_regular(r, alpha));
    return psi({1, r, alpha});
  }
  if (chart == "neck") return std::pow(waist_, h) * (1 + std::pow(r, 2 - n));
  if (chart == "hat") return std::pow(graft_s_, h) * mpp_.stereo_value(r, alpha);
  throw Error("unknown chart " + chart);
}

std::vector<Chart> ChartComplex::charts() const {
  std::vector<Chart> out;
  const double T = waist_;
  out.push_back({"M'", "ball", 0, std::min(mp_.chart_radius(), 1.0), 1});
  if (is_neck(params_.family)) {
    out.push_back({"neck", "annulus", r_in_ > 0 ? T / r_in_ : 0, r_in_ / T, T * T});
    out.push_back({"M''", "ball", 0, std::min(mpp_.chart_radius(), 1.0), 1});
  } else {
    const double xlo = mpp_.has_chart() ? 1 / mpp_.chart_radius() : std::pow(params_.delta, -4);
    out.push_back({"hat", "exterior", xlo, r_in_ / graft_s_, graft_s_ * graft_s_});
    if (mpp_.has_chart()) out.push_back({"M''", "ball", 0, mpp_.chart_radius(), T2_ * T2_});
  }
  return out;
}

std::vector<Gluing> ChartComplex::gluings() const {
  std::vector<Gluing> out;
  const double T = waist_;
  if (is_neck(params_.family)) {
    out.push_back({"M'", "neck", "scaling", T, T, r_in_});
    out.push_back({"M''", "neck", "inversion", T, T, r_in_});
    out.push_back({"M'", "M''", "inversion", T2_, T2_ / r_in_, r_in_});
  } else {
    const double s = graft_s_;
    if (mpp_.has_chart()) {
      const double rho = 0.9 * mpp_.chart_radius();
      out.push_back({"M'", "hat", "scaling", s, std::max(T, s / rho), r_in_});
      out.push_back({"hat", "M''", "inversion", 1, 1 / rho, r_in_ / s});
      out.push_back({"M'", "M''", "inversion", T2_, T2_ / rho, r_in_});
    } else {
      out.push_back({"M'", "hat", "scaling", s, s * std::pow(params_.delta, -4), r_in_});
    }
  }
  return out;
}

double ChartComplex::overlap_check(int samples) const {
  const int n = C_.n;
  const double h = 0.5 * (n - 2);
  double worst = 0;
  const int na = mp_.radial() && mpp_.radial() ? 1 : 5;
  for (const Gluing& g : gluings()) {
    if (!(g.lo < g.hi)) continue;
    for (int i = 0; i < samples; ++i) {
      const double r = g.lo * std::pow(g.hi / g.lo, (i + 0.5) / samples);
      for (int ia = 0; ia < na; ++ia) {
        const double al = na == 1 ? 0.0 : M_PI * ia / (na - 1);
        double rb, c;
        if (g.map == "scaling") {
          rb = r / g.lambda;
          c = 1 / g.lambda;
        } else {
          rb = g.lambda / r;
          c = g.lambda / (r * r);
        }
        const double fa = factor_in_chart(g.a, r, al);
        const double fb = factor_in_chart(g.b, rb, al) * std::pow(c, h);
        worst = std::max(worst, std::abs(fa - fb) / std::abs(fa));
      }
    }
  }
  return worst;
}

nlohmann::json ChartComplex::to_json() const {
  nlohmann::json j;
  j["params"] = params_.to_json();
  j["prime"] = mp_.to_json();
  j["dprime"] = mpp_.to_json();
  j["derived"] = {{"n", C_.n},          {"k", k_},          {"T2", T2_},
                  {"r_in", r_in_},      {"r_out", r_out_}, {"waist", waist_},
                  {"neck_m", neck_m_},  {"graft_scale", graft_s_},
                  {"alpha", is_zero(params_.family) ? alpha_exponent(C_.n, k_) : 0.0}};
  if (params_.family == Family::HatNegZero) j["derived"]["kappa"] = (C_.n - 2.0) / C_.n;
  j["warnings"] = warnings_;
  return j;
}

ChartComplex ChartComplex::from_json(const nlohmann::json& j) {
  try {
    return build(GlueParams::from_json(j.at("params")), Model::from_json(j.at("prime")),
                 Model::from_json(j.at("dprime")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad complex descriptor: ") + e.what());
  }
}

AnnulusModel epsilon_field(const ChartComplex& cx, int side, int samples) {
  if (side == 1 && !cx.two_annuli()) throw Error("graft families have a single annulus");
  AnnulusModel m;
  m.complex = &cx;
  m.side = side;
  m.r_in = cx.r_in();
  m.r_out = cx.r_out();
  const RadialCutoff c = cx.cutoff();
  for (int i = 0; i < samples; ++i) {
    const double r = m.r_in * std::pow(m.r_out / m.r_in, double(i) / (samples - 1));
    const ChartPoint p{side, r, 0};
    m.r.push_back(r);
    m.beta1.push_back(c.beta1(r));
    const double ps = cx.psi(p);
    if (!(ps > 0)) throw NumericalError("non-positive glued factor in the annulus");
    m.psi_t.push_back(ps);
    m.eps.push_back(cx.eps(p));
  }
  return m;
}

namespace {

constexpr double kTol = 1e-10;

// integral over the chart shell r in [r0, r1] of f(r, alpha) dV_flat; the radial
// integral is split at the points returned by cuts(alpha)
template <class F, class Cuts>
double shell_integral(const ChartComplex& cx, double r0, double r1, F&& f, double* err, Cuts&& cuts) {
  const int n = cx.dim();
  const bool radial = cx.prime().radial() && cx.dprime().radial();
  auto radial_part = [&](double alpha) {
    auto g = [&](double s) {
      const double r = std::exp(s);
      return f(r, alpha) * std::pow(r, n);
    };
    const double l0 = std::log(r0), l1 = std::log(r1), gap = 1e-3 * (l1 - l0);
    std::vector<double> pts{l0};
    // cuts hugging an end only catch roundoff sign flips of a vanishing integrand
    for (double c : cuts(alpha))
      if (std::log(c) > pts.back() + gap && std::log(c) < l1 - gap) pts.push_back(std::log(c));
    pts.push_back(l1);
    // bounded depth: where eps nearly vanishes its cancellation noise defeats a relative tolerance
    const int depth = radial ? 7 : 3;
    double v = 0;
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
      const int pieces = 4;
      for (int j = 0; j < pieces; ++j) {
        const double a = pts[i] + (pts[i + 1] - pts[i]) * j / pieces;
        const double b = pts[i] + (pts[i + 1] - pts[i]) * (j + 1) / pieces;
        double e = 0;
        v += gauss_kronrod<double, 61>::integrate(g, a, b, depth, kTol, &e);
        if (err) *err += e;
      }
    }
    return v;
  };
  if (radial) return sphere_area(n) * radial_part(0);
  // the angular dependence is analytic and mild: fixed Gauss-Legendre
  auto ga = [&](double a) { return radial_part(a) * std::pow(std::sin(a), n - 2); };
  return sphere_area(n - 1) * gauss<double, 20>::integrate(ga, 0.0, M_PI);
}

template <class F>
double shell_integral(const ChartComplex& cx, double r0, double r1, F&& f, double* err) {
  return shell_integral(cx, r0, r1, f, err, [](double) { return std::vector<double>{}; });
}

// sign changes of eps along a ray of the annulus
std::vector<double> eps_zeros(const ChartComplex& cx, int side, double alpha) {
  std::vector<double> out;
  const int N = 256;
  const double l0 = std::log(cx.r_in()), l1 = std::log(cx.r_out());
  auto e = [&](double s) { return cx.eps({side, std::exp(s), alpha}); };
  double sp = l0, ep = e(l0);
  for (int i = 1; i <= N; ++i) {
    const double s = l0 + (l1 - l0) * i / N;
    const double es = e(s);
    if ((ep < 0 && es > 0) || (ep > 0 && es < 0)) {
      boost::uintmax_t it = 200;
      auto r = boost::math::tools::toms748_solve(e, sp, s, ep, es,
                                                 boost::math::tools::eps_tolerance<double>(50), it);
      out.push_back(std::exp(0.5 * (r.first + r.second)));
    }
    sp = s;
    ep = es;
  }
  return out;
}

// g_t volume of the region where eps = nu away from the annuli
double constant_region_volume(const ChartComplex& cx, double* err) {
  const int n = cx.dim();
  const double p = cx.constants().p;
  auto vol = [&](double r, double a) { return std::pow(cx.psi({0, r, a}), p); };
  auto vol1 = [&](double r, double a) { return std::pow(cx.psi({1, r, a}), p); };
  const Family f = cx.params().family;
  if (is_neck(f)) {
    // neck: side 0 from the waist to r_in, and its mirror on side 1
    return shell_integral(cx, cx.waist(), cx.r_in(), vol, err) +
           shell_integral(cx, cx.waist(), cx.r_in(), vol1, err);
  }
  const Model& M = cx.dprime();
  switch (M.kind()) {
    case Model::Kind::RoundSphere: return sphere_area(n) * std::pow(cx.r_in(), n) / n;
    case Model::Kind::ProjectiveSpace: {
      const double lo = cx.T2() * std::pow(M.mass(), 1.0 / (n - 2));
      double v = shell_integral(cx, std::max(lo, cx.waist()), cx.r_in(), vol, err);
      if (lo < cx.waist()) v += shell_integral(cx, cx.T2() / cx.waist(), cx.T2() / lo, vol1, err);
      return v;
    }
    case Model::Kind::ProductSphere: {
      const double rho = 0.5 * M.chart_radius();
      // side 0 down to the waist, side 1 out to rho, then the Green's-function bulk
      double v = shell_integral(cx, cx.waist(), cx.r_in(), vol, err);
      v += shell_integral(cx, cx.T2() / cx.waist(), rho, vol1, err);
      v += std::pow(cx.T2(), n) * M.green_power_volume(rho);
      return v;
    }
    default: throw Error("constant region volume not available for " + M.name());
  }
}

}  // namespace

double annulus_volume(const ChartComplex& cx, int side) {
  const double p = cx.constants().p;
  auto f = [&](double r, double a) { return std::pow(cx.psi({side, r, a}), p); };
  return shell_integral(cx, cx.r_in(), cx.r_out(), f, nullptr);
}

EpsNorms epsilon_norms(const ChartComplex& cx, double q) {
  if (!(q >= 1)) throw Error("norm exponent must be at least 1");
  const double p = cx.constants().p;
  EpsNorms out;
  double err = 0;
  const int sides = cx.two_annuli() ? 2 : 1;
  for (int s = 0; s < sides; ++s) {
    auto f = [&](double r, double a) {
      const ChartPoint pt{s, r, a};
      return std::pow(std::abs(cx.eps(pt)), q) * std::pow(cx.psi(pt), p);
    };
    out.annulus += shell_integral(cx, cx.r_in(), cx.r_out(), f, &err,
                                  [&](double a) { return eps_zeros(cx, s, a); });
    out.support_volume += annulus_volume(cx, s);
    const AnnulusModel m = epsilon_field(cx, s, 2000);
    for (double e : m.eps) out.sup = std::max(out.sup, std::abs(e));
    if (!cx.prime().radial() || !cx.dprime().radial()) {
      for (int ia = 1; ia <= 8; ++ia)
        for (int i = 0; i < 400; ++i) {
          const double r = cx.r_in() * std::pow(cx.r_out() / cx.r_in(), i / 399.0);
          out.sup = std::max(out.sup, std::abs(cx.eps({s, r, M_PI * ia / 8})));
        }
    }
  }
  const double nu = cx.params().nu;
  if (nu != 0) {
    const double V = constant_region_volume(cx, &err);
    out.constant = std::pow(std::abs(nu), q) * V;
    out.support_volume += V;
    out.sup = std::max(out.sup, std::abs(nu));
  }
  out.norm = std::pow(out.annulus + out.constant, 1 / q);
  out.quad_error = err;
  return out;
}

CurvatureIntegral total_curvature_integral(const ChartComplex& cx) {
  const Family f = cx.params().family;
  if (f != Family::ZeroGraft && f != Family::ZeroNeck)
    throw Error("curvature integral is defined for the zero-curvature families");
  const int n = cx.dim();
  const double p = cx.constants().p;
  CurvatureIntegral out;
  const double mu = f == Family::ZeroNeck ? 1.0 : cx.dprime().mass();
  out.leading = (n - 2) * sphere_area(n) * mu * std::pow(cx.params().t, n - 2);
  out.alpha = alpha_exponent(n, cx.k());
  const int sides = cx.two_annuli() ? 2 : 1;
  for (int s = 0; s < sides; ++s) {
    auto g = [&](double r, double a) {
      const ChartPoint pt{s, r, a};
      return cx.eps(pt) * std::pow(cx.psi(pt), p);
    };
    const double v = shell_integral(cx, cx.r_in(), cx.r_out(), g, &out.quad_error);
    out.per_annulus.push_back(v);
    out.integral += v;
  }
  return out;
}

HatMetric build_hat_metric(int n, double volume, double t, const Field& xi) {
  if (xi.size() == 0) throw Error("empty Green's function");
  if (xi.minCoeff() < -1e-12) throw Error("Green's function normalization violated: negative minimum");
  if (!(volume > 0) || !(t > 0)) throw ConfigError("volume and t must be positive");
  const double e1 = (n - 2.0) * (n - 2.0) / (2.0 * n);
  const double e2 = (n - 2.0) * (n + 2.0) / (2.0 * n);
  const double e3 = 2.0 * (n - 2.0) / n;
  HatMetric H;
  H.t = t;
  H.kappa = (n - 2.0) / n;
  H.factor = (std::pow(t, e1) + std::pow(t, e2) * volume * xi.array().max(0.0)).matrix();
  H.S_hat = Field(xi.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i)
    H.S_hat[i] = -std::pow(1 + std::pow(t, e3) * volume * std::max(xi[i], 0.0), -(n + 2.0) / (n - 2.0));
  return H;
}

double conformal_class_match(const ChartComplex& a, const ChartComplex& b, int samples) {
  if (a.prime().to_json() != b.prime().to_json() || a.dprime().to_json() != b.dprime().to_json())
    throw ConfigError("conformal class comparison needs the same component manifolds");
  // valid sigma range of the chart descriptions of one complex
  auto range = [](const ChartComplex& c, double& lo, double& hi) {
    const double rp = std::min(0.9 * c.prime().chart_radius(), 0.9);
    const double rq = c.dprime().has_chart() ? std::min(0.9 * c.dprime().chart_radius(), 0.9) : 0.0;
    hi = std::log(rp);
    lo = rq > 0 ? std::log(c.T2() / rq) : std::log(c.r_in()) - 2;
  };
  double alo, ahi, blo, bhi;
  range(a, alo, ahi);
  range(b, blo, bhi);
  const double shift = std::log(a.T2() / b.T2());
  // sigma (b's M' label) such that sigma and sigma + shift are valid in a, sigma valid in b
  const double lo = std::max({blo, alo, alo - shift});
  const double hi = std::min({bhi, ahi, ahi - shift});
  if (!(lo < hi)) return std::numeric_limits<double>::infinity();
  const int na = a.prime().radial() && a.dprime().radial() ? 1 : 5;
  double worst = 0;
  for (int i = 0; i < samples; ++i) {
    const double s = lo + (hi - lo) * (i + 0.5) / samples;
    for (int ia = 0; ia < na; ++ia) {
      const double al = na == 1 ? 0.0 : M_PI * ia / (na - 1);
      const double Pb = b.cyl_factor(b.point_from_sigma(s, al));
      // ratio through the M' labels and through the M'' labels
      const double r1 = a.cyl_factor(a.point_from_sigma(s, al)) / Pb;
      const double r2 = a.cyl_factor(a.point_from_sigma(s + shift, al)) / Pb;
      worst = std::max(worst, std::abs(r1 / r2 - 1));
    }
  }
  return worst;
}

}  // namespace ym
