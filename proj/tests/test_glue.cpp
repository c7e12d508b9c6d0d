#include "yamabe/glue.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace ym;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

GlueParams family(Family f, double t, double nu, double k = 0) {
  GlueParams p;
  p.family = f;
  p.t = t;
  p.nu = nu;
  p.k = k;
  return p;
}

Model product3() { return Model::product_sphere(3, std::sqrt(2.0), 2 * M_PI); }

// curvature of psi^{p-2} h from fourth-order differences of psi in Cartesian coordinates
double fd_curvature(const ChartComplex& cx, int side, double r, double alpha) {
  const int n = cx.dim();
  const Constants C = cx.constants();
  std::vector<double> x(n, 0.0);
  x[0] = r * std::cos(alpha);
  x[1] = r * std::sin(alpha);
  auto psi = [&](const std::vector<double>& y) {
    double rr = 0;
    for (double v : y) rr += v * v;
    rr = std::sqrt(rr);
    return cx.psi({side, rr, std::acos(std::clamp(y[0] / rr, -1.0, 1.0))});
  };
  const double h = 2e-3 * r;
  double lap = 0;
  for (int d = 0; d < n; ++d) {
    auto at = [&](double s) {
      auto y = x;
      y[d] += s;
      return psi(y);
    };
    lap -= (-at(2 * h) + 16 * at(h) - 30 * at(0) + 16 * at(-h) - at(-2 * h)) / (12 * h * h);
  }
  return std::pow(psi(x), 1 - C.p) * C.a * lap;
}

}  // namespace

TEST_CASE("cutoff profile") {
  CHECK(Cutoff::value(0.3) == 1);
  CHECK(Cutoff::value(1) == 1);
  CHECK(Cutoff::value(2) == 0);
  CHECK(Cutoff::value(5) == 0);
  for (double x : {1.0, 2.0}) {
    CHECK_THAT(Cutoff::d1(x), WithinAbs(0, 1e-15));
    CHECK_THAT(Cutoff::d2(x), WithinAbs(0, 1e-15));
  }
  double prev = 1;
  for (int i = 1; i < 1000; ++i) {
    const double x = 1 + i / 1000.0;
    REQUIRE(Cutoff::value(x) < prev);
    prev = Cutoff::value(x);
    const double h = 1e-6;
    REQUIRE_THAT(Cutoff::d1(x), WithinAbs((Cutoff::value(x + h) - Cutoff::value(x - h)) / (2 * h), 1e-8));
    REQUIRE_THAT(Cutoff::d2(x), WithinAbs((Cutoff::d1(x + h) - Cutoff::d1(x - h)) / (2 * h), 1e-7));
  }
}

TEST_CASE("radial cutoff") {
  for (double t : {0.05, 0.1, 0.2, 0.3}) {
    auto b = beta_fields(3, t * t, t);
    CHECK(b.beta1(t) == 1);
    CHECK(b.beta1(t * t) == 0);
    double worst = 0;
    for (int i = 0; i <= 500; ++i) {
      const double r = t * t * std::pow(1 / t, i / 500.0);
      CHECK_THAT(b.beta1(r) + b.beta2(r), WithinAbs(1, 1e-15));
      worst = std::max(worst, r * std::abs(b.dbeta1(r)));
    }
    // max |sigma'| = 15/8
    CHECK(worst <= 15.0 / 8 / std::abs(std::log(t)) * (1 + 1e-12));
    CHECK(worst >= 15.0 / 8 / std::abs(std::log(t)) * 0.99);
  }
  auto b = beta_fields(4, 0.01, 0.2);
  for (double r : {0.02, 0.05, 0.11}) {
    const double h = 1e-4 * r;
    const double d2 = (b.beta1(r + h) - 2 * b.beta1(r) + b.beta1(r - h)) / (h * h);
    const double d1 = (b.beta1(r + h) - b.beta1(r - h)) / (2 * h);
    CHECK_THAT(b.lap_beta1(r), WithinRel(-(d2 + 3 * d1 / r), 1e-4));
  }
  CHECK_THROWS_AS(beta_fields(3, 0.2, 0.1), ConfigError);
}

TEST_CASE("family validation") {
  auto T = Model::flat_torus(3, 2.0);
  CHECK_THROWS_AS(ChartComplex::build(family(Family::NeckJoin, 0.1, 0), T, T), ConfigError);
  CHECK_THROWS_AS(ChartComplex::build(family(Family::ZeroNeck, 0.5, 0), T, T), ConfigError);
  CHECK_THROWS_AS(ChartComplex::build(family(Family::ZeroNeck, 0.1, 0, 0.3), T, T), ConfigError);
  CHECK_THROWS_AS(ChartComplex::build(family(Family::NeckJoin, 0.1, 1), Model::round_sphere(3, 2.0),
                                      Model::round_sphere(3)),
                  ConfigError);
  CHECK_THROWS_AS(ChartComplex::build(family(Family::PosGraft, 0.1, 1), Model::round_sphere(3),
                                      Model::hyperbolic_chart(3)),
                  ConfigError);
  auto ok = ChartComplex::build(family(Family::ZeroNeck, 0.1, 0), T, T);
  CHECK(ok.warnings().empty());
  auto warned = ChartComplex::build(family(Family::ZeroNeck, 0.1, 0), T, Model::flat_torus(3, 2.2));
  REQUIRE(warned.warnings().size() == 1);
  CHECK(warned.warnings()[0].rfind("volume_mismatch", 0) == 0);
}

TEST_CASE("exponents of the zero-curvature families") {
  for (int n = 3; n <= 8; ++n) {
    CHECK(k_lower(n) < k_default(n));
    CHECK(k_default(n) < k_upper(n));
    for (int i = 1; i < 20; ++i) {
      const double k = k_lower(n) + (k_upper(n) - k_lower(n)) * i / 20.0;
      CHECK(alpha_exponent(n, k) > 0);
    }
  }
  auto cx = ChartComplex::build(family(Family::ZeroNeck, 0.05, 0), Model::flat_torus(3, 1), Model::flat_torus(3, 1));
  CHECK_THAT(cx.r_in(), WithinRel(std::pow(0.05, 1.0 / 3), 1e-14));
  CHECK_THAT(cx.r_out(), WithinRel(std::pow(0.05, 2 * k_default(3) / 5), 1e-14));
  CHECK_THAT(cx.T2(), WithinRel(0.0025, 1e-14));
}

TEST_CASE("chart overlaps agree for every family") {
  std::vector<ChartComplex> cxs;
  auto T = Model::flat_torus(3, 2.0);
  cxs.push_back(ChartComplex::build(family(Family::ZeroNeck, 0.1, 0), T, T));
  cxs.push_back(ChartComplex::build(family(Family::ZeroNeck, 0.05, 0), Model::flat_torus(4, 1.0), Model::flat_torus(4, 1.3)));
  cxs.push_back(ChartComplex::build(family(Family::ZeroGraft, 0.05, 0), T, Model::projective_space(3)));
  cxs.push_back(ChartComplex::build(family(Family::ZeroGraft, 0.05, 0), T, Model::synthetic_end(3, 0, 0.5)));
  cxs.push_back(ChartComplex::build(family(Family::ZeroGraft, 0.05, 0), T, product3()));
  cxs.push_back(ChartComplex::build(family(Family::NeckJoin, 0.2, 1), product3(), product3()));
  cxs.push_back(ChartComplex::build(family(Family::NeckJoin, 0.2, 1), Model::round_sphere(3), Model::round_sphere(3)));
  cxs.push_back(ChartComplex::build(family(Family::NeckJoin, 0.2, -1), Model::hyperbolic_chart(3), Model::hyperbolic_chart(3)));
  cxs.push_back(ChartComplex::build(family(Family::PosGraft, 0.2, 1), product3(), product3()));
  cxs.push_back(ChartComplex::build(family(Family::PosGraft, 0.2, 1), Model::round_sphere(3), Model::projective_space(3)));
  for (auto& cx : cxs) {
    INFO(cx.to_json().dump());
    CHECK(cx.overlap_check(200) <= 1e-10);
  }
}

TEST_CASE("glued factor is positive and continuous across regions") {
  auto cx = ChartComplex::build(family(Family::NeckJoin, 0.15, 1), product3(), product3());
  const double T = cx.waist();
  for (int i = 0; i <= 400; ++i) {
    const double s = std::log(cx.T2() / 0.9) + (std::log(0.9) - std::log(cx.T2() / 0.9)) * i / 400.0;
    for (double al : {0.0, 1.0, 2.0, M_PI}) REQUIRE(cx.cyl_factor(cx.point_from_sigma(s, al)) > 0);
  }
  for (double r : {cx.r_in(), cx.r_out(), T})
    for (int side : {0, 1}) {
      const double a = cx.psi({side, r * (1 - 1e-12), 0.4}), b = cx.psi({side, r * (1 + 1e-12), 0.4});
      CHECK_THAT(a, WithinRel(b, 1e-9));
    }
}

TEST_CASE("eps matches a finite-difference curvature of psi_t") {
  struct Case {
    ChartComplex cx;
    int side;
  };
  auto T = Model::flat_torus(3, 1.0);
  std::vector<Case> cases = {
      {ChartComplex::build(family(Family::ZeroNeck, 0.05, 0), T, T), 0},
      {ChartComplex::build(family(Family::ZeroNeck, 0.05, 0), Model::flat_torus(4, 1.0), Model::flat_torus(4, 1.0)), 1},
      {ChartComplex::build(family(Family::ZeroGraft, 0.05, 0), T, Model::projective_space(3)), 0},
      {ChartComplex::build(family(Family::PosGraft, 0.2, 1), Model::round_sphere(3), Model::round_sphere(3)), 0},
      {ChartComplex::build(family(Family::NeckJoin, 0.25, 1), product3(), product3()), 1},
      {ChartComplex::build(family(Family::NeckJoin, 0.25, -1), Model::hyperbolic_chart(3), Model::hyperbolic_chart(3)), 0},
  };
  for (auto& c : cases) {
    const auto& cx = c.cx;
    INFO(cx.to_json().dump());
    const double nu = cx.params().nu;
    // interior points of the annulus, away from the C^2 joints of the cutoff
    for (double x : {0.2, 0.45, 0.7, 0.9}) {
      const double r = cx.r_out() * std::pow(cx.r_in() / cx.r_out(), x);
      for (double al : {0.3, 2.0}) {
        const double e = cx.eps({c.side, r, al});
        const double oracle = nu - fd_curvature(cx, c.side, r, al);
        CHECK_THAT(e, WithinAbs(oracle, 1e-6 * std::max(1.0, std::abs(e))));
      }
    }
    CHECK_THAT(cx.eps({c.side, cx.r_out(), 0.1}), WithinAbs(0, 1e-12));
  }
}

TEST_CASE("annulus profile") {
  auto cx = ChartComplex::build(family(Family::ZeroNeck, 0.05, 0), Model::flat_torus(3, 1), Model::flat_torus(3, 1));
  auto m = epsilon_field(cx, 0, 300);
  CHECK(m.beta1.front() == 0);
  CHECK(m.beta1.back() == 1);
  for (double v : m.psi_t) CHECK(v > 0);
}

TEST_CASE("eps norms agree with a direct trapezoid sum") {
  auto cx = ChartComplex::build(family(Family::ZeroNeck, 0.05, 0), Model::flat_torus(3, 1), Model::flat_torus(3, 1));
  const double q = 1.2;
  auto N = epsilon_norms(cx, q);
  const int M = 200000;
  double sum = 0;
  const double l0 = std::log(cx.r_in()), l1 = std::log(cx.r_out());
  for (int side : {0, 1})
    for (int i = 0; i <= M; ++i) {
      const double s = l0 + (l1 - l0) * i / M;
      const double r = std::exp(s);
      const double w = (i == 0 || i == M) ? 0.5 : 1.0;
      sum += w * std::pow(std::abs(cx.eps({side, r, 0})), q) * std::pow(cx.psi({side, r, 0}), 6) * r * r * r;
    }
  sum *= 4 * M_PI * (l1 - l0) / M;
  CHECK_THAT(N.annulus, WithinRel(sum, 1e-6));
  CHECK(N.constant == 0);
  CHECK_THAT(N.norm, WithinRel(std::pow(sum, 1 / q), 1e-6));
}

TEST_CASE("constant-region volume of a round graft is a flat ball") {
  auto cx = ChartComplex::build(family(Family::PosGraft, 0.1, 1), Model::round_sphere(3), Model::round_sphere(3));
  auto N = epsilon_norms(cx, 1.5);
  CHECK_THAT(N.constant, WithinRel(4 * M_PI / 3 * std::pow(0.01, 3), 1e-12));
  CHECK(N.sup >= 1);
}

TEST_CASE("curvature integral leading term") {
  // every annulus carries a (n-2) omega mu t^{n-2} at leading order: the flux of the neck through the annulus
  auto T = Model::flat_torus(3, 1.0);
  std::vector<double> ratio;
  for (double t : {0.02, 0.005, 0.001}) {
    auto cx = ChartComplex::build(family(Family::ZeroNeck, t, 0), T, T);
    auto I = total_curvature_integral(cx);
    REQUIRE(I.per_annulus.size() == 2);
    CHECK_THAT(I.per_annulus[0], WithinRel(I.per_annulus[1], 1e-10));
    CHECK_THAT(I.leading, WithinRel(4 * M_PI * t, 1e-14));
    ratio.push_back(I.per_annulus[0] / (8 * I.leading));
  }
  CHECK(std::abs(ratio.back() - 1) < std::abs(ratio.front() - 1));
  CHECK_THAT(ratio.back(), WithinAbs(1, 0.05));

  // zero mass graft: the integral decays faster than t^{n-2}
  std::vector<double> scaled;
  for (double t : {0.02, 0.005, 0.001}) {
    auto cx = ChartComplex::build(family(Family::ZeroGraft, t, 0), T, Model::synthetic_end(3, 0, 1));
    scaled.push_back(std::abs(total_curvature_integral(cx).integral) / t);
  }
  CHECK(scaled[1] < scaled[0]);
  CHECK(scaled[2] < scaled[1]);

  auto bad = ChartComplex::build(family(Family::NeckJoin, 0.1, 1), product3(), product3());
  CHECK_THROWS(total_curvature_integral(bad));
}

TEST_CASE("conformal class matching") {
  auto S = Model::round_sphere(3);
  auto P = product3();
  const double t = 0.3;
  auto graft_t2 = ChartComplex::build(family(Family::PosGraft, t * t, 1), P, S);
  auto graft_t = ChartComplex::build(family(Family::PosGraft, t, 1), P, S);
  auto neck_t = ChartComplex::build(family(Family::NeckJoin, t, 1), P, S);
  CHECK(conformal_class_match(neck_t, neck_t) == 0);
  CHECK(conformal_class_match(graft_t2, neck_t) <= 1e-10);
  CHECK(conformal_class_match(neck_t, graft_t2) <= 1e-10);
  CHECK(conformal_class_match(graft_t, neck_t) > 0.1);
  auto other = ChartComplex::build(family(Family::PosGraft, t, 1), P, Model::round_sphere(3, 1.0000001));
  CHECK_THROWS_AS(conformal_class_match(neck_t, other), ConfigError);
}

TEST_CASE("hat metric") {
  Field xi(5);
  xi << 0, 0.1, 1, 10, 100;
  const double vol = 3.0;
  auto H = build_hat_metric(3, vol, 0.01, xi);
  CHECK(H.S_hat[0] == -1);
  for (int i = 0; i < 5; ++i) {
    CHECK(H.S_hat[i] >= -1);
    CHECK(H.S_hat[i] < 0);
  }
  CHECK_THAT(H.kappa, WithinRel(1.0 / 3, 1e-15));
  double prev = 0;
  for (double t : {1e-2, 1e-4, 1e-8}) {
    const double s = build_hat_metric(3, vol, t, xi).S_hat[2];
    CHECK(s < prev);
    prev = s;
  }
  CHECK_THAT(prev, WithinAbs(-1, 1e-2));
  Field bad = xi;
  bad[0] = -0.5;
  CHECK_THROWS(build_hat_metric(3, vol, 0.01, bad));
}

TEST_CASE("complex json round trip") {
  auto cx = ChartComplex::build(family(Family::ZeroGraft, 0.03, 0, 0.7), Model::flat_torus(3, 1), Model::projective_space(3));
  auto j = cx.to_json();
  auto back = ChartComplex::from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.to_json() == j);
  CHECK(back.psi({0, 0.4, 0}) == cx.psi({0, 0.4, 0}));
}
