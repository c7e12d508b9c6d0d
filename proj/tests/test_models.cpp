#include "yamabe/models.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace ym;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Green's function of 8 Delta + 1 on S^2(sqrt 2) x S^1(L) from the eigen-expansion,
// normalized to 1/dist at the pole.  gamma: angle from the pole on S^2, x: offset along S^1.
double spectral_green(double gamma, double x, double L) {
  const double R = std::sqrt(2.0), a = 8;
  const double c = std::cos(gamma);
  double p0 = 1, p1 = c, sum = 0;
  for (int l = 0; l < 4000; ++l) {
    const double P = l == 0 ? p0 : p1;
    const double m = (2 * l + 1) / (2 * std::sqrt(2.0));
    const double radial = std::cosh(m * (L / 2 - std::abs(x))) / (2 * a * m * std::sinh(m * L / 2));
    const double term = (2 * l + 1) / (4 * M_PI * R * R) * P * radial;
    sum += term;
    if (l > 0) {
      const double p2 = ((2 * l + 1) * c * p1 - l * p0) / (l + 1);
      p0 = p1;
      p1 = p2;
    }
    if (l > 50 && std::abs(term) < 1e-17) break;
  }
  return 32 * M_PI * sum;
}

}  // namespace

TEST_CASE("model validation") {
  CHECK_THROWS_AS(Model::flat_torus(3, -1), ConfigError);
  CHECK_THROWS_AS(Model::round_sphere(3, -1), ConfigError);
  CHECK_THROWS_AS(Model::hyperbolic_chart(3, 1), ConfigError);
  CHECK_THROWS_AS(Model::product_sphere(3, 0, 1), ConfigError);
}

TEST_CASE("volumes") {
  CHECK_THAT(Model::flat_torus(3, 2).volume(), WithinRel(8.0, 1e-14));
  // round S^3 with S = 6 is the unit sphere
  CHECK_THAT(Model::round_sphere(3, 6).volume(), WithinRel(2 * M_PI * M_PI, 1e-14));
  CHECK_THAT(Model::projective_space(3, 6).volume(), WithinRel(M_PI * M_PI, 1e-14));
  CHECK_THAT(Model::product_sphere(3, std::sqrt(2.0), 2 * M_PI).volume(), WithinRel(16 * M_PI * M_PI, 1e-14));
}

TEST_CASE("normalized charts") {
  for (auto M : {Model::round_sphere(3), Model::hyperbolic_chart(4), Model::product_sphere(3, std::sqrt(2.0), 2 * M_PI)}) {
    CHECK_THAT(M.chart_value(0, 0), WithinAbs(1, 1e-14));
    CHECK_THAT(M.chart_dr(1e-9, 0.4), WithinAbs(0, 1e-7));
  }
}

TEST_CASE("product chart has curvature (n-1)(n-2)/R^2 by finite differences") {
  const double R = 1.3;
  auto M = Model::product_sphere(3, R, 7.0);
  const double a = 8, h = 1e-3;
  auto psi = [&](double x, double y, double z) {
    const double r = std::sqrt(x * x + y * y + z * z);
    return M.chart_value(r, std::acos(z / r));
  };
  for (auto [x, y, z] : {std::array<double, 3>{0.3, 0.1, 0.2}, {-0.4, 0.2, 0.5}, {0.05, 0.6, -0.3}}) {
    const double c = psi(x, y, z);
    const double lap = -(psi(x + h, y, z) + psi(x - h, y, z) + psi(x, y + h, z) + psi(x, y - h, z) +
                         psi(x, y, z + h) + psi(x, y, z - h) - 6 * c) / (h * h);
    CHECK_THAT(std::pow(c, -5) * a * lap, WithinRel(2 / (R * R), 1e-5));
  }
}

TEST_CASE("product chart radial derivative") {
  auto M = Model::product_sphere(3, std::sqrt(2.0), 2 * M_PI);
  for (double r : {0.1, 0.7, 1.5})
    for (double al : {0.0, 0.9, 2.5}) {
      const double h = 1e-6;
      const double fd = (M.chart_value(r + h, al) - M.chart_value(r - h, al)) / (2 * h);
      CHECK_THAT(M.chart_dr(r, al), WithinAbs(fd, 1e-8 * std::max(1.0, std::abs(fd))));
      const double fdH = (M.green_regular(r + h, al) - M.green_regular(r - h, al)) / (2 * h);
      CHECK_THAT(M.green_regular_dr(r, al), WithinRel(fdH, 1e-6));
    }
}

TEST_CASE("product Green's function matches the eigen-expansion") {
  const double L = 2 * M_PI, R = std::sqrt(2.0);
  auto M = Model::product_sphere(3, R, L);
  for (auto [s, th] : {std::pair{0.4, 1.0}, {-1.2, 2.6}, {0.1, 3.0}, {2.0, 0.3}}) {
    // product coordinate s is the S^1 offset divided by R; the pole sits at theta = pi
    CHECK_THAT(M.green_product(s, th), WithinRel(spectral_green(M_PI - th, R * s, L), 1e-8));
  }
  // regular part through the chart
  for (auto [r, al] : {std::pair{0.3, 0.5}, {0.6, 2.0}}) {
    double s, th;
    M.chart_to_product(r, al, s, th);
    const double G = spectral_green(M_PI - th, R * s, L);
    CHECK_THAT(M.green_regular(r, al), WithinRel(G - 1 / (r * M.chart_value(r, al)), 1e-7));
  }
  const double mu = M.mass();
  CHECK(mu > 0.15);
  CHECK(mu < 0.2);
}

TEST_CASE("chart and product coordinates are inverse") {
  auto M = Model::product_sphere(3, std::sqrt(2.0), 2 * M_PI);
  for (double r : {0.05, 0.5, 1.7})
    for (double al : {0.2, 1.5, 3.0}) {
      double s, th, r2, al2;
      M.chart_to_product(r, al, s, th);
      M.product_to_chart(s, th, r2, al2);
      CHECK_THAT(r2, WithinRel(r, 1e-12));
      CHECK_THAT(al2, WithinRel(al, 1e-12));
    }
}

TEST_CASE("stereographic factors") {
  auto P = Model::projective_space(3, 1.0);
  CHECK_THAT(P.mass(), WithinRel(1 / std::sqrt(24.0), 1e-14));
  CHECK_THAT(P.stereo_value(2.0, 0), WithinRel(1 + P.mass() / 2, 1e-14));
  CHECK(Model::round_sphere(3).mass() == 0);
  auto M = Model::product_sphere(3, std::sqrt(2.0), 2 * M_PI);
  for (double rho : {1.0, 3.0, 30.0}) {
    const double h = 1e-5 * rho;
    const double fd = (M.stereo_value(rho + h, 0.7) - M.stereo_value(rho - h, 0.7)) / (2 * h);
    CHECK_THAT(M.stereo_dr(rho, 0.7), WithinRel(fd, 1e-6));
  }
  CHECK_THAT(M.stereo_value(1e4, 0.3), WithinRel(1 + M.mass() / 1e4, 1e-6));
}

TEST_CASE("model json round trip") {
  for (auto M : {Model::flat_torus(3, 2.5), Model::product_sphere(4, 1.2, 5.0), Model::synthetic_end(3, 0.4, 0.1),
                 Model::projective_space(3, 2.0)}) {
    auto j = M.to_json();
    CHECK(Model::from_json(j).to_json() == j);
  }
  CHECK_THROWS_AS(Model::from_json({{"kind", "klein_bottle"}}), ConfigError);
}
