#include "yamabe/core.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace ym;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("constants in low dimensions") {
  auto c3 = make_constants(3);
  CHECK(c3.a == 8);
  CHECK(c3.b == 4);
  CHECK(c3.p == 6);
  auto c4 = make_constants(4);
  CHECK(c4.a == 6);
  CHECK(c4.b == 2);
  CHECK(c4.p == 4);
  auto c6 = make_constants(6);
  CHECK(c6.a == 5);
  CHECK(c6.b == 1);
  CHECK(c6.p == 3);
  CHECK_THROWS_AS(make_constants(2), ConfigError);
}

TEST_CASE("sphere areas") {
  CHECK_THAT(sphere_area(2), WithinRel(2 * M_PI, 1e-14));
  CHECK_THAT(sphere_area(3), WithinRel(4 * M_PI, 1e-14));
  CHECK_THAT(sphere_area(4), WithinRel(2 * M_PI * M_PI, 1e-14));
}

TEST_CASE("nonlinearity") {
  auto C = make_constants(3);
  CHECK_THAT(nonlinearity_f(1, C), WithinAbs(26, 1e-12));
  CHECK_THAT(nonlinearity_f(0, C), WithinAbs(0, 1e-15));
  // |1+x| taken literally below -1
  CHECK_THAT(nonlinearity_f(-3, C), WithinAbs(32 - 1 + 15, 1e-12));
  for (double x : {-2.5, -0.7, 0.1, 3.0}) {
    const double h = 1e-6;
    const double fd = (nonlinearity_f(x + h, C) - nonlinearity_f(x - h, C)) / (2 * h);
    CHECK_THAT(nonlinearity_df(x, C), WithinRel(fd, 1e-6));
  }
}

TEST_CASE("lipschitz bound holds on random pairs") {
  std::mt19937_64 rng(7);
  for (int n : {3, 4, 5, 6, 7}) {
    auto C = make_constants(n);
    auto L = lipschitz_constants(C);
    const double e = 4.0 / (n - 2);
    std::uniform_real_distribution<double> U(-4, 4);
    for (int i = 0; i < 20000; ++i) {
      const double x = U(rng), y = U(rng);
      const double lhs = std::abs(nonlinearity_f(x, C) - nonlinearity_f(y, C));
      const double rhs = std::abs(x - y) * (L.F4 * (std::abs(x) + std::abs(y)) +
                                            L.F5 * (std::pow(std::abs(x), e) + std::pow(std::abs(y), e)));
      REQUIRE(lhs <= rhs * (1 + 1e-9) + 1e-14);
    }
  }
}

TEST_CASE("radial model factors have their stated curvature") {
  for (int n : {3, 4, 5}) {
    auto C = make_constants(n);
    for (double r : {0.05, 0.3, 1.1}) {
      CHECK_THAT(radial_scalar_curvature(C, ModelFactor::round_sphere(n, 2.5), 0, r), WithinRel(2.5, 1e-12));
      CHECK_THAT(radial_scalar_curvature(C, ModelFactor::hyperbolic(n, -1), 0, r * 0.5), WithinRel(-1.0, 1e-12));
      CHECK_THAT(radial_scalar_curvature(C, ModelFactor::neck(n, 0.3), 0, r), WithinAbs(0, 1e-12));
    }
  }
}

TEST_CASE("discrete curvature of the sphere factor by finite differences") {
  // independent of the analytic derivatives: centred differences on a radial grid
  const int n = 3;
  auto C = make_constants(n);
  auto f = ModelFactor::round_sphere(n, 6.0);
  const int N = 2001;
  const double r0 = 0.5, r1 = 1.5, h = (r1 - r0) / (N - 1);
  Field psi(N), Sbg = Field::Zero(N);
  for (int i = 0; i < N; ++i) psi[i] = f.value(r0 + i * h);
  LaplaceOp lap = [&](const Field& u) {
    Field out = Field::Zero(u.size());
    for (int i = 1; i + 1 < N; ++i) {
      const double r = r0 + i * h;
      out[i] = -((u[i + 1] - 2 * u[i] + u[i - 1]) / (h * h) + (n - 1) / r * (u[i + 1] - u[i - 1]) / (2 * h));
    }
    return out;
  };
  Field S = conformal_scalar_curvature(C, psi, Sbg, lap);
  for (int i = 10; i < N - 10; i += 97) CHECK_THAT(S[i], WithinRel(6.0, 1e-5));
  Field res = yamabe_residual(C, psi, Sbg, 6.0, lap);
  for (int i = 10; i < N - 10; i += 97) CHECK_THAT(res[i], WithinAbs(0, 1e-4));
}

TEST_CASE("hilbert action of a constant-curvature metric") {
  auto C = make_constants(3);
  Field S = Field::Constant(10, 2.0), w = Field::Constant(10, 0.8);
  CHECK_THAT(hilbert_action(C, S, w), WithinRel(2 * 8 / std::pow(8, 1.0 / 3), 1e-14));
}

TEST_CASE("mass extraction from exact expansions") {
  for (int n : {3, 4}) {
    auto C = make_constants(n);
    for (double mu : {1.0, 0.7}) {
      std::vector<std::pair<double, double>> s;
      for (int i = 0; i < 40; ++i) {
        const double r = 5 + 2 * i;
        s.push_back({r, 1 + mu * std::pow(r, 2 - n) + 0.3 * std::pow(r, 1 - n)});
      }
      auto m = extract_mass(s, C);
      CHECK_THAT(m.mu, WithinRel(mu, 1e-10));
      CHECK_THAT(m.c, WithinRel(0.3, 1e-8));
    }
  }
  CHECK_THROWS(extract_mass({{1.0, 2.0}}, make_constants(3)));
}
