#include "yamabe/spectral.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

using namespace ym;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const double kR = std::sqrt(2.0);
const double kL = 2 * M_PI;

const DiscreteManifold& product() {
  static const DiscreteManifold dm = product_sphere_mesh(3, kR, kL, Resolution::from_tag("coarse"));
  return dm;
}

Field wave(Eigen::Index n, double f, double shift) {
  Field x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = std::sin(f * i + shift) + 0.2;
  return x;
}

}  // namespace

TEST_CASE("norms: constants, Hoelder and monotonicity in q") {
  const DiscreteManifold& dm = product();
  const double V = dm.volume();
  const Field one = Field::Ones(dm.size());
  for (double q : {1.0, 1.5, 2.0, 6.0}) CHECK_THAT(lq_norm(dm, one, q), WithinRel(std::pow(V, 1 / q), 1e-12));
  CHECK_THAT(sobolev_norm(dm, one), WithinRel(std::sqrt(V), 1e-12));
  CHECK_THAT(integral(dm, 3.0 * one), WithinRel(3 * V, 1e-12));

  const Field f = wave(dm.size(), 0.01, 0.3), g = wave(dm.size(), 0.023, 1.1);
  for (double p : {1.5, 2.0, 3.0, 6.0}) {
    const double q = p / (p - 1);
    CHECK(lq_norm(dm, f.cwiseProduct(g), 1) <= lq_norm(dm, f, p) * lq_norm(dm, g, q) * (1 + 1e-12));
  }
  // normalized norms increase with q
  double prev = 0;
  for (double q : {1.0, 2.0, 3.0, 6.0}) {
    const double nq = lq_norm(dm, f, q) / std::pow(V, 1 / q);
    CHECK(nq >= prev * (1 - 1e-12));
    prev = nq;
  }
}

TEST_CASE("eigenvectors: ||v||_{2,1}^2 = (1 + lambda/a) ||v||_2^2") {
  const DiscreteManifold& dm = product();
  EigenOptions eo;
  eo.sector = 0;
  const SpectrumReport rep = lowest_eigenpairs(dm, 6, eo);
  REQUIRE(rep.converged);
  for (size_t c = 0; c < rep.vector_index.size(); ++c) {
    const Field v = rep.vectors.col(c);
    const double lam = rep.values[rep.vector_index[c]];
    const double l2 = lq_norm(dm, v, 2);
    CHECK_THAT(std::pow(sobolev_norm(dm, v), 2), WithinRel((1 + lam / dm.C.a) * l2 * l2, 1e-8));
  }
}

TEST_CASE("shifted solves: constants and eigenvectors") {
  const DiscreteManifold& dm = product();
  const double a = dm.C.a, b = dm.C.b;
  const Field one = Field::Ones(dm.size());
  // (a Delta - nu b) phi = 2 has the constant solution -2/(nu b)
  for (double nu : {1.0, -1.0}) {
    const ShiftedSolve s = solve_shifted(dm, nu, 1.0, 2.0 * one);
    CHECK((s.phi.array() + 2 / (nu * b)).abs().maxCoeff() < 1e-8);
    CHECK(s.ratio > 0);
  }
  // eigenvector v with a Delta v = lam v: (a Delta - b) x = v gives x = v / (lam - b)
  EigenOptions eo;
  eo.sector = 0;
  const SpectrumReport rep = lowest_eigenpairs(dm, 4, eo);
  for (size_t c = 0; c < rep.vector_index.size(); ++c) {
    const double lam = rep.values[rep.vector_index[c]];
    if (lam < 1) continue;
    const Field v = rep.vectors.col(c);
    const ShiftedSolve s = solve_shifted(dm, 1.0, 1.0, v);
    CHECK((s.phi - v / (lam - b)).cwiseAbs().maxCoeff() < 1e-6 * v.cwiseAbs().maxCoeff() / std::abs(lam - b));
  }
  // c = 0 on the mean-zero subspace
  ShiftedOperator op(dm, 0.0);
  Field r = wave(dm.size(), 0.05, 0.0);
  r.array() -= dm.M.dot(r) / dm.volume();
  const Field x = op.solve(r);
  const Field back = (a * (dm.K * x)).cwiseQuotient(dm.M);
  CHECK((back - r).cwiseAbs().maxCoeff() < 1e-7 * r.cwiseAbs().maxCoeff());
}

TEST_CASE("gap check") {
  SpectrumReport rep;
  rep.values = {0, 2.5, 5.5, 8};
  rep.sector = {0, 0, 0, 0};
  rep.residuals = {0, 0, 0, 0};
  rep.converged = true;
  rep.covered_upto = 8;
  GapVerdict g = gap_check(rep, 4, 1);
  CHECK(g.holds);
  CHECK(g.covered);
  CHECK(g.below == 2.5);
  CHECK(g.above == 5.5);
  g = gap_check(rep, 4, 2);
  CHECK_FALSE(g.holds);
  CHECK(g.inside.size() == 2);
  // zero half-width: the open interval is empty
  CHECK(gap_check(rep, 4, 0).holds);
  CHECK(gap_check(rep, 5.5, 0).holds);
  // a truncated spectrum that stops below the interval cannot certify a gap
  rep.values = {0, 2.5};
  rep.covered_upto = 3;
  CHECK_THROWS_AS(gap_check(rep, 4, 1), NumericalError);
}

TEST_CASE("round sphere is the excluded case: b is an eigenvalue of a Delta") {
  const DiscreteManifold dm = round_sphere_mesh(3, 1.0, Resolution::from_tag("default"));
  EigenOptions eo;
  eo.sector = -1;
  const SpectrumReport rep = lowest_eigenpairs(dm, 5, eo);
  REQUIRE(rep.converged);
  CHECK_THAT(rep.values[1], WithinRel(dm.C.b, 0.02));
  CHECK_FALSE(gap_check(rep, dm.C.b, 1).holds);
}

TEST_CASE("Green's function: pole coefficient and the stereographic identity") {
  const DiscreteManifold dm = product_sphere_mesh(3, kR, kL, Resolution::from_tag("default"));
  const Eigen::Index node = nearest_node(dm, NodeChart::Bulk, 0, 0);
  const GreenResult g = green_function(dm, node, GreenMode::APlusS);
  CHECK_THAT(g.pole_coefficient, WithinRel(g.pole_expected, 0.05));
  CHECK(g.min_value > 0);

  // Gamma^{p-2} g on the round sphere has zero scalar curvature away from the pole
  const DiscreteManifold s = round_sphere_mesh(3, 1.0, Resolution::from_tag("coarse"));
  Eigen::Index pole = -1;
  for (Eigen::Index i = 0; i < s.size() && pole < 0; ++i)
    if (s.axis[i]) pole = i;
  const GreenResult gs = green_function(s, pole, GreenMode::APlusS);
  const Field St = conformal_scalar_curvature(s.C, gs.G, s.S(), [&](const Field& x) {
    return Field((s.K * x).cwiseQuotient(s.M));
  });
  double worst = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (i != pole) worst = std::max(worst, std::abs(St[i]) / (std::pow(gs.G[i], 1 - s.C.p) * s.S()[i] * gs.G[i]));
  CHECK(worst < 1e-6);  // direct solve; round-off grows away from the pole

  CHECK_THROWS_AS(green_function(dm, dm.size(), GreenMode::APlusS), ConfigError);
}

TEST_CASE("Sobolev constant estimate dominates the constant profile") {
  const DiscreteManifold& dm = product();
  const SobolevEstimate se = sobolev_constant_estimate(dm, 3, 30);
  CHECK(se.A_lower >= se.constant_ratio * (1 - 1e-12));
  CHECK_THAT(se.constant_ratio, WithinRel(std::pow(dm.volume(), -1.0 / 3), 1e-10));
  CHECK_FALSE(se.diverged);
  CHECK_THAT(sobolev_ratio(dm, Field::Ones(dm.size())), WithinRel(se.constant_ratio, 1e-12));
}

TEST_CASE("neck eigenvector of a balanced torus # torus") {
  GlueParams gp;
  gp.family = Family::ZeroNeck;
  gp.nu = 0;
  gp.t = 1e-3;
  const Model T = Model::flat_torus(3, 2.0);
  const DiscreteManifold dm = assemble(ChartComplex::build(gp, T, T), Resolution::from_tag("coarse"));
  const NeckEigenReport ne = neck_eigenvector(dm);
  REQUIRE(ne.converged);
  CHECK(ne.lambda > 0);
  CHECK(ne.lambda < 1);  // inside (0, gamma)
  CHECK(std::abs(ne.int_beta) < 1e-8);
  CHECK(ne.residual < 1e-6);
  // balanced volumes: c' = c''
  CHECK_THAT(ne.c_prime, WithinRel(ne.c_dprime, 1e-3));
  // normalization int beta^2 = 2 vol(M') up to the neck correction
  CHECK_THAT(dm.M.dot(ne.beta.cwiseAbs2()), WithinRel(2 * T.volume(), 0.05));
}
