#include "yamabe/solver.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace ym;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const double kR = std::sqrt(2.0);
const double kL = 2 * M_PI;

SolveConfig quick(double nu) {
  SolveConfig c;
  c.nu = nu;
  c.tolerance = 1e-14;
  c.diagnostics = false;
  c.positivity = PositivityPolicy::Report;
  return c;
}

}  // namespace

TEST_CASE("eps = 0 is a fixed point") {
  const DiscreteManifold dm = product_sphere_mesh(3, kR, kL, Resolution::from_tag("coarse"));
  for (double nu : {1.0, -1.0}) {
    const SolveReport r = run_iteration(dm, Field::Zero(dm.size()), quick(nu));
    CHECK(r.converged);
    CHECK(r.iterations == 1);
    CHECK(r.phi.cwiseAbs().maxCoeff() == 0);
    CHECK(r.status == "ok");
  }
}

TEST_CASE("constant eps: closed-form constant solution on every backend") {
  // a Delta psi + (nu - e) psi = nu psi^{p-1}  =>  psi* = ((nu - e)/nu)^{1/(p-2)}
  const Resolution res = Resolution::from_tag("coarse");
  std::vector<DiscreteManifold> meshes;
  meshes.push_back(product_sphere_mesh(3, kR, kL, res));
  meshes.push_back(flat_torus_mesh(2.0, res));
  GlueParams gp;
  gp.family = Family::NeckJoin;
  gp.t = 0.15;
  const Model P = Model::product_sphere(3, kR, kL);
  meshes.push_back(assemble(ChartComplex::build(gp, P, P), res));
  for (const auto& dm : meshes) {
    for (double nu : {1.0, -1.0}) {
      for (double e : {0.05, -0.03}) {
        const double p = dm.C.p;
        const double exact = std::pow((nu - e) / nu, 1 / (p - 2));
        const SolveReport r = run_iteration(dm, Field::Constant(dm.size(), e), quick(nu));
        INFO(dm.description << " nu " << nu << " e " << e);
        REQUIRE(r.converged);
        CHECK((r.psi.array() - exact).abs().maxCoeff() <= 1e-10);
        CHECK(r.S_std <= 1e-8);
        CHECK_THAT(r.S_mean, WithinAbs(nu, 1e-8));
      }
    }
  }
}

TEST_CASE("contraction diagnostics") {
  const DiscreteManifold dm = product_sphere_mesh(3, kR, kL, Resolution::from_tag("coarse"));
  SECTION("s = 0 has its root at 0") {
    const ContractionDiagnostics d = contraction_diagnostics(dm, Field::Zero(dm.size()), 0.5, 1.0);
    CHECK(d.has_root);
    CHECK(d.root == 0);
    CHECK(d.contraction == 0);
  }
  SECTION("small s: root satisfies x = 2 chi(x), and chi is increasing") {
    const Field eps = Field::Constant(dm.size(), 1e-7);
    const ContractionDiagnostics d = contraction_diagnostics(dm, eps, 0.5, 1.0);
    REQUIRE(d.has_root);
    CHECK_THAT(d.root, WithinRel(2 * d.chi(d.root, 3), 1e-8));
    CHECK(d.chi(2 * d.root, 3) > d.chi(d.root, 3));
    CHECK(d.F0 > 0);
    CHECK_THAT(d.s, WithinRel(1e-7 * std::pow(dm.volume(), 2.0 / 3), 1e-10));
  }
  SECTION("large s: no root below the ceiling") {
    const ContractionDiagnostics d = contraction_diagnostics(dm, Field::Constant(dm.size(), 50.0), 0.5, 1.0);
    CHECK_FALSE(d.has_root);
  }
  SECTION("F2 vanishes for n >= 6") {
    const DiscreteManifold d6 = product_sphere_mesh(6, 2.0, kL, Resolution::from_tag("coarse"));
    const ContractionDiagnostics d = contraction_diagnostics(d6, Field::Constant(d6.size(), 1e-3), 0.5, 1.0);
    CHECK(d.F2 == 0);
    CHECK(d.F4 == 0);
  }
}

TEST_CASE("positivity check on a negative bump") {
  const DiscreteManifold dm = product_sphere_mesh(3, kR, kL, Resolution::from_tag("coarse"));
  Field psi = Field::Ones(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i)
    if (dm.nodes[i].u < 0.3) psi[i] = -0.5;
  PositivityVerdict v = positivity_check(dm, psi, 1, 0.5, 0.1);
  CHECK_FALSE(v.positive);
  CHECK(v.min_psi == -0.5);
  CHECK(v.xi_p > 0);
  CHECK(v.support_volume > 0);
  CHECK_THAT(v.F6, WithinRel(dm.C.a / 0.25, 1e-14));
  CHECK_THAT(v.F7, WithinRel(dm.C.a - 1 + 0.1, 1e-14));
  v = positivity_check(dm, Field::Ones(dm.size()), 1, 0.5, 0.1);
  CHECK(v.positive);
  CHECK(v.xi_p == 0);
}

TEST_CASE("positive case on a neck: small eps converges to a fixed point") {
  const Model P = Model::product_sphere(3, kR, kL);
  GlueParams gp;
  gp.family = Family::NeckJoin;
  gp.t = 0.1;
  const DiscreteManifold dm = assemble(ChartComplex::build(gp, P, P), Resolution::from_tag("coarse"));
  SolveConfig c = quick(1);
  c.tolerance = 1e-11;
  const SolveReport r = run_iteration(dm, dm.eps, c);
  REQUIRE(r.converged);
  CHECK(r.fixed_point_gap < 1e-8);
  CHECK(r.positivity.positive);
  CHECK(r.S_std / std::abs(r.S_mean) < 1e-6);
  CHECK(r.trace.norms.size() == size_t(r.iterations));
  // T is affine in eps at eta = 0
  const TMap T(dm, dm.eps, 1);
  const Field first = T(Field::Zero(dm.size()));
  const ShiftedSolve s = solve_shifted(dm, 1, 1, dm.eps);
  CHECK((first - s.phi).cwiseAbs().maxCoeff() <= 1e-9 * (1 + s.phi.cwiseAbs().maxCoeff()));
}

TEST_CASE("solve config validation") {
  SolveConfig c;
  c.nu = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.nu = 1;
  c.tolerance = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(SolveConfig::from_json({{"positivity", "maybe"}}), ConfigError);
  const SolveConfig d = SolveConfig::from_json({{"nu", -1}, {"tolerance", 1e-9}});
  CHECK(d.nu == -1);
  CHECK(SolveConfig::from_json(d.to_json()).tolerance == 1e-9);
}

TEST_CASE("zero case: graft solve keeps tau orthogonal to the constants") {
  GlueParams gp;
  gp.family = Family::ZeroGraft;
  gp.nu = 0;
  gp.t = 1e-4;
  const DiscreteManifold dm = assemble(
      ChartComplex::build(gp, Model::flat_torus(3, 2.0), Model::projective_space(3, 1.0)), Resolution::from_tag("coarse"));
  ZeroSolveConfig zc;
  const SolveReport r = projected_solve_zero(dm, nullptr, zc);
  REQUIRE(r.converged);
  CHECK(r.zero_case);
  CHECK(r.max_orthogonality < 1e-10);
  CHECK(std::abs(dm.M.dot(r.tau)) <= 1e-10 * (1 + lq_norm(dm, r.tau, 1)));
  CHECK((r.rho.array() - r.rho[0]).abs().maxCoeff() < 1e-12);  // P = constants
  CHECK(r.S_std / std::abs(r.S_mean) < 0.05);
  CHECK(r.S_mean < 0);
  // measured RP^3 mass from the stereographic factor
  CHECK_THAT(measured_graft_mass(*dm.complex), WithinRel(Model::projective_space(3, 1.0).mass(), 1e-6));
  CHECK_THROWS_AS(projected_solve_zero(dm, nullptr, ZeroSolveConfig{0}), ConfigError);
}
