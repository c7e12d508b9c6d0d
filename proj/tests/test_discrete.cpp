#include "experiment.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace ym;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const double kR = std::sqrt(2.0);
const double kL = 2 * M_PI;

void check_operator(const DiscreteManifold& dm) {
  REQUIRE(dm.M.size() == dm.size());
  CHECK(dm.M.minCoeff() > 0);
  const SpMat Kt = dm.K.transpose();
  CHECK((SpMat(dm.K - Kt)).norm() <= 1e-12 * dm.K.norm());
  const Field ones = Field::Ones(dm.size());
  CHECK((dm.K * ones).cwiseAbs().maxCoeff() <= 1e-10 * dm.K.coeffs().cwiseAbs().maxCoeff());
  // positive semidefinite on a few probe vectors
  for (int k = 1; k <= 3; ++k) {
    Field x(dm.size());
    for (Eigen::Index i = 0; i < dm.size(); ++i) x[i] = std::sin(0.3 * k * i + k);
    CHECK(x.dot(dm.K * x) >= -1e-10 * x.squaredNorm());
  }
}

}  // namespace

TEST_CASE("plain meshes: symmetric operators with constants in the kernel") {
  const Resolution res = Resolution::from_tag("coarse");
  check_operator(product_sphere_mesh(3, kR, kL, res));
  check_operator(round_sphere_mesh(3, 1.0, res));
  check_operator(flat_torus_mesh(2.0, res));
}

TEST_CASE("glued meshes: symmetric operators with constants in the kernel") {
  const Resolution res = Resolution::from_tag("coarse");
  const Model P = Model::product_sphere(3, kR, kL);
  GlueParams gp;
  gp.family = Family::NeckJoin;
  gp.t = 0.15;
  check_operator(assemble(ChartComplex::build(gp, P, P), res));
  gp.family = Family::PosGraft;
  check_operator(assemble(ChartComplex::build(gp, P, P), res));
}

TEST_CASE("mesh volumes match closed forms") {
  const Resolution res = Resolution::from_tag("coarse");
  // S^2(R) x S^1(L): 4 pi R^2 L
  CHECK_THAT(product_sphere_mesh(3, kR, kL, res).volume(), WithinRel(4 * M_PI * 2 * kL, 1e-3));
  // S^3 with curvature 1 has radius sqrt(6): 2 pi^2 rho^3
  CHECK_THAT(round_sphere_mesh(3, 1.0, res).volume(), WithinRel(2 * M_PI * M_PI * std::pow(6.0, 1.5), 1e-3));
  CHECK_THAT(flat_torus_mesh(2.0, res).volume(), WithinRel(8.0, 1e-12));

  const Model P = Model::product_sphere(3, kR, kL);
  GlueParams gp;
  gp.family = Family::NeckJoin;
  for (double t : {0.1, 0.2}) {
    gp.t = t;
    const DiscreteManifold dm = assemble(ChartComplex::build(gp, P, P), res);
    CHECK_THAT(dm.volume(), WithinRel(2 * P.volume(), 1e-3));
  }
}

TEST_CASE("mesh metric curvature: eps vanishes away from the neck") {
  const Model P = Model::product_sphere(3, kR, kL);
  GlueParams gp;
  gp.family = Family::NeckJoin;
  gp.t = 0.15;
  const DiscreteManifold dm = assemble(ChartComplex::build(gp, P, P), Resolution::from_tag("coarse"));
  for (Eigen::Index i = 0; i < dm.size(); ++i)
    if (dm.nodes[i].chart == NodeChart::Bulk) CHECK(std::abs(dm.eps[i]) < 1e-9);
}

TEST_CASE("discrete spectra match the analytic spectra") {
  const Resolution res = Resolution::from_tag("default");
  EigenOptions eo;
  eo.sector = -1;
  eo.max_sector = 4;
  for (const Model& m : {Model::flat_torus(3, 2.0), Model::product_sphere(3, kR, kL), Model::round_sphere(3, 1.0)}) {
    const DiscreteManifold dm = exp::plain_mesh(m, res);
    const int count = m.kind() == Model::Kind::RoundSphere ? 5 : 10;
    const auto exact = exp::analytic_spectrum(m, count);
    const SpectrumReport rep = lowest_eigenpairs(dm, count, eo);
    REQUIRE(rep.converged);
    REQUIRE(rep.values.size() >= exact.size());
    INFO(m.name());
    CHECK(std::abs(rep.values[0]) < 1e-8);
    for (int k = 1; k < count; ++k) CHECK_THAT(rep.values[k], WithinRel(exact[k], 0.02));
  }
}

TEST_CASE("torus eigenvalue error converges at second order") {
  const double exact = 8 * M_PI * M_PI;  // a (2 pi / 2)^2
  std::vector<double> h, err;
  EigenOptions eo;
  eo.sector = 0;
  for (const char* tag : {"coarse", "default", "fine"}) {
    const Resolution res = Resolution::from_tag(tag);
    const SpectrumReport rep = lowest_eigenpairs(flat_torus_mesh(2.0, res), 2, eo);
    h.push_back(2.0 / res.grid);
    err.push_back(std::abs(rep.values[1] - exact));
  }
  const exp::SlopeFit f = exp::fit_slope(h, err);
  CHECK(f.slope >= 1.8);
  CHECK(f.r2 > 0.99);
}

TEST_CASE("manifold export writes a readable JSON/binary pair") {
  const DiscreteManifold dm = product_sphere_mesh(3, kR, kL, Resolution::from_tag("coarse"));
  const auto dir = std::filesystem::temp_directory_path() / "yamabe_export_test";
  std::filesystem::create_directories(dir);
  const std::string stem = (dir / "m").string();
  const Field extra = Field::LinSpaced(dm.size(), 0, 1);
  export_manifold(dm, stem, {{"extra", extra}});

  std::ifstream js(stem + ".json");
  const nlohmann::json j = nlohmann::json::parse(js);
  CHECK(j.at("binary") == "m.bin");
  CHECK(j.at("node_table").size() == size_t(dm.size()));
  CHECK_THAT(j.at("volume").get<double>(), WithinRel(dm.volume(), 1e-14));

  std::ifstream bin(stem + ".bin", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  uint64_t end = 0;
  for (const auto& a : j.at("arrays")) {
    const uint64_t width = a.at("dtype") == "f64" ? 8 : 4;
    end = std::max(end, a.at("offset").get<uint64_t>() + width * a.at("count").get<uint64_t>());
    if (a.at("name") == "extra") {
      const double* p = reinterpret_cast<const double*>(bytes.data() + a.at("offset").get<uint64_t>());
      CHECK(p[dm.size() - 1] == extra[dm.size() - 1]);
    }
    if (a.at("name") == "mass") {
      const double* p = reinterpret_cast<const double*>(bytes.data() + a.at("offset").get<uint64_t>());
      CHECK(p[0] == dm.M[0]);
    }
  }
  CHECK(end == bytes.size());
  std::filesystem::remove_all(dir);
}

TEST_CASE("resolution tags") {
  CHECK(Resolution::from_tag("coarse").grid < Resolution::from_tag("default").grid);
  CHECK(Resolution::from_tag("default").grid < Resolution::from_tag("fine").grid);
  CHECK_THROWS_AS(Resolution::from_tag("huge"), ConfigError);
}
