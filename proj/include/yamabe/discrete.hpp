#pragma once

#include "yamabe/core.hpp"
#include "yamabe/glue.hpp"

#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace ym {

using SpMat = Eigen::SparseMatrix<double>;

enum class Backend { Axisymmetric, Cartesian };
std::string backend_name(Backend b);

// Coordinates a node carries.  Strip: (sigma, alpha); Bulk: product (s, theta);
// Grid: Cartesian chart v = x - centre; Shell: (sigma, X, Y) gnomonic on a cube face.
enum class NodeChart { Strip, Bulk, Grid, Shell };

struct Node {
  int side = 0;
  NodeChart chart = NodeChart::Strip;
  double u = 0, v = 0, w = 0;
  int face = -1;
};

struct Resolution {
  std::string tag = "default";
  // axisymmetric backend
  int alpha_side = 12, alpha_bottom = 16;  // alpha intervals on the side and bottom edges
  int bulk_layers = 40;
  double strip_dsigma = 0.05;
  double seam_radius = 0.8;
  int rect_s = 64, rect_theta = 64;  // plain product rectangle
  // Cartesian backend
  int grid = 24;
  int cube_cells = 9;  // half-width of the excised cube in grid cells
  int blend_layers = 3;
  int annulus_layers = 12;
  double shell_growth = 1.25;
  double shell_dsigma_max = 0.12;

  static Resolution from_tag(const std::string& tag);
  nlohmann::json to_json() const;
};

struct DiscreteManifold {
  int n = 3;
  Backend backend = Backend::Axisymmetric;
  Constants C;
  std::string description;
  nlohmann::json meta;

  std::vector<Node> nodes;
  SpMat K;            // weak Laplacian of the mesh metric, axisymmetric sector 0
  Field M;            // lumped volume weights
  Field Maz;          // lumped azimuthal weights, int (Omega F)^{n-2} F^{-2} phi_i (axisymmetric only)
  std::vector<char> axis;  // nodes on the rotation axis
  double nu = 0;      // target curvature of the family
  Field eps;          // S(mesh metric) = nu - eps
  Field S() const;
  Field wfac;         // g_mesh = wfac^{p-2} g_component, per node

  // optional link to the glued family for field evaluation
  std::optional<ChartComplex> complex;
  bool mirrored = false;

  Eigen::Index size() const { return static_cast<Eigen::Index>(M.size()); }
  double volume() const { return M.sum(); }
  // sector l of the azimuthal decomposition: K + l(l+n-3) Maz, axis removed for l >= 1
  SpMat sector_stiffness(int l, std::vector<int>* kept = nullptr) const;
  Field sector_mass(int l) const;
  int sector_multiplicity(int l) const;
  // canonical log-radius of a strip/shell node in the v' chart, NaN elsewhere
  double node_sigma(Eigen::Index i) const;

  nlohmann::json summary() const;
};

DiscreteManifold assemble(const ChartComplex& cx, const Resolution& res, bool mirrored = false);
// plain components
DiscreteManifold product_sphere_mesh(int n, double radius, double length, const Resolution& res);
DiscreteManifold round_sphere_mesh(int n, double S, const Resolution& res);
DiscreteManifold flat_torus_mesh(double side, const Resolution& res);
// replace eps on the strip nodes by another family's profile at the same canonical sigma
void transplant_eps(DiscreteManifold& dm, const ChartComplex& source);

// binary/JSON hybrid: <stem>.json (nodes, metadata) + <stem>.bin (weights, eps, COO operator)
void export_manifold(const DiscreteManifold& dm, const std::string& stem,
                     const std::vector<std::pair<std::string, Field>>& fields = {});

// node permutation exchanging the two components (and mirroring the strip)
std::vector<Eigen::Index> swap_permutation(const DiscreteManifold& a, const DiscreteManifold& b);

namespace detail {
DiscreteManifold assemble_axisymmetric(const ChartComplex& cx, const Resolution& res, bool mirrored);
DiscreteManifold assemble_cartesian(const ChartComplex& cx, const Resolution& res);
}  // namespace detail

}  // namespace ym
