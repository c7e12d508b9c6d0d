// Periodic Q1 grid on the torus with a cube around the gluing point replaced by
// an O-grid: the cube surface is blended onto a sphere, and below the sphere the
// mesh is a stack of spherical shells in (sigma = log r, gnomonic X, Y).  The
// shells carry the exact metric Psi^{p-2} (d sigma^2 + g_round), so the neck and
// the annuli are shared node-for-node by the two charts.
#include "yamabe/discrete.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>

namespace ym {
namespace {

using Key = std::array<int, 3>;

struct Hex {
  std::array<int, 8> v;
  std::array<std::array<double, 3>, 8> x;
  int metric;  // 0 flat physical, 1 shell
};

const double kG2[2] = {-0.5773502691896258, 0.5773502691896258};

// reference corner signs: bottom face (z-) counterclockwise, then top face
const int kSign[8][3] = {{-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
                         {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1}};

struct HexAssembler {
  std::function<double(double sigma)> Psi;  // cylinder factor along the shells
  std::vector<Eigen::Triplet<double>> trip;
  Field M;

  void add(const Hex& h) {
    double Ke[8][8] = {};
    double Me[8] = {};
    for (double gx : kG2)
      for (double gy : kG2)
        for (double gz : kG2) {
          const double g[3] = {gx, gy, gz};
          double Nv[8], dN[8][3];
          for (int a = 0; a < 8; ++a) {
            double f[3], d[3];
            for (int c = 0; c < 3; ++c) {
              f[c] = 0.5 * (1 + kSign[a][c] * g[c]);
              d[c] = 0.5 * kSign[a][c];
            }
            Nv[a] = f[0] * f[1] * f[2];
            dN[a][0] = d[0] * f[1] * f[2];
            dN[a][1] = f[0] * d[1] * f[2];
            dN[a][2] = f[0] * f[1] * d[2];
          }
          Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
          Eigen::Vector3d X = Eigen::Vector3d::Zero();
          for (int a = 0; a < 8; ++a)
            for (int r = 0; r < 3; ++r) {
              X[r] += Nv[a] * h.x[a][r];
              for (int c = 0; c < 3; ++c) J(c, r) += dN[a][c] * h.x[a][r];
            }
          const double dJ = J.determinant();
          if (!(std::abs(dJ) > 0)) throw NumericalError("degenerate hexahedron");
          const Eigen::Matrix3d Ji = J.inverse();
          Eigen::Matrix3d W = Eigen::Matrix3d::Identity();
          double dens = 1;
          if (h.metric == 1) {
            const double P = Psi(X[0]);
            const double Xg = X[1], Yg = X[2], D = 1 + Xg * Xg + Yg * Yg;
            const double sg = std::pow(D, -1.5);
            W.setZero();
            W(0, 0) = 1;
            W(1, 1) = D * (1 + Xg * Xg);
            W(2, 2) = D * (1 + Yg * Yg);
            W(1, 2) = W(2, 1) = D * Xg * Yg;
            W *= P * P * sg;
            dens = std::pow(P, 6) * sg;
          }
          const double vol = std::abs(dJ);
          Eigen::Matrix<double, 3, 8> G;
          for (int a = 0; a < 8; ++a) G.col(a) = Ji * Eigen::Vector3d(dN[a][0], dN[a][1], dN[a][2]);
          const Eigen::Matrix<double, 8, 8> Kq = G.transpose() * W * G;
          for (int a = 0; a < 8; ++a) {
            Me[a] += dens * Nv[a] * vol;
            for (int b = 0; b < 8; ++b) Ke[a][b] += Kq(a, b) * vol;
          }
        }
    for (int a = 0; a < 8; ++a) {
      M[h.v[a]] += Me[a];
      for (int b = 0; b < 8; ++b) trip.emplace_back(h.v[a], h.v[b], Ke[a][b]);
    }
  }
};

void finish(DiscreteManifold& dm, HexAssembler& A, std::vector<Node> nodes) {
  const Eigen::Index N = static_cast<Eigen::Index>(nodes.size());
  dm.K.resize(N, N);
  dm.K.setFromTriplets(A.trip.begin(), A.trip.end());
  SpMat Kt = dm.K.transpose();
  dm.K = 0.5 * (dm.K + Kt);
  for (Eigen::Index k = 0; k < dm.K.outerSize(); ++k) {
    double sum = 0, *diag = nullptr;
    for (SpMat::InnerIterator it(dm.K, k); it; ++it) {
      if (it.row() == it.col()) diag = &it.valueRef();
      else sum += it.value();
    }
    if (diag) *diag = -sum;
  }
  dm.M = A.M;
  dm.Maz = Field::Zero(N);
  dm.axis.assign(static_cast<size_t>(N), 0);
  dm.nodes = std::move(nodes);
  dm.n = 3;
  dm.C = make_constants(3);
  dm.backend = Backend::Cartesian;
}

// sigma levels, descending.  Uniform across the annulus, geometric growth away from it.
std::vector<double> graded(double from, double to, double h0, double growth, double hmax) {
  // from -> to with the first step h0, steps growing; rescaled to land on `to`
  std::vector<double> steps;
  const double len = std::abs(to - from);
  double acc = 0, h = h0;
  while (acc + h < len) {
    steps.push_back(h);
    acc += h;
    h = std::min(h * growth, hmax);
  }
  if (steps.empty() || len - acc > 0.5 * steps.back()) {
    steps.push_back(len - acc);
  } else {
    steps.back() += len - acc;
  }
  std::vector<double> pts{from};
  const double dir = to > from ? 1 : -1;
  for (double s : steps) pts.push_back(pts.back() + dir * s);
  pts.back() = to;
  return pts;
}

// one half of the shell stack: top sphere down to the bottom (waist or antipodal shell)
std::vector<double> half_levels(double top, double bottom, double lin, double lout, const Resolution& res,
                                double& dsa) {
  dsa = (lout - lin) / res.annulus_layers;
  std::vector<double> out = graded(lout, top, dsa, res.shell_growth, res.shell_dsigma_max);
  std::reverse(out.begin(), out.end());  // top ... lout
  for (int i = 1; i <= res.annulus_layers; ++i) out.push_back(lout - i * dsa);
  out.back() = lin;
  const std::vector<double> inner = graded(lin, bottom, dsa, res.shell_growth, res.shell_dsigma_max);
  out.insert(out.end(), inner.begin() + 1, inner.end());
  return out;
}

struct Surface {
  int m = 0;
  std::vector<Key> keys;
  std::map<Key, int> index;
  struct Q {
    std::array<int, 4> k;  // angular indices
    std::array<double, 4> X, Y;
  };
  std::vector<Q> quads;

  explicit Surface(int mm) : m(mm) {
    for (int a = -m; a <= m; ++a)
      for (int b = -m; b <= m; ++b)
        for (int c = -m; c <= m; ++c)
          if (std::max({std::abs(a), std::abs(b), std::abs(c)}) == m) {
            index[{a, b, c}] = static_cast<int>(keys.size());
            keys.push_back({a, b, c});
          }
    for (int d = 0; d < 3; ++d)
      for (int s : {-1, 1}) {
        const int o1 = (d + 1) % 3, o2 = (d + 2) % 3;
        for (int i = -m; i < m; ++i)
          for (int j = -m; j < m; ++j) {
            Q q;
            const int di[4] = {0, 1, 1, 0}, dj[4] = {0, 0, 1, 1};
            for (int c = 0; c < 4; ++c) {
              Key k{};
              k[d] = s * m;
              k[o1] = i + di[c];
              k[o2] = j + dj[c];
              q.k[c] = index.at(k);
              q.X[c] = static_cast<double>(k[o1]) / m;
              q.Y[c] = static_cast<double>(k[o2]) / m;
            }
            quads.push_back(q);
          }
      }
  }
  size_t size() const { return keys.size(); }
  Eigen::Vector3d dir(int j) const {
    const Key& k = keys[j];
    return Eigen::Vector3d(k[0], k[1], k[2]).normalized();
  }
};

struct Builder {
  std::vector<Node> nodes;
  std::vector<Hex> hexes;
  int add(const Node& nd) {
    nodes.push_back(nd);
    return static_cast<int>(nodes.size()) - 1;
  }
};

// periodic torus grid with the cube excised, blended onto the sphere nodes `sphere`
void torus_part(Builder& B, int side, double L, int N, const Surface& S, double r_o, int blend,
                const std::vector<int>& sphere) {
  const int m = S.m;
  const double hgrid = L / N;
  const int lo = -N / 2;
  auto wrap = [&](int a) { return ((a - lo) % N + N) % N + lo; };
  std::map<Key, int> grid;
  for (int a = lo; a < lo + N; ++a)
    for (int b = lo; b < lo + N; ++b)
      for (int c = lo; c < lo + N; ++c) {
        if (std::max({std::abs(a), std::abs(b), std::abs(c)}) < m) continue;
        Node nd;
        nd.side = side;
        nd.chart = NodeChart::Grid;
        nd.u = a * hgrid;
        nd.v = b * hgrid;
        nd.w = c * hgrid;
        grid[{a, b, c}] = B.add(nd);
      }
  for (int a = lo; a < lo + N; ++a)
    for (int b = lo; b < lo + N; ++b)
      for (int c = lo; c < lo + N; ++c) {
        if (a >= -m && a < m && b >= -m && b < m && c >= -m && c < m) continue;
        Hex h;
        h.metric = 0;
        for (int q = 0; q < 8; ++q) {
          const int da = kSign[q][0] > 0, db = kSign[q][1] > 0, dc = kSign[q][2] > 0;
          h.v[q] = grid.at({wrap(a + da), wrap(b + db), wrap(c + dc)});
          h.x[q] = {(a + da) * hgrid, (b + db) * hgrid, (c + dc) * hgrid};
        }
        B.hexes.push_back(h);
      }
  // blend layers: level 0 = cube surface (grid nodes), level `blend` = sphere
  const double cube = m * hgrid;
  std::vector<std::vector<int>> lvl(blend + 1, std::vector<int>(S.size()));
  auto pos = [&](int j, int l) {
    const Key& k = S.keys[j];
    const Eigen::Vector3d P(k[0] * hgrid, k[1] * hgrid, k[2] * hgrid);
    const double lam = static_cast<double>(l) / blend;
    return Eigen::Vector3d((1 - lam) * P + lam * r_o * S.dir(j));
  };
  for (size_t j = 0; j < S.size(); ++j) {
    lvl[0][j] = grid.at(S.keys[j]);
    lvl[blend][j] = sphere[j];
    for (int l = 1; l < blend; ++l) {
      const Eigen::Vector3d x = pos(static_cast<int>(j), l);
      Node nd;
      nd.side = side;
      nd.chart = NodeChart::Grid;
      nd.u = x[0];
      nd.v = x[1];
      nd.w = x[2];
      lvl[l][j] = B.add(nd);
    }
  }
  (void)cube;
  for (const auto& q : S.quads)
    for (int l = 0; l < blend; ++l) {
      Hex h;
      h.metric = 0;
      for (int c = 0; c < 4; ++c) {
        for (int up = 0; up < 2; ++up) {
          const int slot = c + 4 * up;
          h.v[slot] = lvl[l + up][q.k[c]];
          const Eigen::Vector3d x = pos(q.k[c], l + up);
          h.x[slot] = {x[0], x[1], x[2]};
        }
      }
      B.hexes.push_back(h);
    }
}

}  // namespace

DiscreteManifold flat_torus_mesh(double side, const Resolution& res) {
  if (!(side > 0)) throw ConfigError("torus side must be positive");
  const int N = res.grid;
  const double h = side / N;
  Builder B;
  auto id = [N](int i, int j, int k) { return ((i % N) * N + (j % N)) * N + (k % N); };
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      for (int k = 0; k < N; ++k) {
        Node nd;
        nd.chart = NodeChart::Grid;
        nd.u = i * h;
        nd.v = j * h;
        nd.w = k * h;
        B.add(nd);
      }
  HexAssembler A;
  A.M = Field::Zero(static_cast<Eigen::Index>(B.nodes.size()));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      for (int k = 0; k < N; ++k) {
        Hex hx;
        hx.metric = 0;
        for (int q = 0; q < 8; ++q) {
          const int di = kSign[q][0] > 0, dj = kSign[q][1] > 0, dk = kSign[q][2] > 0;
          hx.v[q] = id(i + di, j + dj, k + dk);
          hx.x[q] = {(i + di) * h, (j + dj) * h, (k + dk) * h};
        }
        A.add(hx);
      }
  DiscreteManifold dm;
  finish(dm, A, std::move(B.nodes));
  dm.nu = 0;
  dm.eps = Field::Zero(dm.size());
  dm.wfac = Field::Ones(dm.size());
  dm.description = "flat torus T^3 side " + std::to_string(side);
  dm.meta = {{"kind", "flat_torus"}, {"side", side}, {"resolution", res.to_json()}};
  return dm;
}

namespace detail {

DiscreteManifold assemble_cartesian(const ChartComplex& cx, const Resolution& res) {
  if (cx.dim() != 3) throw ConfigError("the Cartesian backend is three-dimensional");
  const Family fam = cx.params().family;
  if (fam != Family::ZeroNeck && fam != Family::ZeroGraft)
    throw ConfigError("the Cartesian backend meshes ZeroNeck and ZeroGraft families");
  if (cx.prime().kind() != Model::Kind::FlatTorus) throw ConfigError("the Cartesian backend needs a torus M'");
  const bool neck = fam == Family::ZeroNeck;
  if (neck && cx.dprime().kind() != Model::Kind::FlatTorus) throw ConfigError("ZeroNeck mesh needs a torus M''");
  if (!neck && !cx.antipodal_waist())
    throw ConfigError("ZeroGraft mesh needs M'' = RP^3 (the graft closes antipodally)");

  const int N = res.grid, m = res.cube_cells;
  if (!(N / 2 > m + 1)) throw ConfigError("cube does not fit in the torus grid");
  const double ratio = 0.85;
  const double L0 = cx.prime().torus_side();
  const double r0 = ratio * m * L0 / N;
  if (!(r0 > 1.02 * cx.r_out()))
    throw ConfigError("O-grid sphere r = " + std::to_string(r0) + " does not contain the annulus r_out = " +
                      std::to_string(cx.r_out()));
  const double logT = 0.5 * std::log(cx.T2());
  const double lin = std::log(cx.r_in()), lout = std::log(cx.r_out());
  double dsa = 0;
  std::vector<double> levels = half_levels(std::log(r0), neck ? logT : 0, lin, lout, res, dsa);
  double L1 = 0, r1 = 0;
  if (neck) {
    L1 = cx.dprime().torus_side();
    r1 = ratio * m * L1 / N;
    if (!(r1 > 1.02 * cx.r_out())) throw ConfigError("O-grid sphere of M'' does not contain the annulus");
    double d2 = 0;
    std::vector<double> lower = half_levels(std::log(r1), logT, lin, lout, res, d2);
    for (auto it = lower.rbegin() + 1; it != lower.rend(); ++it) levels.push_back(2 * logT - *it);
  } else {
    // antipodal shell at T2 mu
    const double lw = std::log(cx.T2() * cx.dprime().mass());
    levels = half_levels(std::log(r0), lw, lin, lout, res, dsa);
  }
  if ((lout - lin) / dsa < res.annulus_layers - 1e-9) throw ConfigError("resolution too coarse for the annulus");

  const Surface S(m);
  const int nl = static_cast<int>(levels.size());
  Builder B;
  std::vector<std::vector<int>> shell(nl, std::vector<int>(S.size(), -1));
  for (int l = 0; l < nl; ++l) {
    const bool antipodal_last = !neck && l == nl - 1;
    for (size_t j = 0; j < S.size(); ++j) {
      if (antipodal_last) {
        const Key& k = S.keys[j];
        const int jm = S.index.at({-k[0], -k[1], -k[2]});
        if (jm < static_cast<int>(j)) {
          shell[l][j] = shell[l][jm];
          continue;
        }
      }
      const Eigen::Vector3d d = S.dir(static_cast<int>(j));
      Node nd;
      nd.chart = NodeChart::Shell;
      nd.u = levels[l];
      nd.v = std::acos(std::clamp(d[2], -1.0, 1.0));
      nd.w = std::atan2(d[1], d[0]);
      nd.side = cx.point_from_sigma(levels[l], 0).side;
      shell[l][j] = B.add(nd);
    }
  }
  for (const auto& q : S.quads)
    for (int l = 0; l + 1 < nl; ++l) {
      Hex h;
      h.metric = 1;
      for (int c = 0; c < 4; ++c)
        for (int up = 0; up < 2; ++up) {
          // slot order: the lower sigma level is the reference bottom face
          const int lev = up ? l : l + 1;
          const int slot = c + 4 * up;
          h.v[slot] = shell[lev][q.k[c]];
          h.x[slot] = {levels[lev], q.X[c], q.Y[c]};
        }
      B.hexes.push_back(h);
    }
  torus_part(B, 0, L0, N, S, r0, res.blend_layers, shell[0]);
  if (neck) torus_part(B, 1, L1, N, S, r1, res.blend_layers, shell[nl - 1]);

  HexAssembler A;
  A.Psi = [&cx](double sg) { return cx.cyl_factor(cx.point_from_sigma(sg, 0)); };
  A.M = Field::Zero(static_cast<Eigen::Index>(B.nodes.size()));
  for (const Hex& h : B.hexes) A.add(h);

  DiscreteManifold dm;
  finish(dm, A, std::move(B.nodes));
  dm.nu = cx.params().nu;
  dm.eps.resize(dm.size());
  dm.wfac.resize(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i) {
    const Node& nd = dm.nodes[i];
    if (nd.chart == NodeChart::Shell) {
      const ChartPoint p = cx.point_from_sigma(nd.u, 0);
      dm.eps[i] = cx.eps(p);
      dm.wfac[i] = cx.psi(p) / cx.component_factor(p);
    } else {
      dm.eps[i] = 0;
      dm.wfac[i] = 1;
    }
  }
  dm.complex = cx;
  dm.description = family_name(fam) + " " + cx.prime().name() + " # " + cx.dprime().name();
  dm.meta = {{"kind", "glued"},   {"family", cx.to_json()},     {"shell_levels", nl},
             {"angular", S.size()}, {"annulus_dsigma", dsa},     {"sphere_radius", r0},
             {"resolution", res.to_json()}};
  return dm;
}

}  // namespace detail
}  // namespace ym
