// Orbit-space Q1 discretization for metrics invariant under rotation about the
// gluing axis.  Every element lives in coordinates (x, y) in which the metric is
//   Omega^2 (dx^2 + dy^2) + (Omega F)^2 g_{S^{n-2}},
// so the Dirichlet form is int (Omega F)^{n-2} |grad u|^2 dx dy.
#include "yamabe/discrete.hpp"

#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <functional>
#include <map>

namespace ym {
namespace {

using WeightFn = std::function<void(double x, double y, double& Om, double& F)>;

struct Quad {
  std::array<int, 4> v;
  std::array<double, 4> x, y;
  int wf;
};

struct Mesh {
  int n = 3;
  std::vector<Node> nodes;
  std::vector<Quad> quads;
  std::vector<WeightFn> weights;
  std::vector<char> axis;

  int add(const Node& nd, bool on_axis) {
    nodes.push_back(nd);
    axis.push_back(on_axis ? 1 : 0);
    return static_cast<int>(nodes.size()) - 1;
  }
};

const double kGauss3[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
const double kGaussW3[3] = {5.0 / 9, 8.0 / 9, 5.0 / 9};

void assemble_mesh(const Mesh& mesh, DiscreteManifold& dm) {
  const int n = mesh.n;
  const Eigen::Index N = static_cast<Eigen::Index>(mesh.nodes.size());
  dm.M = Field::Zero(N);
  dm.Maz = Field::Zero(N);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.quads.size() * 16);
  for (const Quad& q : mesh.quads) {
    double Ke[4][4] = {};
    double Me[4] = {}, Ae[4] = {};
    for (int gi = 0; gi < 3; ++gi)
      for (int gj = 0; gj < 3; ++gj) {
        const double xi = kGauss3[gi], et = kGauss3[gj];
        const double wq = kGaussW3[gi] * kGaussW3[gj];
        const double Nv[4] = {0.25 * (1 - xi) * (1 - et), 0.25 * (1 + xi) * (1 - et), 0.25 * (1 + xi) * (1 + et),
                              0.25 * (1 - xi) * (1 + et)};
        const double dxi[4] = {-0.25 * (1 - et), 0.25 * (1 - et), 0.25 * (1 + et), -0.25 * (1 + et)};
        const double det[4] = {-0.25 * (1 - xi), -0.25 * (1 + xi), 0.25 * (1 + xi), 0.25 * (1 - xi)};
        double J00 = 0, J01 = 0, J10 = 0, J11 = 0, X = 0, Y = 0;
        for (int a = 0; a < 4; ++a) {
          J00 += dxi[a] * q.x[a];
          J01 += dxi[a] * q.y[a];
          J10 += det[a] * q.x[a];
          J11 += det[a] * q.y[a];
          X += Nv[a] * q.x[a];
          Y += Nv[a] * q.y[a];
        }
        const double dJ = J00 * J11 - J01 * J10;
        if (!(std::abs(dJ) > 0)) throw NumericalError("degenerate element in the orbit-space mesh");
        double Om = 1, F = 1;
        mesh.weights[q.wf](X, Y, Om, F);
        const double vol = wq * std::abs(dJ);
        const double E = std::pow(Om * F, n - 2);
        const double mass = std::pow(Om, n) * std::pow(F, n - 2);
        const double az = E / (F * F);
        double gx[4], gy[4];
        for (int a = 0; a < 4; ++a) {
          gx[a] = (J11 * dxi[a] - J01 * det[a]) / dJ;
          gy[a] = (-J10 * dxi[a] + J00 * det[a]) / dJ;
        }
        for (int a = 0; a < 4; ++a) {
          Me[a] += mass * Nv[a] * vol;
          Ae[a] += az * Nv[a] * vol;
          for (int b = 0; b < 4; ++b) Ke[a][b] += E * (gx[a] * gx[b] + gy[a] * gy[b]) * vol;
        }
      }
    for (int a = 0; a < 4; ++a) {
      dm.M[q.v[a]] += Me[a];
      dm.Maz[q.v[a]] += Ae[a];
      for (int b = 0; b < 4; ++b) trip.emplace_back(q.v[a], q.v[b], Ke[a][b]);
    }
  }
  // the S^{n-2} orbits contribute their area
  const double orbit = sphere_area(n - 1);
  for (auto& tr : trip) tr = Eigen::Triplet<double>(tr.row(), tr.col(), orbit * tr.value());
  dm.M *= orbit;
  dm.Maz *= orbit;
  dm.K.resize(N, N);
  dm.K.setFromTriplets(trip.begin(), trip.end());
  // exact symmetry and zero row sums
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
  dm.nodes = mesh.nodes;
  dm.axis = mesh.axis;
  dm.n = n;
  dm.C = make_constants(n);
  dm.backend = Backend::Axisymmetric;
  dm.wfac = Field::Ones(N);
}

// rectangle grid of nodes; returns index(i, j)
struct Grid2 {
  int ni = 0, nj = 0;
  std::vector<int> id;
  int operator()(int i, int j) const { return id[static_cast<size_t>(i) * nj + j]; }
};

}  // namespace

DiscreteManifold product_sphere_mesh(int n, double radius, double length, const Resolution& res) {
  if (n < 3) throw ConfigError("dimension must be at least 3");
  Mesh mesh;
  mesh.n = n;
  const double s0 = 0.5 * length / radius;
  const int Ns = res.rect_s, Nt = res.rect_theta;
  const double ds = 2 * s0 / Ns, dt = M_PI / Nt;
  Grid2 g{Ns, Nt + 1, {}};
  for (int i = 0; i < Ns; ++i)
    for (int j = 0; j <= Nt; ++j) {
      Node nd;
      nd.chart = NodeChart::Bulk;
      nd.u = -s0 + i * ds;
      nd.v = j * dt;
      g.id.push_back(mesh.add(nd, j == 0 || j == Nt));
    }
  mesh.weights.push_back([radius](double, double th, double& Om, double& F) {
    Om = radius;
    F = std::sin(th);
  });
  for (int i = 0; i < Ns; ++i)
    for (int j = 0; j < Nt; ++j) {
      const int i1 = (i + 1) % Ns;
      const double x0 = -s0 + i * ds, x1 = x0 + ds, y0 = j * dt, y1 = y0 + dt;
      mesh.quads.push_back({{g(i, j), g(i1, j), g(i1, j + 1), g(i, j + 1)}, {x0, x1, x1, x0}, {y0, y0, y1, y1}, 0});
    }
  DiscreteManifold dm;
  assemble_mesh(mesh, dm);
  dm.description = "product sphere S^" + std::to_string(n - 1) + "(" + std::to_string(radius) + ") x S^1(" +
                   std::to_string(length) + ")";
  dm.nu = (n - 1.0) * (n - 2.0) / (radius * radius);
  dm.eps = Field::Zero(dm.size());
  dm.meta = {{"kind", "product_sphere"}, {"radius", radius}, {"length", length}, {"resolution", res.to_json()}};
  return dm;
}

DiscreteManifold round_sphere_mesh(int n, double S, const Resolution& res) {
  if (n < 3 || !(S > 0)) throw ConfigError("round sphere needs n >= 3 and S > 0");
  const Constants C = make_constants(n);
  const ModelFactor f = ModelFactor::round_sphere(n, S);
  const double h = 0.5 * (n - 2);
  const double sc = 0.5 * std::log(4.0 * n * (n - 1) / S);
  const double half = 8.0;
  const int J = 2 * static_cast<int>(std::ceil(half / res.strip_dsigma));
  const int Na = 2 * (res.alpha_side + res.alpha_bottom / 2);
  const double dsg = 2 * half / J, da = M_PI / Na;
  Mesh mesh;
  mesh.n = n;
  Grid2 g{J + 1, Na + 1, {}};
  for (int i = 0; i <= J; ++i)
    for (int j = 0; j <= Na; ++j) {
      Node nd;
      nd.chart = NodeChart::Strip;
      nd.u = sc - half + i * dsg;
      nd.v = j * da;
      g.id.push_back(mesh.add(nd, j == 0 || j == Na));
    }
  mesh.weights.push_back([f, h, C](double sg, double al, double& Om, double& F) {
    const double r = std::exp(sg);
    Om = std::pow(f.value(r) * std::pow(r, h), 0.5 * (C.p - 2));
    F = std::sin(al);
  });
  for (int i = 0; i < J; ++i)
    for (int j = 0; j < Na; ++j) {
      const double x0 = sc - half + i * dsg, x1 = x0 + dsg, y0 = j * da, y1 = y0 + da;
      mesh.quads.push_back(
          {{g(i, j), g(i + 1, j), g(i + 1, j + 1), g(i, j + 1)}, {x0, x1, x1, x0}, {y0, y0, y1, y1}, 0});
    }
  DiscreteManifold dm;
  assemble_mesh(mesh, dm);
  dm.description = "round sphere S^" + std::to_string(n) + " with S = " + std::to_string(S);
  dm.nu = S;
  dm.eps = Field::Zero(dm.size());
  dm.meta = {{"kind", "round_sphere"}, {"S", S}, {"sigma_half_width", half}, {"resolution", res.to_json()}};
  return dm;
}

namespace detail {

DiscreteManifold assemble_axisymmetric(const ChartComplex& cx, const Resolution& res, bool mirrored) {
  const int n = cx.dim();
  const Constants C = cx.constants();
  const Model* comp[2] = {&cx.prime(), &cx.dprime()};
  for (const Model* m : comp)
    if (m->kind() != Model::Kind::ProductSphere)
      throw ConfigError("the orbit-space backend needs product-sphere components, got " + m->name());
  const double rs = res.seam_radius;
  if (!(rs > cx.r_out()) || !(rs < 0.9 * comp[0]->chart_radius()) || !(rs < 0.9 * comp[1]->chart_radius()))
    throw ConfigError("seam radius must lie between r_out and the chart radii");

  const double logT = 0.5 * std::log(cx.T2());
  const double sg0 = std::log(rs), sg1 = 2 * logT - sg0;
  int J = static_cast<int>(std::ceil((sg0 - sg1) / res.strip_dsigma));
  if (J % 2) ++J;
  const double dsg = (sg0 - sg1) / J;
  const double ann = std::log(cx.r_out() / cx.r_in());
  if (ann / dsg < res.annulus_layers)
    throw ConfigError("resolution too coarse: " + std::to_string(ann / dsg) + " layers across the annulus, need " +
                      std::to_string(res.annulus_layers));

  // alpha rays, chosen by where they leave the fundamental rectangle of the product
  const int Nside = res.alpha_side, Nbot = res.alpha_bottom;
  const int Na = 2 * Nside + Nbot;
  const double R = comp[0]->radius();
  const double s0 = 0.5 * comp[0]->length() / R;
  std::vector<double> alpha(Na + 1), Bs(Na + 1), Bt(Na + 1);
  for (int i = 0; i <= Nside; ++i) {
    Bt[i] = M_PI * (1 - static_cast<double>(i) / Nside);
    Bs[i] = s0;
    alpha[i] = std::atan2(M_PI - Bt[i], s0);
  }
  for (int j = 1; j < Nbot; ++j) {
    Bs[Nside + j] = s0 * (1 - 2.0 * j / Nbot);
    Bt[Nside + j] = 0;
    alpha[Nside + j] = std::atan2(M_PI, Bs[Nside + j]);
  }
  for (int i = 0; i <= Nside; ++i) {
    alpha[Na - i] = M_PI - alpha[i];
    Bs[Na - i] = -s0;
    Bt[Na - i] = Bt[i];
  }
  alpha[0] = 0;
  alpha[Na] = M_PI;

  Mesh mesh;
  mesh.n = n;
  // strip nodes, j = 0 on the side-0 seam
  Grid2 strip{J + 1, Na + 1, {}};
  for (int j = 0; j <= J; ++j)
    for (int i = 0; i <= Na; ++i) {
      Node nd;
      nd.chart = NodeChart::Strip;
      nd.u = sg0 - j * dsg;
      nd.v = alpha[i];
      nd.side = cx.point_from_sigma(nd.u, alpha[i]).side;
      if (j == J / 2) nd.u = logT;
      strip.id.push_back(mesh.add(nd, i == 0 || i == Na));
    }
  mesh.weights.push_back([&cx, C](double sg, double al, double& Om, double& F) {
    Om = std::pow(cx.cyl_factor(cx.point_from_sigma(sg, al)), 0.5 * (C.p - 2));
    F = std::sin(al);
  });
  for (int j = 0; j < J; ++j)
    for (int i = 0; i < Na; ++i) {
      const double x0 = sg0 - j * dsg, x1 = x0 - dsg;
      mesh.quads.push_back({{strip(j, i), strip(j + 1, i), strip(j + 1, i + 1), strip(j, i + 1)},
                            {x0, x1, x1, x0},
                            {alpha[i], alpha[i], alpha[i + 1], alpha[i + 1]},
                            0});
    }

  // bulk of each component: rays from the seam to the rectangle boundary
  const int K = res.bulk_layers;
  for (int side = 0; side < 2; ++side) {
    const Model& m = *comp[side];
    const int wf = static_cast<int>(mesh.weights.size());
    mesh.weights.push_back([&cx, &m, side, C](double s, double th, double& Om, double& F) {
      Om = m.radius() * std::pow(cx.bulk_factor(side, s, th), 0.5 * (C.p - 2));
      F = std::sin(th);
    });
    std::vector<double> Ps(Na + 1), Pt(Na + 1);
    for (int i = 0; i <= Na; ++i) m.chart_to_product(rs, alpha[i], Ps[i], Pt[i]);
    Pt[0] = M_PI;
    Pt[Na] = M_PI;
    Grid2 ray{Na + 1, K + 1, {}};
    ray.id.assign(static_cast<size_t>(Na + 1) * (K + 1), -1);
    const int seam_row = side == 0 ? 0 : J;
    for (int i = 0; i <= Na; ++i) {
      ray.id[static_cast<size_t>(i) * (K + 1)] = strip(seam_row, i);
      for (int k = 1; k <= K; ++k) {
        if (k == K && i >= Na - Nside) {
          ray.id[static_cast<size_t>(i) * (K + 1) + k] = ray(Na - i, K);
          continue;
        }
        const double f = static_cast<double>(k) / K;
        Node nd;
        nd.side = side;
        nd.chart = NodeChart::Bulk;
        nd.u = Ps[i] + f * (Bs[i] - Ps[i]);
        nd.v = Pt[i] + f * (Bt[i] - Pt[i]);
        const bool on_axis = i == 0 || i == Na || (k == K && (Bt[i] == 0 || Bt[i] == M_PI));
        ray.id[static_cast<size_t>(i) * (K + 1) + k] = mesh.add(nd, on_axis);
      }
    }
    for (int i = 0; i < Na; ++i)
      for (int k = 0; k < K; ++k) {
        Quad q;
        q.v = {ray(i, k), ray(i, k + 1), ray(i + 1, k + 1), ray(i + 1, k)};
        const double f0 = static_cast<double>(k) / K, f1 = static_cast<double>(k + 1) / K;
        q.x = {Ps[i] + f0 * (Bs[i] - Ps[i]), Ps[i] + f1 * (Bs[i] - Ps[i]), Ps[i + 1] + f1 * (Bs[i + 1] - Ps[i + 1]),
               Ps[i + 1] + f0 * (Bs[i + 1] - Ps[i + 1])};
        q.y = {Pt[i] + f0 * (Bt[i] - Pt[i]), Pt[i] + f1 * (Bt[i] - Pt[i]), Pt[i + 1] + f1 * (Bt[i + 1] - Pt[i + 1]),
               Pt[i + 1] + f0 * (Bt[i + 1] - Pt[i + 1])};
        q.wf = wf;
        mesh.quads.push_back(q);
      }
  }

  DiscreteManifold dm;
  assemble_mesh(mesh, dm);
  dm.nu = cx.params().nu;
  dm.eps.resize(dm.size());
  dm.wfac.resize(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i) {
    const Node& nd = dm.nodes[i];
    if (nd.chart == NodeChart::Strip) {
      const ChartPoint p = cx.point_from_sigma(nd.u, nd.v);
      dm.eps[i] = cx.eps(p);
      dm.wfac[i] = cx.psi(p) / cx.component_factor(p);
    } else {
      dm.eps[i] = cx.bulk_eps(nd.side);
      dm.wfac[i] = cx.bulk_factor(nd.side, nd.u, nd.v);
    }
  }
  dm.complex = cx;
  dm.description = family_name(cx.params().family) + " " + cx.prime().name() + " # " + cx.dprime().name();
  dm.meta = {{"kind", "glued"},
             {"family", cx.to_json()},
             {"strip_layers", J},
             {"strip_dsigma", dsg},
             {"annulus_layers", ann / dsg},
             {"alpha_rays", Na + 1},
             {"resolution", res.to_json()}};
  if (mirrored) {
    // relabel the components and list the nodes in reverse order
    const Eigen::Index N = dm.size();
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> P(N);
    for (Eigen::Index i = 0; i < N; ++i) P.indices()[i] = static_cast<int>(N - 1 - i);
    dm.K = dm.K.twistedBy(P);
    dm.M = P * dm.M;
    dm.Maz = P * dm.Maz;
    dm.eps = P * dm.eps;
    dm.wfac = P * dm.wfac;
    std::vector<Node> nodes(N);
    std::vector<char> ax(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      Node nd = dm.nodes[i];
      nd.side = 1 - nd.side;
      if (nd.chart == NodeChart::Strip) nd.u = 2 * logT - nd.u;
      nodes[N - 1 - i] = nd;
      ax[N - 1 - i] = dm.axis[i];
    }
    dm.nodes = std::move(nodes);
    dm.axis = std::move(ax);
    dm.mirrored = true;
    dm.meta["mirrored"] = true;
  }
  return dm;
}

}  // namespace detail
}  // namespace ym
