#include "yamabe/discrete.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <tuple>

namespace ym {

std::string backend_name(Backend b) {
  return b == Backend::Axisymmetric ? "AxisymmetricProductMesh" : "CartesianRadialGraft";
}

Resolution Resolution::from_tag(const std::string& tag) {
  Resolution r;
  r.tag = tag;
  if (tag == "default") return r;
  if (tag == "coarse") {
    r.alpha_side = 6;
    r.alpha_bottom = 8;
    r.bulk_layers = 20;
    r.strip_dsigma = 0.1;
    r.rect_s = r.rect_theta = 48;
    r.grid = 16;
    r.cube_cells = 6;
    r.blend_layers = 2;
    r.shell_growth = 1.4;
    r.shell_dsigma_max = 0.25;
    return r;
  }
  if (tag == "fine") {
    r.alpha_side = 18;
    r.alpha_bottom = 24;
    r.bulk_layers = 60;
    r.strip_dsigma = 0.03;
    r.rect_s = r.rect_theta = 128;
    r.grid = 32;
    r.cube_cells = 13;
    r.blend_layers = 4;
    r.annulus_layers = 16;
    r.shell_growth = 1.2;
    r.shell_dsigma_max = 0.08;
    return r;
  }
  throw ConfigError("unknown resolution tag '" + tag + "' (coarse, default, fine)");
}

nlohmann::json Resolution::to_json() const {
  return {{"tag", tag},
          {"alpha_side", alpha_side},
          {"alpha_bottom", alpha_bottom},
          {"bulk_layers", bulk_layers},
          {"strip_dsigma", strip_dsigma},
          {"seam_radius", seam_radius},
          {"rect", {rect_s, rect_theta}},
          {"grid", grid},
          {"cube_cells", cube_cells},
          {"blend_layers", blend_layers},
          {"annulus_layers", annulus_layers},
          {"shell_growth", shell_growth},
          {"shell_dsigma_max", shell_dsigma_max}};
}

Field DiscreteManifold::S() const { return Field::Constant(size(), nu) - eps; }

SpMat DiscreteManifold::sector_stiffness(int l, std::vector<int>* kept) const {
  if (l == 0) {
    if (kept) {
      kept->resize(static_cast<size_t>(size()));
      for (Eigen::Index i = 0; i < size(); ++i) (*kept)[i] = static_cast<int>(i);
    }
    return K;
  }
  if (backend != Backend::Axisymmetric) throw ConfigError("azimuthal sectors exist only on the orbit-space mesh");
  std::vector<int> keep;
  std::vector<int> map(static_cast<size_t>(size()), -1);
  for (Eigen::Index i = 0; i < size(); ++i)
    if (!axis[i]) {
      map[i] = static_cast<int>(keep.size());
      keep.push_back(static_cast<int>(i));
    }
  const double ev = l * (l + n - 3.0);
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index k = 0; k < K.outerSize(); ++k)
    for (SpMat::InnerIterator it(K, k); it; ++it)
      if (map[it.row()] >= 0 && map[it.col()] >= 0) trip.emplace_back(map[it.row()], map[it.col()], it.value());
  for (size_t i = 0; i < keep.size(); ++i) trip.emplace_back(i, i, ev * Maz[keep[i]]);
  SpMat A(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()));
  A.setFromTriplets(trip.begin(), trip.end());
  if (kept) *kept = keep;
  return A;
}

Field DiscreteManifold::sector_mass(int l) const {
  if (l == 0) return M;
  std::vector<double> m;
  for (Eigen::Index i = 0; i < size(); ++i)
    if (!axis[i]) m.push_back(M[i]);
  return Eigen::Map<Field>(m.data(), static_cast<Eigen::Index>(m.size()));
}

int DiscreteManifold::sector_multiplicity(int l) const {
  if (backend != Backend::Axisymmetric) return 1;
  const int d = n - 2;
  auto binom = [](int a, int b) -> long {
    if (a < b || b < 0) return 0;
    long r = 1;
    for (int i = 1; i <= b; ++i) r = r * (a - b + i) / i;
    return r;
  };
  return static_cast<int>(binom(l + d, d) - binom(l + d - 2, d));
}

double DiscreteManifold::node_sigma(Eigen::Index i) const {
  const Node& nd = nodes[static_cast<size_t>(i)];
  if (nd.chart == NodeChart::Strip || nd.chart == NodeChart::Shell) return nd.u;
  return std::nan("");
}

nlohmann::json DiscreteManifold::summary() const {
  nlohmann::json j = meta;
  j["description"] = description;
  j["backend"] = backend_name(backend);
  j["n"] = n;
  j["nodes"] = size();
  j["nonzeros"] = K.nonZeros();
  j["volume"] = volume();
  j["nu"] = nu;
  j["eps_sup"] = eps.size() ? eps.cwiseAbs().maxCoeff() : 0.0;
  j["mirrored"] = mirrored;
  return j;
}

DiscreteManifold assemble(const ChartComplex& cx, const Resolution& res, bool mirrored) {
  const Family f = cx.params().family;
  if (f == Family::HatNegZero) throw ConfigError("HatNegZero carries the hat metric only and is not meshed");
  if (f == Family::ZeroNeck || f == Family::ZeroGraft) {
    if (mirrored) throw ConfigError("mirrored assembly is for the orbit-space backend");
    return detail::assemble_cartesian(cx, res);
  }
  return detail::assemble_axisymmetric(cx, res, mirrored);
}

void transplant_eps(DiscreteManifold& dm, const ChartComplex& source) {
  if (!dm.complex) throw ConfigError("transplant needs a glued manifold");
  if (std::abs(std::log(source.T2() / dm.complex->T2())) > 1e-9)
    throw ConfigError("transplant needs families with the same neck scale");
  for (Eigen::Index i = 0; i < dm.size(); ++i) {
    const Node& nd = dm.nodes[i];
    if (nd.chart == NodeChart::Strip || nd.chart == NodeChart::Shell) {
      const double al = nd.chart == NodeChart::Strip ? nd.v : 0;
      dm.eps[i] = source.eps(source.point_from_sigma(nd.u, al));
    } else {
      dm.eps[i] = source.bulk_eps(nd.side);
    }
  }
  dm.nu = source.params().nu;
  dm.meta["eps_source"] = source.to_json();
}

namespace {
const char* chart_name(NodeChart c) {
  switch (c) {
    case NodeChart::Strip: return "strip";
    case NodeChart::Bulk: return "bulk";
    case NodeChart::Grid: return "grid";
    case NodeChart::Shell: return "shell";
  }
  return "?";
}
}  // namespace

void export_manifold(const DiscreteManifold& dm, const std::string& stem,
                     const std::vector<std::pair<std::string, Field>>& fields) {
  const Eigen::Index N = dm.size();
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw ConfigError("cannot write " + stem + ".bin");
  nlohmann::json layout = nlohmann::json::array();
  uint64_t offset = 0;
  auto put_field = [&](const std::string& name, const Field& f) {
    if (f.size() != N) throw ConfigError("field " + name + " has the wrong length");
    bin.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(sizeof(double) * N));
    layout.push_back({{"name", name}, {"dtype", "f64"}, {"offset", offset}, {"count", N}});
    offset += sizeof(double) * N;
  };
  put_field("mass", dm.M);
  put_field("eps", dm.eps);
  if (dm.wfac.size() == N) put_field("wfac", dm.wfac);
  for (const auto& [name, f] : fields) put_field(name, f);
  std::vector<int32_t> rows, cols;
  std::vector<double> vals;
  for (Eigen::Index k = 0; k < dm.K.outerSize(); ++k)
    for (SpMat::InnerIterator it(dm.K, k); it; ++it) {
      rows.push_back(static_cast<int32_t>(it.row()));
      cols.push_back(static_cast<int32_t>(it.col()));
      vals.push_back(it.value());
    }
  const uint64_t nnz = vals.size();
  bin.write(reinterpret_cast<const char*>(rows.data()), static_cast<std::streamsize>(4 * nnz));
  layout.push_back({{"name", "stiffness_row"}, {"dtype", "i32"}, {"offset", offset}, {"count", nnz}});
  offset += 4 * nnz;
  bin.write(reinterpret_cast<const char*>(cols.data()), static_cast<std::streamsize>(4 * nnz));
  layout.push_back({{"name", "stiffness_col"}, {"dtype", "i32"}, {"offset", offset}, {"count", nnz}});
  offset += 4 * nnz;
  bin.write(reinterpret_cast<const char*>(vals.data()), static_cast<std::streamsize>(8 * nnz));
  layout.push_back({{"name", "stiffness_val"}, {"dtype", "f64"}, {"offset", offset}, {"count", nnz}});

  nlohmann::json nodes = nlohmann::json::array();
  for (Eigen::Index i = 0; i < N; ++i) {
    const Node& nd = dm.nodes[i];
    nodes.push_back({nd.side, chart_name(nd.chart), nd.u, nd.v, nd.w, static_cast<int>(dm.axis[i])});
  }
  nlohmann::json j = dm.summary();
  j["binary"] = stem.substr(stem.find_last_of('/') + 1) + ".bin";
  j["byte_order"] = "little";
  j["arrays"] = layout;
  j["node_columns"] = {"side", "chart", "u", "v", "w", "axis"};
  j["node_table"] = nodes;
  std::ofstream js(stem + ".json");
  if (!js) throw ConfigError("cannot write " + stem + ".json");
  js << j.dump(1) << "\n";
}

std::vector<Eigen::Index> swap_permutation(const DiscreteManifold& a, const DiscreteManifold& b) {
  if (!a.complex || !b.complex) throw ConfigError("swap permutation needs glued manifolds");
  const double logT = 0.5 * std::log(a.complex->T2());
  using K = std::tuple<int, int, long long, long long>;
  auto key = [](int side, NodeChart c, double u, double v) {
    return K{side, static_cast<int>(c), std::llround(u * 1e8), std::llround(v * 1e8)};
  };
  std::map<K, Eigen::Index> idx;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const Node& nd = b.nodes[j];
    idx[key(nd.side, nd.chart, nd.u, nd.v)] = j;
  }
  std::vector<Eigen::Index> perm(static_cast<size_t>(a.size()));
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const Node& nd = a.nodes[i];
    const double u = nd.chart == NodeChart::Strip ? 2 * logT - nd.u : nd.u;
    auto it = idx.find(key(1 - nd.side, nd.chart, u, nd.v));
    if (it == idx.end()) throw NumericalError("meshes are not mirror images of each other");
    perm[i] = it->second;
  }
  return perm;
}

}  // namespace ym
