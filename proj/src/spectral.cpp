#include "yamabe/spectral.hpp"

#include <Eigen/CholmodSupport>
#include <unsupported/Eigen/IterativeSolvers>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>

#include <unistd.h>

namespace ym {

double integral(const DiscreteManifold& dm, const Field& phi) { return dm.M.dot(phi); }

double lq_norm(const DiscreteManifold& dm, const Field& phi, double q) {
  if (!(q >= 1)) throw ConfigError("L^q norm needs q >= 1");
  return std::pow(dm.M.dot(phi.cwiseAbs().array().pow(q).matrix()), 1 / q);
}

double sobolev_norm(const DiscreteManifold& dm, const Field& phi) {
  return std::sqrt(dm.M.dot(phi.cwiseAbs2()) + phi.dot(dm.K * phi));
}

namespace {

// Supernodal CHOLMOD factor, checked by a probe solve.  Some BLAS builds pick
// kernels that produce wrong supernodal updates on certain CPUs; the probe
// detects that and the factor is recomputed with the BLAS-free simplicial path.
class Chol {
 public:
  void compute(const SpMat& A) {
    simplicial_ = false;
    super_.compute(A);
    double err = 1;
    if (super_.info() == Eigen::Success) {
      Field probe(A.rows());
      for (Eigen::Index i = 0; i < A.rows(); ++i) probe[i] = 1.0 + 0.5 * std::sin(1.7 * i + 0.3);
      const Field b = A * probe;
      err = (super_.solve(b) - probe).norm() / probe.norm();
    }
    if (!(err < 1e-6)) {
      simplicial_ = true;
      simp_.compute(A);
      info_ = simp_.info();
      return;
    }
    info_ = Eigen::Success;
  }
  Eigen::ComputationInfo info() const { return info_; }
  template <typename R>
  Eigen::MatrixXd solve(const Eigen::MatrixBase<R>& b) const {
    return simplicial_ ? Eigen::MatrixXd(simp_.solve(b)) : Eigen::MatrixXd(super_.solve(b));
  }
  bool simplicial() const { return simplicial_; }

 private:
  Eigen::CholmodSupernodalLLT<SpMat, Eigen::Lower> super_;
  Eigen::CholmodSimplicialLLT<SpMat, Eigen::Lower> simp_;
  bool simplicial_ = false;
  Eigen::ComputationInfo info_ = Eigen::InvalidInput;
};

SpMat shifted_matrix(const SpMat& K, const Field& M, double a, double c) {
  SpMat A = a * K;
  for (Eigen::Index i = 0; i < A.rows(); ++i) A.coeffRef(i, i) += c * M[i];
  return A;
}

void factorize(Chol& chol, const SpMat& A) {
  chol.compute(A);
  if (chol.info() != Eigen::Success) throw NumericalError("Cholesky factorization failed (operator not definite)");
}

// SPD factor used as a MINRES preconditioner
struct FactorPreconditioner {
  const Chol* chol = nullptr;
  FactorPreconditioner() = default;
  template <typename M>
  FactorPreconditioner& analyzePattern(const M&) { return *this; }
  template <typename M>
  FactorPreconditioner& factorize(const M&) { return *this; }
  template <typename M>
  FactorPreconditioner& compute(const M&) { return *this; }
  Field solve(const Field& b) const { return chol->solve(b).col(0); }
  Eigen::ComputationInfo info() const { return Eigen::Success; }
};

}  // namespace

bool supernodal_factor_ok() {
  // 3D periodic grid Laplacian + identity, large enough for BLAS-backed supernodes
  const int N = 18;
  const Eigen::Index n = N * N * N;
  std::vector<Eigen::Triplet<double>> tr;
  auto id = [&](int x, int y, int z) { return ((x + N) % N) + N * (((y + N) % N) + N * ((z + N) % N)); };
  for (int z = 0; z < N; ++z)
    for (int y = 0; y < N; ++y)
      for (int x = 0; x < N; ++x) {
        const int i = id(x, y, z);
        tr.emplace_back(i, i, 7.0);
        for (int d : {-1, 1}) {
          tr.emplace_back(i, id(x + d, y, z), -1.0);
          tr.emplace_back(i, id(x, y + d, z), -1.0);
          tr.emplace_back(i, id(x, y, z + d), -1.0);
        }
      }
  SpMat A(n, n);
  A.setFromTriplets(tr.begin(), tr.end());
  Eigen::CholmodSupernodalLLT<SpMat, Eigen::Lower> f;
  f.cholmod().print = 0;  // a broken kernel reports "not positive definite"; stay quiet
  f.compute(A);
  if (f.info() != Eigen::Success) return false;
  Field probe(n);
  for (Eigen::Index i = 0; i < n; ++i) probe[i] = 1.0 + 0.5 * std::sin(1.7 * i + 0.3);
  const Field x = f.solve(A * probe);
  return (x - probe).norm() / probe.norm() < 1e-8;
}

void select_blas_kernel(char** argv) {
#if defined(__linux__) && (defined(__x86_64__) || defined(__i386__))
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr || argv == nullptr) return;
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return;
  if (supernodal_factor_ok()) return;
  ::setenv("OPENBLAS_CORETYPE", "Haswell", 1);
  ::execv("/proc/self/exe", argv);
  ::unsetenv("OPENBLAS_CORETYPE");
#else
  (void)argv;
#endif
}

struct ShiftedOperator::Impl {
  SpMat A;
  Chol chol;
  // c == 0: pinned factor of a K with the last node removed
  bool pinned = false;
  bool indefinite = false;
};

ShiftedOperator::ShiftedOperator(const DiscreteManifold& dm, double c, double tol, int max_iter)
    : dm_(dm), c_(c), tol_(tol), max_iter_(max_iter), impl_(std::make_unique<Impl>()) {
  const double a = dm.C.a;
  if (c > 0) {
    impl_->A = shifted_matrix(dm.K, dm.M, a, c);
    factorize(impl_->chol, impl_->A);
  } else if (c == 0) {
    const Eigen::Index n = dm.size() - 1;
    impl_->A = (a * dm.K).topLeftCorner(n, n);
    impl_->pinned = true;
    factorize(impl_->chol, impl_->A);
  } else {
    impl_->A = shifted_matrix(dm.K, dm.M, a, c);
    impl_->indefinite = true;
    factorize(impl_->chol, shifted_matrix(dm.K, dm.M, a, std::abs(c) + dm.C.b));
  }
}

ShiftedOperator::~ShiftedOperator() = default;

std::string ShiftedOperator::method() const {
  if (impl_->indefinite) return "minres+cholesky-preconditioner";
  if (impl_->pinned) return "cholesky-pinned-mean-zero";
  return "cholesky";
}

Field ShiftedOperator::solve_weak(const Field& b) const {
  if (b.size() != dm_.size()) throw ConfigError("right-hand side has the wrong length");
  if (!b.allFinite()) throw NumericalError("non-finite right-hand side");
  if (impl_->pinned) {
    const double tot = b.sum();
    if (std::abs(tot) > 1e-9 * (b.cwiseAbs().sum() + 1e-300))
      throw NumericalError("mean-zero solve needs a right-hand side orthogonal to constants");
    const Eigen::Index n = dm_.size() - 1;
    Field x = Field::Zero(dm_.size());
    x.head(n) = impl_->chol.solve(b.head(n)).col(0);
    x.array() -= dm_.M.dot(x) / dm_.volume();
    last_iter_ = 1;
    last_res_ = (dm_.C.a * (dm_.K * x) - b).norm() / std::max(b.norm(), 1e-300);
    return x;
  }
  if (!impl_->indefinite) {
    Field x = impl_->chol.solve(b).col(0);
    last_iter_ = 1;
    last_res_ = (impl_->A * x - b).norm() / std::max(b.norm(), 1e-300);
    return x;
  }
  // constants are an exact eigenspace (A 1 = c M 1); solve that part directly and
  // run MINRES on the weak complement, which A and the preconditioner preserve
  const double bc = b.sum() / dm_.volume();
  const Field bp = b - bc * dm_.M;
  Eigen::MINRES<SpMat, Eigen::Lower | Eigen::Upper, FactorPreconditioner> minres;
  minres.setTolerance(tol_);
  minres.setMaxIterations(max_iter_);
  minres.compute(impl_->A);
  minres.preconditioner().chol = &impl_->chol;
  Field x = bp.norm() > 0 ? Field(minres.solve(bp)) : Field(Field::Zero(b.size()));
  x.array() -= dm_.M.dot(x) / dm_.volume();
  x.array() += bc / c_;
  last_iter_ = static_cast<int>(minres.iterations());
  last_res_ = (impl_->A * x - b).norm() / std::max(b.norm(), 1e-300);
  if (!x.allFinite() || last_res_ > 1e3 * tol_)
    throw NumericalError("indefinite solve did not converge (residual " + std::to_string(last_res_) + ")");
  return x;
}

ShiftedSolve solve_shifted(const DiscreteManifold& dm, double nu, double shift, const Field& rhs) {
  const double c = -nu * dm.C.b * shift;
  ShiftedOperator op(dm, c);
  ShiftedSolve out;
  out.phi = op.solve(rhs);
  out.method = op.method();
  out.iterations = op.last_iterations();
  out.residual = op.last_residual();
  const double den = lq_norm(dm, rhs, 2.0 * dm.n / (dm.n + 2.0));
  out.ratio = den > 0 ? sobolev_norm(dm, out.phi) / den : 0;
  return out;
}

// ---------------------------------------------------------------- Sobolev quotient

double sobolev_ratio(const DiscreteManifold& dm, const Field& phi) {
  const double s = sobolev_norm(dm, phi);
  return s > 0 ? lq_norm(dm, phi, dm.C.p) / s : 0;
}

Field indicator_profile(const DiscreteManifold& dm) {
  if (!dm.complex) throw ConfigError("indicator profile needs a glued manifold");
  const ChartComplex& cx = *dm.complex;
  const double logT = 0.5 * std::log(cx.T2());
  const double top = std::log(cx.r_in()), bot = 2 * logT - top;
  Field f(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i) {
    const double sg = dm.node_sigma(i);
    if (std::isnan(sg)) {
      f[i] = dm.nodes[i].side == 0 ? 0.0 : 1.0;
    } else {
      const double x = std::clamp((top - sg) / (top - bot), 0.0, 1.0);
      f[i] = 1 - Cutoff::value(1 + x);
    }
  }
  return f;
}

SobolevEstimate sobolev_constant_estimate(const DiscreteManifold& dm, uint64_t seed, int iterations) {
  const double p = dm.C.p, a = dm.C.a;
  ShiftedOperator op(dm, a);  // a K + a M = a (K + M)
  SobolevEstimate est;
  const Field one = Field::Ones(dm.size());
  est.constant_ratio = sobolev_ratio(dm, one);
  std::vector<std::pair<std::string, Field>> seeds;
  seeds.emplace_back("constant", one);
  if (dm.complex) {
    const double logT = 0.5 * std::log(dm.complex->T2());
    Field bump = Field::Zero(dm.size());
    for (Eigen::Index i = 0; i < dm.size(); ++i) {
      const double sg = dm.node_sigma(i);
      if (!std::isnan(sg)) bump[i] = std::exp(-std::pow((sg - logT) / 0.75, 2));
    }
    seeds.emplace_back("neck_bump", bump);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.1, 1.0);
  Field rnd(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i) rnd[i] = U(rng);
  seeds.emplace_back("random", rnd);

  est.A_lower = 0;
  for (auto& [name, f0] : seeds) {
    Field phi = f0;
    double best = sobolev_ratio(dm, phi);
    Field best_phi = phi;
    for (int it = 0; it < iterations; ++it) {
      const Field g = phi.cwiseAbs().array().pow(p - 2).matrix().cwiseProduct(phi);
      Field next = a * op.solve(g);
      const double nrm = lq_norm(dm, next, p);
      if (!std::isfinite(nrm) || nrm == 0) {
        est.diverged = true;
        break;
      }
      next /= nrm;
      const double r = sobolev_ratio(dm, next);
      const double dphi = (next - phi).cwiseAbs().maxCoeff();
      phi = next;
      if (r > best) {
        best = r;
        best_phi = phi;
      }
      if (dphi < 1e-10) break;
    }
    est.seeds.emplace_back(name, best);
    if (best > est.A_lower) {
      est.A_lower = best;
      est.maximizer = best_phi;
    }
  }
  return est;
}

// ---------------------------------------------------------------- eigenpairs

namespace {

struct SectorResult {
  std::vector<double> values, residuals;
  Eigen::MatrixXd vectors;
  int iterations = 0;
  bool converged = false;
};

// M-orthonormalize the columns of Y against `locked` and among themselves
void m_orthonormalize(Eigen::MatrixXd& Y, const Eigen::MatrixXd& locked, const Field& M) {
  for (int pass = 0; pass < 2; ++pass) {
    if (locked.cols() > 0) Y -= locked * (locked.transpose() * (M.asDiagonal() * Y));
    const Eigen::MatrixXd G = Y.transpose() * (M.asDiagonal() * Y);
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success) {
      // rank-deficient block: fall back to eigen-decomposition of the Gram matrix
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
      Eigen::MatrixXd W = es.eigenvectors();
      for (int j = 0; j < W.cols(); ++j) W.col(j) /= std::sqrt(std::max(es.eigenvalues()[j], 1e-300));
      Y = Y * W;
    } else {
      Y = llt.matrixU().solve<Eigen::OnTheRight>(Y);
    }
  }
}

SectorResult sector_eigs(const SpMat& K, const Field& M, double a, int count, const EigenOptions& opt, bool seed_const,
                         uint64_t seed) {
  SectorResult res;
  const Eigen::Index N = K.rows();
  count = static_cast<int>(std::min<Eigen::Index>(count, N));
  const int block = static_cast<int>(std::min<Eigen::Index>(count + opt.guard, N));
  SpMat A = a * K;
  SpMat S = A;
  for (Eigen::Index i = 0; i < N; ++i) S.coeffRef(i, i) += opt.shift * M[i];
  Chol chol;
  factorize(chol, S);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> G;
  Eigen::MatrixXd X(N, block);
  for (Eigen::Index i = 0; i < N; ++i)
    for (int j = 0; j < block; ++j) X(i, j) = G(rng);
  if (seed_const) X.col(0).setOnes();
  Eigen::MatrixXd locked(N, 0);
  std::vector<double> lv, lr;
  double accept = opt.tol, best = std::numeric_limits<double>::infinity();
  int stall = 0;
  m_orthonormalize(X, locked, M);
  for (int it = 0; it < opt.max_iter; ++it) {
    res.iterations = it + 1;
    Eigen::MatrixXd Y = chol.solve(Eigen::MatrixXd(M.asDiagonal() * X));
    m_orthonormalize(Y, locked, M);
    const Eigen::MatrixXd AY = A * Y;
    Eigen::MatrixXd H = Y.transpose() * AY;
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    X = Y * es.eigenvectors();
    const Eigen::MatrixXd AX = AY * es.eigenvectors();
    const Field th = es.eigenvalues();
    // lock the leading converged Ritz pairs
    int nlock = 0;
    std::vector<double> rr(static_cast<size_t>(X.cols()));
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const Field r = M.cwiseInverse().asDiagonal() * AX.col(j) - th[j] * X.col(j);
      rr[j] = std::sqrt(M.dot(r.cwiseAbs2())) / std::max(1.0, std::abs(th[j]));
    }
    // a residual that stops decreasing has hit the round-off floor of strongly graded meshes
    if (rr[0] < 0.7 * best) {
      best = rr[0];
      stall = 0;
    } else if (++stall >= 20 && rr[0] <= 1e-6) {
      accept = std::max(accept, 1.5 * rr[0]);
    }
    while (nlock < X.cols() && static_cast<int>(lv.size()) + nlock < count && rr[nlock] <= accept) ++nlock;
    if (nlock > 0) {
      best = std::numeric_limits<double>::infinity();
      stall = 0;
    }
    if (nlock > 0) {
      Eigen::MatrixXd L2(N, locked.cols() + nlock);
      L2 << locked, X.leftCols(nlock);
      locked = L2;
      for (int j = 0; j < nlock; ++j) {
        lv.push_back(th[j]);
        lr.push_back(rr[j]);
      }
      X = X.rightCols(X.cols() - nlock).eval();
    }
    if (static_cast<int>(lv.size()) >= count) {
      res.converged = true;
      break;
    }
    if (it + 1 == opt.max_iter) {
      for (Eigen::Index j = 0; j < X.cols() && static_cast<int>(lv.size()) < count; ++j) {
        Eigen::MatrixXd L2(N, locked.cols() + 1);
        L2 << locked, X.col(j);
        locked = L2;
        lv.push_back(th[j]);
        lr.push_back(rr[j]);
      }
    }
  }
  // locked pairs are ascending within each locking step; sort globally
  std::vector<int> order(lv.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int x, int y) { return lv[x] < lv[y]; });
  res.vectors.resize(N, static_cast<Eigen::Index>(order.size()));
  for (size_t k = 0; k < order.size(); ++k) {
    res.values.push_back(lv[order[k]]);
    res.residuals.push_back(lr[order[k]]);
    res.vectors.col(static_cast<Eigen::Index>(k)) = locked.col(order[k]);
  }
  return res;
}

}  // namespace

SpectrumReport lowest_eigenpairs(const DiscreteManifold& dm, int count, const EigenOptions& opt) {
  if (count < 1) throw ConfigError("eigenpair count must be at least 1");
  SpectrumReport rep;
  const double a = dm.C.a;
  std::vector<int> sectors;
  if (opt.sector >= 0 || dm.backend != Backend::Axisymmetric) {
    sectors.push_back(std::max(opt.sector, 0));
  } else {
    for (int l = 0; l <= opt.max_sector; ++l) sectors.push_back(l);
  }
  struct Entry {
    double v;
    int sector;
    double res;
    int col;
  };
  std::vector<Entry> all;
  double covered = std::numeric_limits<double>::infinity();
  rep.converged = true;
  for (int l : sectors) {
    std::vector<int> kept;
    const SpMat Kl = dm.sector_stiffness(l, &kept);
    const Field Ml = dm.sector_mass(l);
    const int mult = dm.sector_multiplicity(l);
    const int want = std::max(1, (count + mult - 1) / mult);
    SectorResult sr = sector_eigs(Kl, Ml, a, want, opt, l == 0, 1234 + static_cast<uint64_t>(l));
    rep.iterations = std::max(rep.iterations, sr.iterations);
    rep.converged = rep.converged && sr.converged;
    if (!sr.values.empty()) covered = std::min(covered, sr.values.back());
    for (size_t k = 0; k < sr.values.size(); ++k)
      for (int c = 0; c < mult; ++c)
        all.push_back({sr.values[k], l, sr.residuals[k], (l == 0 && c == 0) ? static_cast<int>(k) : -1});
    if (l == 0 && opt.keep_vectors) rep.vectors = sr.vectors;
  }
  if (dm.backend == Backend::Axisymmetric && opt.sector < 0) {
    // Rayleigh lower bound for the first sector not computed
    const int l = opt.max_sector + 1;
    double ratio = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < dm.size(); ++i)
      if (!dm.axis[i]) ratio = std::min(ratio, dm.Maz[i] / dm.M[i]);
    covered = std::min(covered, a * l * (l + dm.n - 3.0) * ratio);
  }
  std::stable_sort(all.begin(), all.end(), [](const Entry& x, const Entry& y) { return x.v < y.v; });
  for (const Entry& e : all) {
    if (static_cast<int>(rep.values.size()) >= count && e.v > covered) break;
    rep.values.push_back(e.v);
    rep.sector.push_back(e.sector);
    rep.residuals.push_back(e.res);
    rep.vector_index.push_back(e.col);
  }
  rep.covered_upto = covered;
  return rep;
}

nlohmann::json SpectrumReport::to_json() const {
  return {{"eigenvalues", values}, {"sector", sector},       {"residuals", residuals},
          {"iterations", iterations}, {"converged", converged}, {"covered_upto", covered_upto}};
}

GapVerdict gap_check(const SpectrumReport& rep, double center, double halfwidth) {
  GapVerdict g;
  const double lo = center - halfwidth, hi = center + halfwidth;
  g.below = std::nan("");
  g.above = std::nan("");
  if (!(halfwidth > 0)) {
    g.holds = true;
    g.covered = true;
    return g;
  }
  g.covered = rep.covered_upto >= hi || (!rep.values.empty() && rep.values.back() >= hi);
  for (double v : rep.values) {
    if (v <= lo) g.below = v;
    else if (v < hi) g.inside.push_back(v);
    else if (std::isnan(g.above)) g.above = v;
  }
  if (!g.covered && g.inside.empty())
    throw NumericalError("spectrum does not cover the interval; request more eigenpairs");
  g.holds = g.inside.empty();
  return g;
}

nlohmann::json GapVerdict::to_json() const {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  return {{"holds", holds}, {"covered", covered}, {"below", num(below)}, {"above", num(above)}, {"inside", inside}};
}

// ---------------------------------------------------------------- Green's functions

namespace {

double bulk_radius(const DiscreteManifold& dm, int side) {
  if (dm.meta.contains("radius")) return dm.meta["radius"].get<double>();
  if (dm.complex) return side == 0 ? dm.complex->prime().radius() : dm.complex->dprime().radius();
  throw ConfigError("no product radius on this manifold");
}

double torus_side(const DiscreteManifold& dm, int side) {
  if (dm.meta.contains("side")) return dm.meta["side"].get<double>();
  if (dm.complex) return side == 0 ? dm.complex->prime().torus_side() : dm.complex->dprime().torus_side();
  throw ConfigError("no torus side on this manifold");
}

// local metric distance between nodes of the same flat-ish chart
double local_distance(const DiscreteManifold& dm, Eigen::Index i, Eigen::Index j) {
  const Node& a = dm.nodes[i];
  const Node& b = dm.nodes[j];
  if (a.chart != b.chart || a.side != b.side) return std::numeric_limits<double>::infinity();
  if (a.chart == NodeChart::Bulk) {
    const double R = bulk_radius(dm, a.side);
    return R * std::hypot(a.u - b.u, a.v - b.v);
  }
  if (a.chart == NodeChart::Grid) {
    const double L = torus_side(dm, a.side);
    double d2 = 0;
    for (double d : {a.u - b.u, a.v - b.v, a.w - b.w}) {
      d -= L * std::round(d / L);
      d2 += d * d;
    }
    return std::sqrt(d2);
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace

Eigen::Index nearest_node(const DiscreteManifold& dm, NodeChart chart, double u, double v, double w) {
  Eigen::Index best = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < dm.size(); ++i) {
    const Node& nd = dm.nodes[i];
    if (nd.chart != chart) continue;
    const double d = std::pow(nd.u - u, 2) + std::pow(nd.v - v, 2) + std::pow(nd.w - w, 2);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  if (best < 0) throw ConfigError("no node in the requested chart");
  return best;
}

GreenResult green_function(const DiscreteManifold& dm, Eigen::Index node, GreenMode mode) {
  if (node < 0 || node >= dm.size()) throw ConfigError("source node out of range");
  // sector 0 of the axisymmetric backend only sees point sources on the axis
  if (dm.backend == Backend::Axisymmetric && !dm.axis[node])
    throw ConfigError("axisymmetric Green's function needs a source on the rotation axis");
  const int n = dm.n;
  const double a = dm.C.a;
  GreenResult out;
  out.pole_expected = 1.0 / (a * (n - 2) * sphere_area(n));
  Field b = Field::Zero(dm.size());
  b[node] = 1;
  if (mode == GreenMode::APlusS) {
    const Field S = dm.S();
    if (!(S.minCoeff() > 0)) throw NumericalError("a Delta + S is not positive on this manifold");
    SpMat A = a * dm.K;
    for (Eigen::Index i = 0; i < dm.size(); ++i) A.coeffRef(i, i) += S[i] * dm.M[i];
    Chol chol;
    factorize(chol, A);
    out.G = chol.solve(b).col(0);
  } else {
    b -= dm.M / dm.volume();
    ShiftedOperator op(dm, 0.0);
    out.G = op.solve_weak(b);
    out.G.array() -= out.G.minCoeff();
  }
  out.min_value = out.G.minCoeff();

  // least squares G = c d^{2-n} + e on a ring around the source
  std::vector<std::pair<double, Eigen::Index>> ring;
  double dmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < dm.size(); ++i) {
    if (i == node) continue;
    const double d = local_distance(dm, node, i);
    if (std::isfinite(d)) {
      ring.emplace_back(d, i);
      dmin = std::min(dmin, d);
    }
  }
  if (ring.empty() || !std::isfinite(dmin)) return out;
  Eigen::Matrix2d AtA = Eigen::Matrix2d::Zero();
  Eigen::Vector2d Atb = Eigen::Vector2d::Zero();
  std::vector<std::pair<double, double>> pts;
  for (const auto& [d, i] : ring) {
    if (d < 3 * dmin || d > 8 * dmin) continue;
    const double x = std::pow(d, 2 - n);
    pts.emplace_back(x, out.G[i]);
    AtA(0, 0) += x * x;
    AtA(0, 1) += x;
    AtA(1, 1) += 1;
    Atb[0] += x * out.G[i];
    Atb[1] += out.G[i];
  }
  AtA(1, 0) = AtA(0, 1);
  if (pts.size() < 3) return out;
  const Eigen::Vector2d ce = AtA.ldlt().solve(Atb);
  out.pole_coefficient = ce[0];
  double ss = 0;
  for (const auto& [x, g] : pts) ss += std::pow(g - ce[0] * x - ce[1], 2);
  out.fit_residual = std::sqrt(ss / pts.size());
  out.fit_points = static_cast<int>(pts.size());
  return out;
}

// ---------------------------------------------------------------- neck eigenvector

namespace {

// radius of a node in the chart of its own component (side), or NaN for bulk nodes
double chart_radius_of(const DiscreteManifold& dm, Eigen::Index i, int& side) {
  const Node& nd = dm.nodes[i];
  side = nd.side;
  if (nd.chart == NodeChart::Grid) return std::sqrt(nd.u * nd.u + nd.v * nd.v + nd.w * nd.w);
  if (nd.chart == NodeChart::Strip || nd.chart == NodeChart::Shell) {
    const ChartPoint p = dm.complex->point_from_sigma(nd.u, nd.chart == NodeChart::Strip ? nd.v : 0);
    side = p.side;
    return p.r;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace

NeckEigenReport neck_eigenvector(const DiscreteManifold& dm, const NeckEigenOptions& opt) {
  if (!dm.complex || dm.complex->params().family != Family::ZeroNeck)
    throw ConfigError("the neck eigenvector needs a ZeroNeck manifold");
  const ChartComplex& cx = *dm.complex;
  NeckEigenReport rep;
  rep.volume_prime = cx.prime().volume();
  rep.volume_dprime = cx.dprime().volume();
  if (opt.require_balanced && std::abs(rep.volume_prime / rep.volume_dprime - 1) > 0.01)
    throw ConfigError("volume mismatch: vol(M') and vol(M'') differ by more than 1%");
  const int n = dm.n;
  const double a = dm.C.a, t = cx.params().t;
  const double r0 = cx.r_out(), r1 = std::pow(t, (n - 2.0) / (n + 1.0));
  auto cutoff = [&](double r) { return 1 - Cutoff::value(1 + std::log(r / r0) / std::log(r1 / r0)); };
  Field s1 = Field::Zero(dm.size()), s2 = Field::Zero(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i) {
    int side = 0;
    const double r = chart_radius_of(dm, i, side);
    (side == 0 ? s1 : s2)[i] = std::isfinite(r) ? cutoff(r) : 1.0;
  }
  const double I1 = integral(dm, s1), I2 = integral(dm, s2);
  const double Q1 = integral(dm, s1.cwiseAbs2()), Q2 = integral(dm, s2.cwiseAbs2());
  const double target = 2 * rep.volume_prime;
  rep.c_prime = std::sqrt(target / (Q1 + std::pow(I1 / I2, 2) * Q2));
  rep.c_dprime = rep.c_prime * I1 / I2;
  rep.e = rep.c_prime * s1 - rep.c_dprime * s2;

  ShiftedOperator op(dm, 0.0);
  rep.y = op.solve(rep.e);
  rep.D0 = std::sqrt(a * opt.gamma) * std::sqrt(rep.e.dot(dm.K * rep.e));
  rep.D1 = integral(dm, rep.y.cwiseProduct(rep.e)) / target;

  const Field aKe = a * (dm.K * rep.e);
  Field w = Field::Zero(dm.size());
  double lam_prev = 0;
  for (int it = 0; it < opt.max_iter; ++it) {
    const Field base = rep.e + w;
    const double lam = target / integral(dm, rep.y.cwiseProduct(base));
    Field rhs = lam * dm.M.cwiseProduct(base) - aKe;
    w = op.solve_weak(rhs);
    rep.trace_lambda.push_back(lam);
    rep.trace_w.push_back(std::sqrt(dm.M.dot(w.cwiseAbs2())));
    rep.iterations = it + 1;
    if (!std::isfinite(lam) || !w.allFinite()) throw NumericalError("neck eigenvector iteration diverged");
    if (it > 0 && std::abs(lam - lam_prev) <= opt.tol * std::abs(lam)) {
      rep.converged = true;
      lam_prev = lam;
      break;
    }
    lam_prev = lam;
  }
  rep.lambda = lam_prev;
  rep.beta = rep.e + w;
  rep.int_beta = integral(dm, rep.beta) / integral(dm, rep.beta.cwiseAbs());
  rep.int_ew = integral(dm, rep.e.cwiseProduct(w)) /
               std::max(std::sqrt(dm.M.dot(rep.e.cwiseAbs2()) * dm.M.dot(w.cwiseAbs2())), 1e-300);
  const Field r = dm.M.cwiseInverse().cwiseProduct(a * (dm.K * rep.beta)) - rep.lambda * rep.beta;
  rep.residual = std::sqrt(dm.M.dot(r.cwiseAbs2()) / dm.M.dot(rep.beta.cwiseAbs2())) / rep.lambda;
  return rep;
}

nlohmann::json NeckEigenReport::to_json() const {
  return {{"lambda", lambda},
          {"c_prime", c_prime},
          {"c_dprime", c_dprime},
          {"D0", D0},
          {"D1", D1},
          {"trace_lambda", trace_lambda},
          {"trace_w", trace_w},
          {"int_beta_relative", int_beta},
          {"int_ew_relative", int_ew},
          {"residual", residual},
          {"iterations", iterations},
          {"converged", converged},
          {"volume_prime", volume_prime},
          {"volume_dprime", volume_dprime}};
}

}  // namespace ym
