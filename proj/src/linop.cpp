#include "nlslab/linop.hpp"

#include <cmath>
#include <string>

#include "nlslab/errors.hpp"

namespace nlslab {

struct LinOps::Factor {
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  const Vec* kernel = nullptr;
  bool bordered = false;
};

LinOps::LinOps(const GroundState& gs, int m_max, double solvability_tol)
    : gs_(gs),
      m_max_(m_max),
      solv_tol_(solvability_tol),
      even_(gs.Q.grid, 1),
      odd_(gs.Q.grid, -1) {
  const int n = grid().n;
  vplus_.resize(n);
  vminus_.resize(n);
  for (int i = 0; i < n; ++i) {
    double q2 = gs_.Q[i] * gs_.Q[i];
    vplus_[i] = 1.0 - 3.0 * q2;
    vminus_[i] = 1.0 - q2;
  }
  dq_ = gs_.dQ.values;
}

LinOps::~LinOps() = default;

void LinOps::check_mode(int m) const {
  if (m < 0 || m > m_max_)
    throw ModeOutOfRange("angular mode " + std::to_string(m) + " exceeds m_max=" + std::to_string(m_max_));
}

Vec LinOps::apply(Op op, int m, const Vec& f) const {
  check_mode(m);
  return apply_radial(stencil(m), m, potential(op), f);
}

const Vec* LinOps::kernel(Op op, int m) const {
  if (op == Op::Plus && m == 1) return &dq_;
  if (op == Op::Minus && m == 0) return &gs_.Q.values;
  return nullptr;
}

double LinOps::radial_inner(const Vec& f, const Vec& g) const {
  const Vec& w = radial_weights(grid());
  double s = 0;
  for (int i = 0; i < grid().n; ++i) s += w[i] * grid().r(i) * f[i] * g[i];
  return s;
}

double LinOps::kernel_projection(Op op, int m, const Vec& g) const {
  const Vec* k = kernel(op, m);
  if (!k) return 0.0;
  double gg = radial_inner(g, g);
  if (gg == 0.0) return 0.0;
  return std::fabs(radial_inner(g, *k)) / std::sqrt(gg * radial_inner(*k, *k));
}

const LinOps::Factor& LinOps::factor(Op op, int m) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto key = std::make_pair(op == Op::Plus ? 0 : 1, m);
  auto it = cache_.find(key);
  if (it != cache_.end()) return *it->second;

  auto f = std::make_unique<Factor>();
  const int n = grid().n;
  auto A = assemble_radial(stencil(m), m, potential(op), OuterBoundary::Dirichlet);
  f->kernel = kernel(op, m);
  if (f->kernel) {
    // Bordered system [A k; (W r k)^T 0]: the multiplier absorbs the kernel
    // component of the source, the last row fixes the gauge.
    const Vec& k = *f->kernel;
    const Vec& w = radial_weights(grid());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(A.nonZeros() + 2 * n);
    for (int c = 0; c < A.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator itA(A, c); itA; ++itA)
        trip.emplace_back(itA.row(), itA.col(), itA.value());
    double scale = 0;
    for (int i = 0; i < n; ++i) scale = std::max(scale, std::fabs(k[i]));
    for (int i = 1; i < n - 1; ++i) {
      trip.emplace_back(i, n, k[i] / scale);
      trip.emplace_back(n, i, w[i] * grid().r(i) * k[i] / (scale * grid().h()));
    }
    Eigen::SparseMatrix<double> B(n + 1, n + 1);
    B.setFromTriplets(trip.begin(), trip.end());
    B.makeCompressed();
    f->lu.compute(B);
    f->bordered = true;
  } else {
    A.makeCompressed();
    f->lu.compute(A);
  }
  if (f->lu.info() != Eigen::Success) throw SolverFailure("factorization of the radial operator failed");
  return *cache_.emplace(key, std::move(f)).first->second;
}

Vec LinOps::solve(Op op, int m, const Vec& g) const {
  check_mode(m);
  const int n = grid().n;
  double proj = kernel_projection(op, m, g);
  if (proj > solv_tol_)
    throw SolvabilityViolated("source has kernel projection " + std::to_string(proj) + " in mode " +
                              std::to_string(m) + (op == Op::Plus ? " of L+" : " of L-"));
  const Factor& fac = factor(op, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(fac.bordered ? n + 1 : n);
  for (int i = 0; i < n; ++i) rhs[i] = g[i];
  if (m != 0) rhs[0] = 0.0;
  rhs[n - 1] = 0.0;
  Eigen::VectorXd x = fac.lu.solve(rhs);
  if (fac.lu.info() != Eigen::Success) throw SolverFailure("radial solve failed");
  Vec out(n);
  for (int i = 0; i < n; ++i) out[i] = x[i];
  return out;
}

HarmonicField LinOps::apply(Op op, const HarmonicField& f) const {
  HarmonicField out;
  out.m = f.m;
  if (!f.c.empty()) out.c = apply(op, f.m, f.c);
  if (!f.s.empty()) out.s = apply(op, f.m, f.s);
  return out;
}

HarmonicField LinOps::solve(Op op, const HarmonicField& g) const {
  HarmonicField out;
  out.m = g.m;
  if (!g.c.empty()) out.c = solve(op, g.m, g.c);
  if (!g.s.empty()) out.s = solve(op, g.m, g.s);
  return out;
}

AngularField LinOps::apply(Op op, const AngularField& f) const {
  AngularField out(grid().n);
  for (const auto& h : f.modes()) {
    if (h.is_zero()) continue;
    auto r = apply(op, h);
    out += AngularField::mode(h.m, r.c, r.s);
  }
  return out;
}

AngularField LinOps::solve(Op op, const AngularField& g) const {
  AngularField out(grid().n);
  for (const auto& h : g.modes()) {
    if (h.is_zero()) continue;
    auto r = solve(op, h);
    out += AngularField::mode(h.m, r.c, r.s);
  }
  return out;
}

Vec LinOps::derivative(int m, const Vec& f) const { return stencil(m).d1(f); }

Vec LinOps::laplacian(int m, const Vec& f) const {
  // Lap_m f = -(apply with zero potential)
  if (zero_.empty()) const_cast<Vec&>(zero_).assign(grid().n, 0.0);
  Vec out = apply_radial(stencil(m), m, zero_, f);
  for (auto& x : out) x = -x;
  return out;
}

AngularField LinOps::laplacian(const AngularField& f) const {
  AngularField out(grid().n);
  for (const auto& h : f.modes()) {
    if (h.is_zero()) continue;
    Vec c = h.c.empty() ? Vec() : laplacian(h.m, h.c);
    Vec s = h.s.empty() ? Vec() : laplacian(h.m, h.s);
    out += AngularField::mode(h.m, c, s);
  }
  return out;
}

KernelBasis kernel_basis(const LinOps& ops) {
  const auto& g = ops.grid();
  const auto& Q = ops.ground().Q;
  const auto& dQ = ops.ground().dQ;
  Vec lam(g.n), yq(g.n), y2q(g.n);
  for (int i = 0; i < g.n; ++i) {
    double r = g.r(i);
    lam[i] = Q[i] + r * dQ[i];
    yq[i] = r * Q[i];
    y2q[i] = r * r * Q[i];
  }
  KernelBasis kb;
  kb.dQ = dQ;
  kb.Q = Q;
  kb.LambdaQ = RadialFunction(g, lam);
  kb.yQ = RadialFunction(g, yq);
  kb.y2Q = RadialFunction(g, y2q);
  kb.rho = compute_rho(ops);
  return kb;
}

RadialFunction compute_rho(const LinOps& ops) {
  const auto& g = ops.grid();
  Vec y2q(g.n);
  for (int i = 0; i < g.n; ++i) y2q[i] = g.r(i) * g.r(i) * ops.ground().Q[i];
  return RadialFunction(g, ops.solve(Op::Plus, 0, y2q));
}

double cancellation_moment(const LinOps& ops, int j, int l) {
  if (j != l) return 0.0;  // angular integral of cos t sin t vanishes identically
  const auto& g = ops.grid();
  const auto& Q = ops.ground().Q;
  const auto& dQ = ops.ground().dQ;
  Vec f(g.n);
  for (int i = 0; i < g.n; ++i) f[i] = std::pow(Q[i], 3) * (Q[i] + g.r(i) * dQ[i]);
  // angular average of cos^2 is 1/2
  return 0.5 * quadrature(RadialFunction(g, f), 2);
}

namespace {

double rel_residual(const LinOps& ops, const Vec& lhs, const Vec& rhs, const Vec& scale) {
  Vec d(lhs.size());
  for (size_t i = 0; i < d.size(); ++i) d[i] = lhs[i] - rhs[i];
  return std::sqrt(ops.radial_inner(d, d) / ops.radial_inner(scale, scale));
}

}  // namespace

std::vector<IdentityResult> identity_suite(const LinOps& ops) {
  const auto& g = ops.grid();
  const auto& gs = ops.ground();
  const int n = g.n;
  KernelBasis kb = kernel_basis(ops);
  const Vec& Q = kb.Q.values;
  const Vec& dQ = kb.dQ.values;
  Vec zero(n, 0.0), m2dq(n), m4lam(n), m2q(n), lapq(n), rhs_lap(n);
  for (int i = 0; i < n; ++i) {
    m2dq[i] = -2.0 * dQ[i];
    m4lam[i] = -4.0 * kb.LambdaQ[i];
    m2q[i] = -2.0 * Q[i];
    lapq[i] = Q[i] - Q[i] * Q[i] * Q[i];  // from the ground-state equation
    rhs_lap[i] = 6.0 * dQ[i] * dQ[i] * Q[i];
  }
  std::vector<IdentityResult> out;
  auto add = [&](std::string name, double res, double thr) { out.push_back({std::move(name), res, thr}); };
  add("L-Q=0", rel_residual(ops, ops.apply(Op::Minus, 0, Q), zero, Q), 1e-7);
  add("L+dQ=0", rel_residual(ops, ops.apply(Op::Plus, 1, dQ), zero, dQ), 1e-7);
  add("L+LambdaQ=-2Q", rel_residual(ops, ops.apply(Op::Plus, 0, kb.LambdaQ.values), m2q, m2q), 1e-7);
  add("L-(yQ)=-2dQ", rel_residual(ops, ops.apply(Op::Minus, 1, kb.yQ.values), m2dq, m2dq), 1e-7);
  add("L-(|y|^2Q)=-4LambdaQ", rel_residual(ops, ops.apply(Op::Minus, 0, kb.y2Q.values), m4lam, m4lam), 1e-7);
  add("L+rho=|y|^2Q", rel_residual(ops, ops.apply(Op::Plus, 0, kb.rho.values), kb.y2Q.values, kb.y2Q.values),
      1e-7);
  add("L+(LapQ)=6|dQ|^2Q", rel_residual(ops, ops.apply(Op::Plus, 0, lapq), rhs_lap, rhs_lap), 1e-7);

  const double scale = gs.moments.quarticQ * std::sqrt(gs.moments.ymomQ);
  for (int j = 0; j < 2; ++j)
    for (int l = 0; l < 2; ++l)
      add("cancellation(" + std::to_string(j + 1) + "," + std::to_string(l + 1) + ")",
          std::fabs(cancellation_moment(ops, j, l)) / scale, 1e-8);

  Vec rq(n);
  for (int i = 0; i < n; ++i) rq[i] = kb.rho[i] * Q[i];
  double rho_q = quadrature(RadialFunction(g, rq), 0);
  add("(rho,Q)=|yQ|^2/2", std::fabs(rho_q - 0.5 * gs.moments.ymomQ) / gs.moments.ymomQ, 1e-6);
  return out;
}

}  // namespace nlslab
