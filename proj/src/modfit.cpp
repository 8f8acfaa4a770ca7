#include "nlslab/modfit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "nlslab/errors.hpp"

namespace nlslab {

namespace {

constexpr int kUnknowns = 7;  // b, lambda, beta0, beta1, alpha0, alpha1, gamma
using Vec7 = Eigen::Matrix<double, kUnknowns, 1>;
using Mat7 = Eigen::Matrix<double, kUnknowns, kUnknowns>;

Vec7 pack(const ModState& p) {
  Vec7 z;
  z << p.b, p.lambda, p.beta[0], p.beta[1], p.alpha[0], p.alpha[1], p.gamma;
  return z;
}

ModState unpack(const Vec7& z, const ModState& like) {
  ModState p = like;
  p.b = z[0];
  p.lambda = z[1];
  p.beta = {z[2], z[3]};
  p.alpha = {z[4], z[5]};
  p.gamma = z[6];
  return p;
}

Vec7 to_vec(const std::array<double, 7>& a) { return Eigen::Map<const Vec7>(a.data()); }

int wrap(long j, int n) { return static_cast<int>(((j % n) + n) % n); }

int pow2_at_least(double x) {
  int n = 1;
  while (n < x) n *= 2;
  return n;
}

// spectral L2 norm and gradient norm of a field
void spectral_norms(const ComplexField2D& f, double& l2, double& grad) {
  SplitStep ss(f.n, f.L, nullptr, false);
  Conserved c = ss.conserved(f);
  l2 = std::sqrt(c.mass);
  grad = c.grad_norm;
}

}  // namespace

ParamPoint param_point(const ModState& m) {
  ParamPoint P;
  P.b = m.b;
  P.lambda = m.lambda;
  P.beta = m.beta;
  P.alpha = m.alpha;
  return P;
}

OrthoDirections::OrthoDirections(const ProfileExpansion& e, const RadialFunction& rho, const ParamPoint& P)
    : f_(e, P), rho_(rho), P_(P) {}

void OrthoDirections::eval(double y0, double y1, cplx& qp, std::array<cplx, 7>& F) const {
  cplx v, gx, gy;
  f_.qp_grad(y0, y1, v, gx, gy);
  const cplx I(0, 1);
  const double r2 = y0 * y0 + y1 * y1, r = std::sqrt(r2);
  F[0] = I * gx;
  F[1] = I * gy;
  F[2] = y0 * v;
  F[3] = y1 * v;
  F[4] = I * (v + y0 * gx + y1 * gy);
  F[5] = r2 * v;
  const double rh = r <= rho_.grid.r_max ? rho_.at(r) : 0.0;
  F[6] = I * rh * std::polar(1.0, -P_.b * r2 / 4 + P_.beta[0] * y0 + P_.beta[1] * y1);
  qp = v;
}

PointFn project_orthogonal(const OrthoDirections& od, const PointFn& f, double radius, double h) {
  const int m = static_cast<int>(std::ceil(radius / h));
  Mat7 G = Mat7::Zero();
  Vec7 ell = Vec7::Zero();
  std::array<cplx, 7> F;
  cplx q;
  for (int b = -m; b <= m; ++b)
    for (int a = -m; a <= m; ++a) {
      const double y0 = a * h, y1 = b * h;
      if (y0 * y0 + y1 * y1 > radius * radius) continue;
      od.eval(y0, y1, q, F);
      const cplx v = f(y0, y1);
      for (int i = 0; i < 7; ++i) {
        ell[i] += (v * std::conj(F[i])).real();
        for (int j = 0; j < 7; ++j) G(i, j) += (F[j] * std::conj(F[i])).real();
      }
    }
  const Vec7 c = G.partialPivLu().solve(ell);
  return [&od, f, c](double y0, double y1) {
    std::array<cplx, 7> F;
    cplx q;
    od.eval(y0, y1, q, F);
    cplx v = f(y0, y1);
    for (int i = 0; i < 7; ++i) v -= c[i] * F[i];
    return v;
  };
}

ComplexField2D modulated_field(const ProfileExpansion& e, const ModState& p, int n, double L, const PointFn& eps) {
  if (!(p.lambda > 0)) throw std::invalid_argument("lambda must be positive");
  ComplexField2D u(n, L, p.t);
  ProfileField f(e, param_point(p));
  const double ka = e.model().value(p.alpha[0], p.alpha[1]);
  const cplx pre = std::polar(1.0 / (std::sqrt(ka) * p.lambda), p.gamma);
  const double rmax = f.r_max();
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double y0 = (u.coord(ix) - p.alpha[0]) / p.lambda, y1 = (u.coord(iy) - p.alpha[1]) / p.lambda;
      cplx v = 0;
      if (y0 * y0 + y1 * y1 <= rmax * rmax) v = f.qp(y0, y1);
      if (eps) v += eps(y0, y1);
      u(ix, iy) = pre * v;
    }
  return u;
}

// ---------------------------------------------------------------- decomposition

Decomposer::Decomposer(const ProfileExpansion& e, DecomposeOptions opt)
    : e_(e), opt_(opt), rho_(compute_rho(e.ops())) {}

Decomposer::Lattice Decomposer::lattice(const ComplexField2D& u, double lambda) const {
  Lattice lat;
  lat.stride = std::max(1, static_cast<int>(std::lround(opt_.spacing * lambda / u.dx())));
  // one period of the box at most
  lat.radius = std::min({opt_.radius, rho_.grid.r_max, 0.98 * u.L / lambda});
  return lat;
}

std::array<double, 7> Decomposer::residuals(const ComplexField2D& u, const ModState& p) const {
  return residuals(u, p, lattice(u, p.lambda));
}

std::array<double, 7> Decomposer::residuals(const ComplexField2D& u, const ModState& p, const Lattice& lat) const {
  OrthoDirections od(e_, rho_, param_point(p));
  const double ka = e_.model().value(p.alpha[0], p.alpha[1]);
  const cplx scale = std::polar(std::sqrt(ka) * p.lambda, -p.gamma);
  const double hx = lat.stride * u.dx(), R = lat.radius * p.lambda;
  std::array<long, 2> lo, hi;
  for (int a = 0; a < 2; ++a) {
    lo[a] = static_cast<long>(std::ceil((p.alpha[a] - R + u.L) / hx));
    hi[a] = static_cast<long>(std::floor((p.alpha[a] + R + u.L) / hx));
  }
  std::array<double, 7> acc{};
  std::array<cplx, 7> F;
  cplx q;
  for (long jy = lo[1]; jy <= hi[1]; ++jy) {
    const double y1 = (-u.L + jy * hx - p.alpha[1]) / p.lambda;
    const int iy = wrap(jy * lat.stride, u.n);
    for (long jx = lo[0]; jx <= hi[0]; ++jx) {
      const double y0 = (-u.L + jx * hx - p.alpha[0]) / p.lambda;
      if (y0 * y0 + y1 * y1 > lat.radius * lat.radius) continue;
      od.eval(y0, y1, q, F);
      const cplx eps = scale * u(wrap(jx * lat.stride, u.n), iy) - q;
      for (int i = 0; i < 7; ++i) acc[i] += eps.real() * F[i].real() + eps.imag() * F[i].imag();
    }
  }
  const double h = hx / p.lambda;
  for (auto& a : acc) a *= h * h;
  return acc;
}

ComplexField2D Decomposer::extract_eps(const ComplexField2D& u, const ModState& p, const Lattice& lat) const {
  // shift the field so that alpha sits on a grid node
  const double dx = u.dx();
  std::array<long, 2> j0;
  std::array<double, 2> d;
  for (int a = 0; a < 2; ++a) {
    j0[a] = std::lround((p.alpha[a] + u.L) / dx);
    d[a] = p.alpha[a] - (-u.L + j0[a] * dx);
  }
  ComplexField2D v = u;
  if (std::fabs(d[0]) + std::fabs(d[1]) > 1e-14 * dx) SplitStep(u.n, u.L, nullptr, false).shift(v, d[0], d[1]);

  const double h = lat.stride * dx / p.lambda;
  int N = pow2_at_least(2 * lat.radius / h);
  while (N > 2 && N * lat.stride > u.n) N /= 2;
  ComplexField2D eps(N, N * h / 2, u.t);
  ProfileField f(e_, param_point(p));
  const double ka = e_.model().value(p.alpha[0], p.alpha[1]);
  const cplx scale = std::polar(std::sqrt(ka) * p.lambda, -p.gamma);
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      const long jx = a - N / 2, jy = b - N / 2;
      const cplx val = v(wrap(j0[0] + jx * lat.stride, u.n), wrap(j0[1] + jy * lat.stride, u.n));
      eps(a, b) = scale * val - f.qp(jx * h, jy * h);
    }
  return eps;
}

Decomposition Decomposer::operator()(const ComplexField2D& u, const ModState& guess) const {
  if (!(guess.lambda > 0)) throw std::invalid_argument("guess needs lambda > 0");
  const double tol = opt_.tol * e_.ground().moments.massQ;
  Lattice lat = lattice(u, guess.lambda);
  ModState like = guess;
  like.t = u.t;

  auto R = [&](const Vec7& z) { return to_vec(residuals(u, unpack(z, like), lat)); };
  auto jacobian = [&](const Vec7& z, const Vec7& r) {
    Mat7 J;
    for (int j = 0; j < kUnknowns; ++j) {
      const double scale = (j == 1 || j == 4 || j == 5) ? z[1] : 1.0;
      const double h = 1e-6 * scale;
      Vec7 zj = z;
      zj[j] += h;
      J.col(j) = (R(zj) - r) / h;
    }
    return J;
  };

  Vec7 z = pack(guess);
  Vec7 r = R(z);
  Mat7 J = jacobian(z, r);
  bool fresh = true;
  int it = 0, polish = 0, moves = 0;
  for (;;) {
    const bool converged = r.cwiseAbs().maxCoeff() <= tol;
    if (converged) {
      // the quadrature lattice follows lambda; re-solve if it moved
      Lattice now = lattice(u, z[1]);
      if (moves < 3 && (now.stride != lat.stride || std::fabs(now.radius - lat.radius) > 0.05 * lat.radius)) {
        ++moves;
        lat = now;
        r = R(z);
        J = jacobian(z, r);
        fresh = true;
        continue;
      }
      if (polish++ >= 1) break;
    }
    if (++it > opt_.max_iter) throw NewtonDiverged("no convergence after " + std::to_string(opt_.max_iter) + " iterations");
    const Vec7 dz = J.partialPivLu().solve(-r);
    if (!dz.allFinite()) throw NewtonDiverged("singular Jacobian");
    bool accepted = false;
    for (double step = 1; step > 1.0 / 64; step /= 2) {
      Vec7 zt = z + step * dz;
      if (!(zt[1] > 0)) continue;
      Vec7 rt = R(zt);
      if (rt.norm() < r.norm() || (converged && rt.norm() <= r.norm())) {
        const bool slow = rt.norm() > 0.25 * r.norm();
        z = zt;
        r = rt;
        accepted = true;
        if (slow && !converged) {
          J = jacobian(z, r);
          fresh = true;
        } else {
          fresh = false;
        }
        break;
      }
    }
    if (!accepted) {
      if (converged) break;
      if (fresh) throw NewtonDiverged("line search failed at residual " + std::to_string(r.cwiseAbs().maxCoeff()));
      J = jacobian(z, r);
      fresh = true;
    }
  }

  Decomposition d;
  d.params = unpack(z, like);
  d.iterations = it;
  for (int i = 0; i < 7; ++i) d.residuals[i] = r[i];
  Mat7 Js = jacobian(z, r);
  Eigen::JacobiSVD<Mat7> svd(Js);
  d.jacobian_cond = svd.singularValues()(0) / svd.singularValues()(kUnknowns - 1);
  d.epsilon = extract_eps(u, d.params, lat);
  double grad;
  spectral_norms(d.epsilon, d.eps_L2, grad);
  d.eps_H1 = std::hypot(d.eps_L2, grad);
  if (d.eps_L2 > opt_.eps_bound)
    throw NewtonDiverged("||eps||_L2 = " + std::to_string(d.eps_L2) + " exceeds the smallness bound");
  return d;
}

Decomposition decompose(const ComplexField2D& u, const ModState& guess, const ProfileExpansion& e,
                        const DecomposeOptions& opt) {
  return Decomposer(e, opt)(u, guess);
}

ModState advance_guess(const ModState& prev, double t, double lambda_ratio) {
  ModState g = prev;
  g.lambda = prev.lambda * lambda_ratio;
  g.b = prev.b * lambda_ratio;
  g.gamma = prev.gamma + (t - prev.t) / (prev.lambda * g.lambda);
  g.t = t;
  return g;
}

// ---------------------------------------------------------------- fit

FitReport fit_rate(const std::vector<double>& t, const std::vector<double>& lambda, double window_fraction) {
  if (t.size() != lambda.size()) throw std::invalid_argument("time and lambda series differ in length");
  if (!(window_fraction > 0 && window_fraction <= 1)) throw std::invalid_argument("window fraction must be in (0, 1]");
  const size_t n = t.size();
  const size_t count = static_cast<size_t>(std::ceil(window_fraction * n));
  if (count < 10) throw std::invalid_argument("fit needs at least 10 samples in the window");
  const size_t first = n - count;
  for (size_t i = first + 1; i < n; ++i)
    if (!(t[i] > t[i - 1]) || !(lambda[i] < lambda[i - 1]))
      throw NonMonotoneSeries("lambda must decrease along increasing time (sample " + std::to_string(i) + ")");

  double st = 0, sl = 0;
  for (size_t i = first; i < n; ++i) st += t[i], sl += lambda[i];
  st /= count;
  sl /= count;
  double stt = 0, stl = 0;
  for (size_t i = first; i < n; ++i) {
    stt += (t[i] - st) * (t[i] - st);
    stl += (t[i] - st) * (lambda[i] - sl);
  }
  const double slope = stl / stt, icpt = sl - slope * st;
  FitReport f;
  f.C0_est = -1 / slope;
  f.T_est = -icpt / slope;
  double ss = 0;
  for (size_t i = first; i < n; ++i) {
    const double d = lambda[i] - (icpt + slope * t[i]);
    ss += d * d;
  }
  f.residual = std::sqrt(ss / count);
  f.t_from = t[first];
  f.t_to = t[n - 1];
  f.samples = static_cast<int>(count);
  if (!(f.T_est > f.t_to)) throw NonMonotoneSeries("fitted blow-up time precedes the last sample");
  return f;
}

// ---------------------------------------------------------------- functionals

double cutoff_slope(double r) {
  if (r <= 1) return r;
  if (r >= 2) return 3 - std::exp(-r);
  // p(s) = 1 + s + c3 s^3 + c4 s^4 + c5 s^5 on s = r - 1, matching value, slope and curvature at s = 1
  static const Eigen::Vector3d c = [] {
    const double e2 = std::exp(-2.0);
    Eigen::Matrix3d M;
    M << 1, 1, 1, 3, 4, 5, 6, 12, 20;
    return Eigen::Vector3d(M.partialPivLu().solve(Eigen::Vector3d(3 - e2 - 2, e2 - 1, -e2)));
  }();
  const double s = r - 1;
  return 1 + s + s * s * s * (c[0] + s * (c[1] + s * c[2]));
}

LyapunovTerms lyapunov_terms(const ModState& p, const ComplexField2D& u, const ComplexField2D& w, double A,
                             const InhomogeneityModel* k) {
  if (u.n != w.n || u.L != w.L) throw std::invalid_argument("u and w grids differ");
  const int n = u.n;
  ComplexField2D v(n, u.L, u.t);
  for (size_t i = 0; i < v.size(); ++i) v.data[i] = u.data[i] - w.data[i];
  SplitStep ss(n, u.L, nullptr, false);
  ComplexField2D gx, gy;
  ss.gradient(v, gx, gy);
  const bool flat = !k || k->homogeneous();
  const double area = u.dx() * u.dx(), lam = p.lambda;
  LyapunovTerms T;
  double kin = 0, mass = 0, pot = 0, vir = 0;
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const size_t i = static_cast<size_t>(iy) * n + ix;
      const cplx vv = v.data[i], ww = w.data[i];
      kin += std::norm(gx.data[i]) + std::norm(gy.data[i]);
      mass += std::norm(vv);
      const double x0 = u.coord(ix), x1 = u.coord(iy);
      const double kk = flat ? 1.0 : k->value(x0, x1);
      const double a2 = std::norm(ww), s2 = std::norm(ww + vv);
      // F(w+v) - F(w) - Re(f(w) conj v), F = |.|^4/4
      pot += kk * (0.25 * (s2 * s2 - a2 * a2) - a2 * (ww * std::conj(vv)).real());
      const double z0 = (x0 - p.alpha[0]) / (A * lam), z1 = (x1 - p.alpha[1]) / (A * lam);
      const double rz = std::hypot(z0, z1);
      if (rz > 0) {
        const double g = A * cutoff_slope(rz) / rz;
        vir += ((g * z0 * gx.data[i] + g * z1 * gy.data[i]) * std::conj(vv)).imag();
      }
    }
  T.kinetic = 0.5 * kin * area;
  T.mass = 0.5 * mass * area / (lam * lam);
  T.potential = -pot * area;
  T.virial = 0.5 * (p.b / lam) * vir * area;
  return T;
}

double lyapunov_I(const Decomposition& d, const ComplexField2D& u, const ComplexField2D& w, double A,
                  const InhomogeneityModel* k) {
  return lyapunov_terms(d.params, u, w, A, k).total();
}

double virial_boundary(const Decomposition& d, double A, const Moments& q) {
  const auto& eps = d.epsilon;
  const double lam = d.params.lambda;
  double vir = 0;
  if (!eps.data.empty()) {
    SplitStep ss(eps.n, eps.L, nullptr, false);
    ComplexField2D gx, gy;
    ss.gradient(eps, gx, gy);
    for (int b = 0; b < eps.n; ++b)
      for (int a = 0; a < eps.n; ++a) {
        const double y0 = eps.coord(a), y1 = eps.coord(b), r = std::hypot(y0, y1);
        if (r == 0) continue;
        const double g = A * cutoff_slope(r / A) / r;
        vir += ((g * y0 * gx(a, b) + g * y1 * gy(a, b)) * std::conj(eps(a, b))).imag();
      }
    vir *= eps.dx() * eps.dx();
  }
  return -(d.params.b / lam) * q.ymomQ / 4 + vir / (2 * lam);
}

// ---------------------------------------------------------------- coercivity

CoercivityReport coercivity_check(const ProfileExpansion& e, const ModState& p, const CoercivityOptions& opt) {
  const RadialFunction rho = compute_rho(e.ops());
  OrthoDirections od(e, rho, param_point(p));
  const int n = opt.n;
  const double L = opt.L, lam = p.lambda;
  const double ka = e.model().value(p.alpha[0], p.alpha[1]);
  ComplexField2D w = modulated_field(e, p, n, L);
  const double dx = w.dx(), h2 = dx * dx / (lam * lam);
  const double R = std::min(rho.grid.r_max, (L - std::max(std::fabs(p.alpha[0]), std::fabs(p.alpha[1]))) / lam);

  struct Pt {
    size_t idx;
    double y0, y1, Q;
    std::array<cplx, 7> F;
  };
  std::vector<Pt> pts;
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double y0 = (w.coord(ix) - p.alpha[0]) / lam, y1 = (w.coord(iy) - p.alpha[1]) / lam;
      const double r = std::hypot(y0, y1);
      if (r > R) continue;
      Pt q{static_cast<size_t>(iy) * n + ix, y0, y1, e.ground().Q.at(r), {}};
      cplx qp;
      od.eval(y0, y1, qp, q.F);
      pts.push_back(q);
    }

  // Hermite-Gaussian basis of total degree <= opt.degree
  std::vector<std::pair<int, int>> degs;
  for (int a = 0; a <= opt.degree; ++a)
    for (int b = 0; a + b <= opt.degree; ++b) degs.push_back({a, b});
  auto hermite = [](int m, double x) {
    double h0 = 1, h1 = 2 * x;
    if (m == 0) return h0;
    for (int k = 1; k < m; ++k) {
      const double h2 = 2 * x * h1 - 2 * k * h0;
      h0 = h1;
      h1 = h2;
    }
    return h1;
  };
  std::vector<std::vector<double>> basis(degs.size(), std::vector<double>(pts.size()));
  for (size_t c = 0; c < degs.size(); ++c)
    for (size_t j = 0; j < pts.size(); ++j) {
      const double s0 = pts[j].y0 / opt.width, s1 = pts[j].y1 / opt.width;
      basis[c][j] = hermite(degs[c].first, s0) * hermite(degs[c].second, s1) * std::exp(-(s0 * s0 + s1 * s1) / 2);
    }

  auto inner = [&](const std::vector<cplx>& f, int i) {
    double s = 0;
    for (size_t j = 0; j < pts.size(); ++j) s += (f[j] * std::conj(pts[j].F[i])).real();
    return s * h2;
  };
  Mat7 G;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      double s = 0;
      for (const auto& q : pts) s += (q.F[j] * std::conj(q.F[i])).real();
      G(i, j) = s * h2;
    }
  const auto Gf = G.partialPivLu();

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal;
  const cplx to_x = std::polar(1.0 / (std::sqrt(ka) * lam), p.gamma);
  CoercivityReport rep;
  std::vector<cplx> eps(pts.size());
  for (int dnum = 0; dnum < opt.draws; ++dnum) {
    std::fill(eps.begin(), eps.end(), cplx(0));
    for (size_t c = 0; c < degs.size(); ++c) {
      const cplx a(normal(rng), normal(rng));
      for (size_t j = 0; j < pts.size(); ++j) eps[j] += a * basis[c][j];
    }
    Vec7 ell;
    for (int i = 0; i < 7; ++i) ell[i] = inner(eps, i);
    const Vec7 coef = Gf.solve(ell);
    for (size_t j = 0; j < pts.size(); ++j)
      for (int i = 0; i < 7; ++i) eps[j] -= coef[i] * pts[j].F[i];

    ComplexField2D v(n, L, p.t);
    for (size_t j = 0; j < pts.size(); ++j) v.data[pts[j].idx] = to_x * eps[j];
    double l2, grad;
    spectral_norms(v, l2, grad);
    // back to rescaled variables
    const double eps_l2 = std::sqrt(ka) * l2, eps_grad = std::sqrt(ka) * lam * grad;
    const double scale = opt.amplitude / std::hypot(eps_l2, eps_grad);
    double worst = 0;
    for (int i = 0; i < 7; ++i) worst = std::max(worst, std::fabs(inner(eps, i)) / eps_l2);
    double q1 = 0;
    for (size_t j = 0; j < pts.size(); ++j) q1 += eps[j].real() * pts[j].Q;
    q1 *= h2 * scale;

    ComplexField2D u = w;
    for (size_t i = 0; i < u.size(); ++i) u.data[i] += scale * v.data[i];
    const double I = lyapunov_terms(p, u, w, opt.A, &e.model()).total();
    const double a2 = opt.amplitude * opt.amplitude;
    rep.samples.push_back({lam * lam * I / a2, q1 * q1 / a2, worst});
  }

  std::vector<double> r;
  for (const auto& s : rep.samples) r.push_back(s.ratio);
  rep.c_fit = *std::min_element(r.begin(), r.end());
  rep.violations = static_cast<int>(std::count_if(r.begin(), r.end(), [](double x) { return x <= 0; }));
  std::nth_element(r.begin(), r.begin() + r.size() / 2, r.end());
  rep.c_floor = r[r.size() / 2] / 10;
  for (const auto& s : rep.samples)
    if (s.ratio < rep.c_floor) rep.C_q = std::max(rep.C_q, (rep.c_floor - s.ratio) / std::max(s.q_proj, 1e-300));
  return rep;
}

}  // namespace nlslab
