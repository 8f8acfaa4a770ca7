#include "nlslab/radial.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <json.hpp>
#include <sstream>
#include <cstdio>
#include <cstdlib>

#include "nlslab/errors.hpp"

namespace nlslab {

RadialGrid::RadialGrid(double r_max_, int n_) : r_max(r_max_), n(n_) {
  if (!(r_max > 0) || n < 16) throw ConfigError("radial grid needs r_max > 0 and n >= 16");
}

Vec RadialGrid::nodes() const {
  Vec x(n);
  for (int i = 0; i < n; ++i) x[i] = r(i);
  x[n - 1] = r_max;
  return x;
}

RadialFunction::RadialFunction(const RadialGrid& g, Vec v) : grid(g), values(std::move(v)) {
  tail_rate = fit_tail_rate(grid, values);
}

double RadialFunction::at(double r, int parity) const {
  const double h = grid.h();
  const int n = grid.n;
  if (r < 0) return parity * at(-r, parity);
  if (r > grid.r_max) return 0.0;
  constexpr int P = 8;
  int i0 = static_cast<int>(std::floor(r / h)) - 3;
  if (i0 + P - 1 > n - 1) i0 = n - P;
  double x = r / h;
  double out = 0.0;
  for (int k = 0; k < P; ++k) {
    double lk = 1.0;
    for (int j = 0; j < P; ++j)
      if (j != k) lk *= (x - (i0 + j)) / double(k - j);
    int idx = i0 + k;
    double vk = idx < 0 ? parity * values[-idx] : values[idx];
    out += lk * vk;
  }
  return out;
}

double fit_tail_rate(const RadialGrid& g, const Vec& v) {
  const int n = static_cast<int>(v.size());
  if (n < 8) return std::numeric_limits<double>::quiet_NaN();
  int margin = std::max(2, static_cast<int>(1.0 / g.h()));
  int iend = n - 1 - margin;
  if (iend < 4) iend = n - 1;
  double aend = std::fabs(v[iend]);
  if (!(aend > 0) || !std::isfinite(aend)) return std::numeric_limits<double>::quiet_NaN();
  int istart = iend;
  while (istart > 0 && std::fabs(v[istart]) < 10.0 * aend) --istart;
  if (iend - istart < 2) istart = std::max(0, iend - 8);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int i = istart; i <= iend; ++i) {
    double a = std::fabs(v[i]);
    if (!(a > 0)) continue;
    double x = g.r(i), y = std::log(a);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  if (cnt < 2) return std::numeric_limits<double>::quiet_NaN();
  double den = cnt * sxx - sx * sx;
  return (cnt * sxy - sx * sy) / den;
}

std::vector<Vec> fd_weights(double x0, const Vec& x, int order) {
  const int n = static_cast<int>(x.size());
  std::vector<Vec> c(order + 1, Vec(n, 0.0));
  double c1 = 1.0, c4 = x[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    int mn = std::min(i, order);
    double c2 = 1.0, c5 = c4;
    c4 = x[i] - x0;
    for (int j = 0; j < i; ++j) {
      double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

int parity_of_mode(int m) { return (std::abs(m) % 2 == 0) ? 1 : -1; }

RadialStencil::RadialStencil(const RadialGrid& g, int parity) : grid_(g), parity_(parity) {
  const int n = g.n;
  const double h = g.h();
  rows_.resize(n);

  Vec xc;
  for (int o = -kHalf; o <= kHalf; ++o) xc.push_back(o);
  auto wc = fd_weights(0.0, xc, 2);

  for (int i = 0; i < n; ++i) {
    Row& row = rows_[i];
    if (i + kHalf <= n - 1) {
      int first = std::max(0, i - kHalf);
      int last = i + kHalf;
      row.first = first;
      row.d1.assign(last - first + 1, 0.0);
      row.d2.assign(last - first + 1, 0.0);
      for (int o = -kHalf; o <= kHalf; ++o) {
        int col = i + o;
        double sgn = 1.0;
        if (col < 0) {
          col = -col;
          sgn = parity;
        }
        row.d1[col - first] += sgn * wc[1][o + kHalf] / h;
        row.d2[col - first] += sgn * wc[2][o + kHalf] / (h * h);
      }
    } else {
      int first = n - kOneSided;
      Vec xs;
      for (int j = first; j < n; ++j) xs.push_back(j - i);
      auto w = fd_weights(0.0, xs, 2);
      row.first = first;
      row.d1.resize(kOneSided);
      row.d2.resize(kOneSided);
      for (int k = 0; k < kOneSided; ++k) {
        row.d1[k] = w[1][k] / h;
        row.d2[k] = w[2][k] / (h * h);
      }
    }
  }
}

Vec RadialStencil::d1(const Vec& f) const {
  Vec out(f.size());
  for (size_t i = 0; i < f.size(); ++i) {
    const Row& row = rows_[i];
    double s = 0;
    for (size_t k = 0; k < row.d1.size(); ++k) s += row.d1[k] * f[row.first + k];
    out[i] = s;
  }
  return out;
}

Vec RadialStencil::d2(const Vec& f) const {
  Vec out(f.size());
  for (size_t i = 0; i < f.size(); ++i) {
    const Row& row = rows_[i];
    double s = 0;
    for (size_t k = 0; k < row.d2.size(); ++k) s += row.d2[k] * f[row.first + k];
    out[i] = s;
  }
  return out;
}

Vec apply_radial(const RadialStencil& st, int m, const Vec& potential, const Vec& f) {
  const RadialGrid& g = st.grid();
  const int n = g.n;
  Vec out(n, 0.0);
  const double m2 = double(m) * m;
  for (int i = 0; i < n; ++i) {
    const auto& row = st.row(i);
    double a1 = 0, a2 = 0;
    for (size_t k = 0; k < row.d1.size(); ++k) {
      a1 += row.d1[k] * f[row.first + k];
      a2 += row.d2[k] * f[row.first + k];
    }
    if (i == 0) {
      out[0] = (m == 0) ? -2.0 * a2 + potential[0] * f[0] : 0.0;
    } else {
      double r = g.r(i);
      out[i] = -(a2 + a1 / r) + (m2 / (r * r) + potential[i]) * f[i];
    }
  }
  return out;
}

Eigen::SparseMatrix<double> assemble_radial(const RadialStencil& st, int m, const Vec& potential,
                                            OuterBoundary bc, double robin_coeff) {
  const RadialGrid& g = st.grid();
  const int n = g.n;
  const double m2 = double(m) * m;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(n) * 12);
  for (int i = 0; i < n; ++i) {
    const auto& row = st.row(i);
    if (i == n - 1) {
      if (bc == OuterBoundary::Dirichlet) {
        trip.emplace_back(i, i, 1.0);
      } else {
        for (size_t k = 0; k < row.d1.size(); ++k) trip.emplace_back(i, row.first + int(k), row.d1[k]);
        trip.emplace_back(i, i, -robin_coeff);
      }
      continue;
    }
    if (i == 0) {
      if (m != 0) {
        trip.emplace_back(0, 0, 1.0);
      } else {
        for (size_t k = 0; k < row.d2.size(); ++k) trip.emplace_back(0, row.first + int(k), -2.0 * row.d2[k]);
        trip.emplace_back(0, 0, potential[0]);
      }
      continue;
    }
    double r = g.r(i);
    for (size_t k = 0; k < row.d2.size(); ++k)
      trip.emplace_back(i, row.first + int(k), -(row.d2[k] + row.d1[k] / r));
    trip.emplace_back(i, i, m2 / (r * r) + potential[i]);
  }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

namespace {

Vec gregory_corrections() {
  constexpr int K = 8;
  using MatL = Eigen::Matrix<long double, K, K>;
  using VecL = Eigen::Matrix<long double, K, 1>;
  MatL A;
  VecL rhs;
  for (int j = 0; j < K; ++j) {
    for (int i = 0; i < K; ++i) A(j, i) = std::pow((long double)i, j);
    rhs(j) = 0;
  }
  A(0, 0) = 1;
  rhs(0) = -0.5L;
  rhs(1) = 1.0L / 12;
  rhs(3) = -1.0L / 120;
  rhs(5) = 1.0L / 252;
  rhs(7) = -1.0L / 240;
  VecL d = A.fullPivLu().solve(rhs);
  Vec out(K);
  for (int i = 0; i < K; ++i) out[i] = static_cast<double>(d(i));
  return out;
}

}  // namespace

const Vec& radial_weights(const RadialGrid& g) {
  static std::mutex mu;
  static std::map<std::pair<double, int>, Vec> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(g.r_max, g.n);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  static const Vec d = gregory_corrections();
  Vec w(g.n, 1.0);
  for (size_t i = 0; i < d.size(); ++i) {
    w[i] += d[i];
    w[g.n - 1 - i] += d[i];
  }
  for (auto& x : w) x *= g.h();
  return cache.emplace(key, std::move(w)).first->second;
}

double quadrature(const RadialFunction& f, int p, bool tail_correction) {
  if (p < 0) throw ConfigError("radial weight power must be >= 0");
  const RadialGrid& g = f.grid;
  const Vec& w = radial_weights(g);
  double s = 0;
  for (int i = 0; i < g.n; ++i) {
    double v = f.values[i];
    if (!std::isfinite(v)) throw ConfigError("quadrature of non-finite samples");
    s += w[i] * v * std::pow(g.r(i), p + 1);
  }
  if (tail_correction) {
    double last = f.values[g.n - 1];
    if (std::fabs(last) > 1e-300) {
      double kappa = f.tail_rate;
      double R = g.r_max;
      double den = -kappa - (p + 1) / R;
      if (!std::isfinite(kappa) || !(den > 0))
        throw NonDecayingIntegrand("integrand does not decay; tail correction undefined");
      s += last * std::pow(R, p + 1) / den;
    }
  }
  return 2.0 * M_PI * s;
}

double second_difference_floor(const RadialGrid& g, double scale) {
  RadialStencil st(g, 1);
  double wsum = 0;
  for (double w : st.row(RadialStencil::kHalf).d2) wsum += std::fabs(w);
  return 4.0 * std::numeric_limits<double>::epsilon() * scale * wsum;
}

double shoot_q0(double lo, double hi, double h, double r_max) {
  // +1: crosses zero (too large); -1: turns upward (too small); 0: undecided
  auto classify = [&](double a) {
    double q = a, p = 0, r = 0;
    auto rhs = [](double rr, double qq, double pp, double& dq, double& dp) {
      dq = pp;
      dp = (rr == 0.0) ? 0.5 * (qq - qq * qq * qq) : -pp / rr + qq - qq * qq * qq;
    };
    while (r < r_max) {
      double k1q, k1p, k2q, k2p, k3q, k3p, k4q, k4p;
      rhs(r, q, p, k1q, k1p);
      rhs(r + 0.5 * h, q + 0.5 * h * k1q, p + 0.5 * h * k1p, k2q, k2p);
      rhs(r + 0.5 * h, q + 0.5 * h * k2q, p + 0.5 * h * k2p, k3q, k3p);
      rhs(r + h, q + h * k3q, p + h * k3p, k4q, k4p);
      q += h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q);
      p += h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p);
      r += h;
      if (q < 0) return 1;
      if (p > 0) return -1;
    }
    return 0;
  };
  if (classify(lo) != -1 || classify(hi) != 1)
    throw BracketFailure("shooting bracket does not enclose the ground state");
  for (int it = 0; it < 200 && hi - lo > 4e-16 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    int c = classify(mid);
    if (c == 0) return mid;
    (c > 0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

Vec shooting_profile(double a, const RadialGrid& g) {
  const int n = g.n;
  const double h = g.h();
  Vec q(n, 0.0);
  double qq = a, pp = 0;
  q[0] = a;
  int cut = n - 1;
  for (int i = 1; i < n; ++i) {
    double r = g.r(i - 1);
    auto f = [](double rr, double x, double y, double& dx, double& dy) {
      dx = y;
      dy = (rr == 0.0) ? 0.5 * (x - x * x * x) : -y / rr + x - x * x * x;
    };
    double k1q, k1p, k2q, k2p, k3q, k3p, k4q, k4p;
    f(r, qq, pp, k1q, k1p);
    f(r + 0.5 * h, qq + 0.5 * h * k1q, pp + 0.5 * h * k1p, k2q, k2p);
    f(r + 0.5 * h, qq + 0.5 * h * k2q, pp + 0.5 * h * k2p, k3q, k3p);
    f(r + h, qq + h * k3q, pp + h * k3p, k4q, k4p);
    qq += h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q);
    pp += h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p);
    q[i] = qq;
    if (qq < 1e-6 * a || pp > 0) {
      cut = i;
      break;
    }
  }
  double rc = g.r(cut);
  double qc = q[cut];
  double k0c = std::cyl_bessel_k(0.0, rc);
  for (int i = cut + 1; i < n; ++i) q[i] = qc * std::cyl_bessel_k(0.0, g.r(i)) / k0c;
  return q;
}

}  // namespace

RadialFunction solve_ground_state(const RadialGrid& grid, double tol) {
  if (!(tol > 0)) throw ConfigError("ground state tolerance must be positive");
  if (grid.r_max < 15) throw ConfigError("ground state needs r_max >= 15");
  const int n = grid.n;
  double a = shoot_q0(2.0, 2.5, grid.h(), grid.r_max);
  Vec q = shooting_profile(a, grid);

  RadialStencil st(grid, 1);
  const double R = grid.r_max;
  const double robin = -std::cyl_bessel_k(1.0, R) / std::cyl_bessel_k(0.0, R);

  auto residual = [&](const Vec& v) {
    Vec pot(n, 1.0);
    Vec F = apply_radial(st, 0, pot, v);
    for (int i = 0; i < n; ++i) F[i] -= v[i] * v[i] * v[i];
    double d = 0;
    const auto& row = st.row(n - 1);
    for (size_t k = 0; k < row.d1.size(); ++k) d += row.d1[k] * v[row.first + k];
    F[n - 1] = d - robin * v[n - 1];
    return F;
  };
  auto maxabs = [](const Vec& v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
  };

  // Pointwise residuals cannot drop below the rounding level of the second
  // difference, eps * max|Q| * sum|w| / h^2 (about 1e-10 at n = 8192).
  Vec F = residual(q);
  double res = maxabs(F);
  for (int it = 0; it < 40; ++it) {
    Vec pot(n);
    for (int i = 0; i < n; ++i) pot[i] = 1.0 - 3.0 * q[i] * q[i];
    auto J = assemble_radial(st, 0, pot, OuterBoundary::Robin, robin);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success) throw SolverFailure("ground state Newton: factorization failed");
    Eigen::Map<const Eigen::VectorXd> rhs(F.data(), n);
    Eigen::VectorXd dq = lu.solve(rhs);
    for (int i = 0; i < n; ++i) q[i] -= dq[i];
    F = residual(q);
    res = maxabs(F);
    if (dq.cwiseAbs().maxCoeff() <= 1e-14 * q[0]) break;
  }
  double floor = second_difference_floor(grid, q[0]);
  if (!(res <= std::max(tol, floor))) throw SolverFailure("ground state Newton did not reach tolerance");
  return RadialFunction(grid, q);
}

Moments compute_moments(const RadialFunction& Q) {
  const RadialGrid& g = Q.grid;
  RadialStencil st(g, 1);
  Vec dq = st.d1(Q.values);
  Vec q2(g.n), q4(g.n), g2(g.n);
  for (int i = 0; i < g.n; ++i) {
    q2[i] = Q[i] * Q[i];
    q4[i] = q2[i] * q2[i];
    g2[i] = dq[i] * dq[i];
  }
  Moments m;
  m.massQ = quadrature(RadialFunction(g, q2), 0);
  m.quarticQ = quadrature(RadialFunction(g, q4), 0);
  m.ymomQ = quadrature(RadialFunction(g, q2), 2);
  m.gradQ = quadrature(RadialFunction(g, g2), 0);
  return m;
}

GroundState make_ground_state(const RadialGrid& grid, double tol) {
  GroundState gs;
  gs.Q = solve_ground_state(grid, tol);
  RadialStencil st(grid, 1);
  gs.dQ = RadialFunction(grid, st.d1(gs.Q.values));
  gs.moments = compute_moments(gs.Q);
  Vec pot(grid.n, 1.0);
  Vec F = apply_radial(st, 0, pot, gs.Q.values);
  double res = 0;
  for (int i = 0; i < grid.n - 1; ++i) res = std::max(res, std::fabs(F[i] - std::pow(gs.Q[i], 3)));
  gs.residual = res;
  gs.residual_floor = second_difference_floor(grid, gs.Q[0]);
  return gs;
}

std::string ground_state_json(const GroundState& gs) {
  nlohmann::ordered_json j;
  j["q0"] = gs.Q[0];
  j["massQ"] = gs.moments.massQ;
  j["quarticQ"] = gs.moments.quarticQ;
  j["ymomQ"] = gs.moments.ymomQ;
  j["gradQ"] = gs.moments.gradQ;
  j["residual"] = gs.residual;
  j["tail_rate"] = gs.Q.tail_rate;
  j["grid"] = {{"r_max", gs.Q.grid.r_max}, {"n", gs.Q.grid.n}};
  return j.dump(2);
}

std::string ground_state_csv(const GroundState& gs) {
  std::ostringstream os;
  os.precision(17);
  os << "r,Q\n";
  for (int i = 0; i < gs.Q.grid.n; ++i) os << gs.Q.grid.r(i) << ',' << gs.Q[i] << '\n';
  return os.str();
}

}  // namespace nlslab
