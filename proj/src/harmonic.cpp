#include "nlslab/harmonic.hpp"

#include <cmath>
#include <stdexcept>

namespace nlslab {

namespace {

const HarmonicField& zero_harmonic() {
  static const HarmonicField z;
  return z;
}

void add_scaled(Vec& dst, double a, const Vec& src, int n) {
  if (src.empty() || a == 0.0) return;
  if (dst.empty()) dst.assign(n, 0.0);
  for (int i = 0; i < n; ++i) dst[i] += a * src[i];
}

// dst += a * x * y
void add_product(Vec& dst, double a, const Vec& x, const Vec& y, int n) {
  if (x.empty() || y.empty()) return;
  if (dst.empty()) dst.assign(n, 0.0);
  for (int i = 0; i < n; ++i) dst[i] += a * x[i] * y[i];
}

}  // namespace

AngularField AngularField::radial(const Vec& f) {
  AngularField a(static_cast<int>(f.size()));
  a.cos_part(0) = f;
  return a;
}

AngularField AngularField::mode(int m, const Vec& c, const Vec& s) {
  int n = static_cast<int>(!c.empty() ? c.size() : s.size());
  AngularField a(n);
  a.ensure(m);
  a.modes_[m].c = c;
  if (m != 0) a.modes_[m].s = s;
  return a;
}

bool AngularField::is_zero() const {
  for (const auto& h : modes_)
    if (!h.is_zero()) return false;
  return true;
}

void AngularField::ensure(int m) {
  while (static_cast<int>(modes_.size()) <= m) {
    HarmonicField h;
    h.m = static_cast<int>(modes_.size());
    modes_.push_back(h);
  }
}

const HarmonicField& AngularField::harmonic(int m) const {
  if (m < 0 || m >= static_cast<int>(modes_.size())) return zero_harmonic();
  return modes_[m];
}

Vec& AngularField::cos_part(int m) {
  ensure(m);
  if (modes_[m].c.empty()) modes_[m].c.assign(n_, 0.0);
  return modes_[m].c;
}

Vec& AngularField::sin_part(int m) {
  if (m == 0) throw std::logic_error("mode 0 has no sine part");
  ensure(m);
  if (modes_[m].s.empty()) modes_[m].s.assign(n_, 0.0);
  return modes_[m].s;
}

AngularField& AngularField::operator+=(const AngularField& o) { return axpy(1.0, o); }
AngularField& AngularField::operator-=(const AngularField& o) { return axpy(-1.0, o); }

AngularField& AngularField::operator*=(double a) {
  for (auto& h : modes_) {
    for (auto& x : h.c) x *= a;
    for (auto& x : h.s) x *= a;
  }
  return *this;
}

AngularField& AngularField::axpy(double a, const AngularField& o) {
  if (n_ == 0) n_ = o.n_;
  for (const auto& h : o.modes_) {
    if (h.is_zero()) continue;
    ensure(h.m);
    add_scaled(modes_[h.m].c, a, h.c, n_);
    add_scaled(modes_[h.m].s, a, h.s, n_);
  }
  return *this;
}

AngularField AngularField::times_radial(const Vec& w) const {
  AngularField out(n_);
  for (const auto& h : modes_) {
    if (h.is_zero()) continue;
    out.ensure(h.m);
    add_product(out.modes_[h.m].c, 1.0, h.c, w, n_);
    add_product(out.modes_[h.m].s, 1.0, h.s, w, n_);
  }
  return out;
}

double AngularField::value(int i, double theta) const {
  double v = 0;
  for (const auto& h : modes_) {
    if (!h.c.empty()) v += h.c[i] * std::cos(h.m * theta);
    if (!h.s.empty()) v += h.s[i] * std::sin(h.m * theta);
  }
  return v;
}

double AngularField::max_abs() const {
  double m = 0;
  for (const auto& h : modes_) {
    for (double x : h.c) m = std::max(m, std::fabs(x));
    for (double x : h.s) m = std::max(m, std::fabs(x));
  }
  return m;
}

void AngularField::prune() {
  for (auto& h : modes_) {
    bool zc = true, zs = true;
    for (double x : h.c) zc = zc && x == 0.0;
    for (double x : h.s) zs = zs && x == 0.0;
    if (zc) h.c.clear();
    if (zs) h.s.clear();
  }
  while (!modes_.empty() && modes_.back().is_zero()) modes_.pop_back();
}

AngularField operator+(AngularField a, const AngularField& b) { return a += b; }
AngularField operator-(AngularField a, const AngularField& b) { return a -= b; }
AngularField operator*(double a, AngularField f) { return f *= a; }

AngularField operator*(const AngularField& a, const AngularField& b) {
  const int n = std::max(a.n(), b.n());
  AngularField out(n);
  out.ensure(std::max(a.max_mode(), 0) + std::max(b.max_mode(), 0));
  for (const auto& ha : a.modes()) {
    if (ha.is_zero()) continue;
    for (const auto& hb : b.modes()) {
      if (hb.is_zero()) continue;
      const int p = ha.m, q = hb.m;
      const int sum = p + q, diff = std::abs(p - q);
      const double sgn = (p >= q) ? 1.0 : -1.0;  // sin((p-q)t) = sgn * sin(|p-q| t)
      auto cosv = [&](int m) -> Vec& { return out.cos_part(m); };
      auto sinv = [&](int m) -> Vec* { return m == 0 ? nullptr : &out.sin_part(m); };
      // cos p cos q
      if (!ha.c.empty() && !hb.c.empty()) {
        add_product(cosv(diff), 0.5, ha.c, hb.c, n);
        add_product(cosv(sum), 0.5, ha.c, hb.c, n);
      }
      // sin p sin q
      if (!ha.s.empty() && !hb.s.empty()) {
        add_product(cosv(diff), 0.5, ha.s, hb.s, n);
        add_product(cosv(sum), -0.5, ha.s, hb.s, n);
      }
      // cos p sin q = (sin(p+q) - sin(p-q)) / 2
      if (!ha.c.empty() && !hb.s.empty()) {
        if (Vec* v = sinv(sum)) add_product(*v, 0.5, ha.c, hb.s, n);
        if (Vec* v = sinv(diff)) add_product(*v, -0.5 * sgn, ha.c, hb.s, n);
      }
      // sin p cos q = (sin(p+q) + sin(p-q)) / 2
      if (!ha.s.empty() && !hb.c.empty()) {
        if (Vec* v = sinv(sum)) add_product(*v, 0.5, ha.s, hb.c, n);
        if (Vec* v = sinv(diff)) add_product(*v, 0.5 * sgn, ha.s, hb.c, n);
      }
    }
  }
  return out;
}

double inner(const AngularField& f, const AngularField& g, const RadialGrid& grid) {
  const Vec& w = radial_weights(grid);
  double total = 0;
  const int mm = std::min(f.max_mode(), g.max_mode());
  for (int m = 0; m <= mm; ++m) {
    const auto& a = f.harmonic(m);
    const auto& b = g.harmonic(m);
    const double ang = (m == 0) ? 2 * M_PI : M_PI;
    double s = 0;
    if (!a.c.empty() && !b.c.empty())
      for (int i = 0; i < grid.n; ++i) s += w[i] * grid.r(i) * a.c[i] * b.c[i];
    if (!a.s.empty() && !b.s.empty())
      for (int i = 0; i < grid.n; ++i) s += w[i] * grid.r(i) * a.s[i] * b.s[i];
    total += ang * s;
  }
  return total;
}

double norm(const AngularField& f, const RadialGrid& grid) { return std::sqrt(inner(f, f, grid)); }

Vec radial_power(const RadialGrid& g, int p) {
  Vec v(g.n);
  for (int i = 0; i < g.n; ++i) v[i] = std::pow(g.r(i), p);
  return v;
}

AngularField linear_form(const RadialGrid& g, double a0, double a1) {
  Vec r = radial_power(g, 1);
  Vec c(g.n), s(g.n);
  for (int i = 0; i < g.n; ++i) {
    c[i] = a0 * r[i];
    s[i] = a1 * r[i];
  }
  return AngularField::mode(1, c, s);
}

// H(y,y) = r^2 [ (h00+h11)/2 + (h00-h11)/2 cos 2t + h01 sin 2t ]
AngularField quadratic_form(const RadialGrid& g, double h00, double h01, double h11) {
  Vec r2 = radial_power(g, 2);
  Vec c0(g.n), c2(g.n), s2(g.n);
  for (int i = 0; i < g.n; ++i) {
    c0[i] = 0.5 * (h00 + h11) * r2[i];
    c2[i] = 0.5 * (h00 - h11) * r2[i];
    s2[i] = h01 * r2[i];
  }
  AngularField out = AngularField::radial(c0);
  out += AngularField::mode(2, c2, s2);
  out.prune();
  return out;
}

// D(y,y,y) for a symmetric 3-tensor, using cos^3, cos^2 sin, ... expansions
AngularField cubic_form(const RadialGrid& g, const double d[2][2][2]) {
  const double a = d[0][0][0], b = d[0][0][1], c = d[0][1][1], e = d[1][1][1];
  // a C^3 + 3 b C^2 S + 3 c C S^2 + e S^3
  // C^3 = (3C1 + C3)/4, S^3 = (3S1 - S3)/4, C^2 S = (S1 + S3)/4, C S^2 = (C1 - C3)/4
  const double c1 = 0.75 * a + 0.75 * c, c3 = 0.25 * a - 0.75 * c;
  const double s1 = 0.75 * b + 0.75 * e, s3 = 0.75 * b - 0.25 * e;
  Vec r3 = radial_power(g, 3);
  Vec vc1(g.n), vs1(g.n), vc3(g.n), vs3(g.n);
  for (int i = 0; i < g.n; ++i) {
    vc1[i] = c1 * r3[i];
    vs1[i] = s1 * r3[i];
    vc3[i] = c3 * r3[i];
    vs3[i] = s3 * r3[i];
  }
  AngularField out = AngularField::mode(1, vc1, vs1);
  out += AngularField::mode(3, vc3, vs3);
  out.prune();
  return out;
}

AngularField quartic_form(const RadialGrid& g, const double q[2][2][2][2]) {
  // project t -> sum q_{ijkl} u_i u_j u_k u_l onto harmonics 0..4 by exact trapezoid (16 angles)
  constexpr int N = 16;
  double coef_c[5] = {0, 0, 0, 0, 0}, coef_s[5] = {0, 0, 0, 0, 0};
  for (int k = 0; k < N; ++k) {
    double t = 2 * M_PI * k / N;
    double u[2] = {std::cos(t), std::sin(t)};
    double v = 0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int l = 0; l < 2; ++l)
          for (int m = 0; m < 2; ++m) v += q[i][j][l][m] * u[i] * u[j] * u[l] * u[m];
    for (int m = 0; m <= 4; ++m) {
      double w = (m == 0 ? 1.0 : 2.0) / N;
      coef_c[m] += w * v * std::cos(m * t);
      coef_s[m] += w * v * std::sin(m * t);
    }
  }
  Vec r4 = radial_power(g, 4);
  AngularField out(g.n);
  for (int m = 0; m <= 4; ++m) {
    if (std::fabs(coef_c[m]) > 1e-15) {
      Vec& v = out.cos_part(m);
      for (int i = 0; i < g.n; ++i) v[i] = coef_c[m] * r4[i];
    }
    if (m > 0 && std::fabs(coef_s[m]) > 1e-15) {
      Vec& v = out.sin_part(m);
      for (int i = 0; i < g.n; ++i) v[i] = coef_s[m] * r4[i];
    }
  }
  return out;
}

}  // namespace nlslab
