#include "nlslab/profile.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "nlslab/errors.hpp"

namespace nlslab {

// ---------------------------------------------------------------- parameters

double ParamPoint::norm() const {
  double m = std::max(std::fabs(b), std::fabs(lambda));
  for (int j = 0; j < 2; ++j) m = std::max({m, std::fabs(beta[j]), std::fabs(alpha[j])});
  return m;
}

double ParamPoint::get(int p) const {
  switch (p) {
    case kB: return b;
    case kLambda: return lambda;
    case kBeta1: return beta[0];
    case kBeta2: return beta[1];
    case kAlpha1: return alpha[0];
    default: return alpha[1];
  }
}

void ParamPoint::set(int p, double v) {
  switch (p) {
    case kB: b = v; break;
    case kLambda: lambda = v; break;
    case kBeta1: beta[0] = v; break;
    case kBeta2: beta[1] = v; break;
    case kAlpha1: alpha[0] = v; break;
    default: alpha[1] = v; break;
  }
}

Monomial Monomial::of(int p, int power) {
  Monomial m;
  m.e[p] = power;
  return m;
}

int Monomial::degree() const {
  int d = 0;
  for (int x : e) d += x;
  return d;
}

double Monomial::eval(const ParamPoint& P) const {
  double v = 1;
  for (int p = 0; p < kNumParams; ++p)
    for (int k = 0; k < e[p]; ++k) v *= P.get(p);
  return v;
}

Monomial Monomial::operator*(const Monomial& o) const {
  Monomial m;
  for (int p = 0; p < kNumParams; ++p) m.e[p] = e[p] + o.e[p];
  return m;
}

std::string Monomial::str() const {
  static const char* names[kNumParams] = {"b", "l", "be1", "be2", "al1", "al2"};
  std::string s;
  for (int p = 0; p < kNumParams; ++p) {
    if (e[p] == 0) continue;
    if (!s.empty()) s += "*";
    s += names[p];
    if (e[p] > 1) s += "^" + std::to_string(e[p]);
  }
  return s.empty() ? "1" : s;
}

bool kept_by_construction(const Monomial& m) {
  const int d = m.degree();
  if (d <= 2) return true;
  if (d == 3) return m.alpha_beta_degree() <= 1;
  if (d == 4) return m.alpha_beta_degree() == 0;
  return false;
}

// ---------------------------------------------------------------- algebra

ComplexAngular& ComplexAngular::axpy(cplx a, const ComplexAngular& o) {
  if (a.real() != 0.0) {
    re.axpy(a.real(), o.re);
    im.axpy(a.real(), o.im);
  }
  if (a.imag() != 0.0) {
    re.axpy(-a.imag(), o.im);
    im.axpy(a.imag(), o.re);
  }
  return *this;
}

ComplexAngular ComplexAngular::conj() const {
  ComplexAngular c = *this;
  c.im *= -1.0;
  return c;
}

ComplexAngular operator*(const ComplexAngular& a, const ComplexAngular& b) {
  ComplexAngular out;
  out.re = a.re * b.re;
  out.re -= a.im * b.im;
  out.im = a.re * b.im;
  out.im += a.im * b.re;
  return out;
}

ParamPoly ParamPoly::constant(const ComplexAngular& f, const Monomial& m) {
  ParamPoly p(std::max(f.re.n(), f.im.n()));
  p.add(1.0, m, f);
  return p;
}

ParamPoly& ParamPoly::add(cplx a, const Monomial& m, const ComplexAngular& f) {
  if (f.is_zero() || a == 0.0) return *this;
  auto it = terms_.find(m);
  if (it == terms_.end()) it = terms_.emplace(m, ComplexAngular(AngularField(n_), AngularField(n_))).first;
  it->second.axpy(a, f);
  return *this;
}

ParamPoly& ParamPoly::axpy(cplx a, const ParamPoly& o) {
  if (n_ == 0) n_ = o.n_;
  for (const auto& [m, f] : o.terms_) add(a, m, f);
  return *this;
}

ParamPoly ParamPoly::times(cplx a, const Monomial& mono) const {
  ParamPoly out(n_);
  for (const auto& [m, f] : terms_) out.add(a, m * mono, f);
  return out;
}

ParamPoly ParamPoly::derivative(int p) const {
  ParamPoly out(n_);
  for (const auto& [m, f] : terms_) {
    if (m.e[p] == 0) continue;
    Monomial d = m;
    d.e[p] -= 1;
    out.add(double(m.e[p]), d, f);
  }
  return out;
}

ParamPoly ParamPoly::conj() const {
  ParamPoly out(n_);
  for (const auto& [m, f] : terms_) out.add(1.0, m, f.conj());
  return out;
}

ParamPoly ParamPoly::filtered(Filter keep) const {
  ParamPoly out(n_);
  for (const auto& [m, f] : terms_)
    if (keep(m)) out.add(1.0, m, f);
  return out;
}

ParamPoly ParamPoly::degree(int d) const {
  ParamPoly out(n_);
  for (const auto& [m, f] : terms_)
    if (m.degree() == d) out.add(1.0, m, f);
  return out;
}

ParamPoly ParamPoly::conformal(double C0) const {
  ParamPoly out(n_);
  for (const auto& [m, f] : terms_) {
    Monomial c = m;
    c.e[kLambda] += c.e[kB];
    double scale = std::pow(C0, -c.e[kB]);
    c.e[kB] = 0;
    out.add(scale, c, f);
  }
  return out;
}

ComplexAngular ParamPoly::eval(const ParamPoint& P) const {
  ComplexAngular out{AngularField(n_), AngularField(n_)};
  for (const auto& [m, f] : terms_) out.axpy(m.eval(P), f);
  return out;
}

ParamPoly ParamPoly::mul(const ParamPoly& a, const ParamPoly& b, Filter keep) {
  ParamPoly out(std::max(a.n_, b.n_));
  for (const auto& [ma, fa] : a.terms_)
    for (const auto& [mb, fb] : b.terms_) {
      Monomial m = ma * mb;
      if (!keep(m)) continue;
      out.add(1.0, m, fa * fb);
    }
  return out;
}

// ---------------------------------------------------------------- constants

namespace {

double trace(const Mat2& H) { return H[0][0] + H[1][1]; }

// int |y|^2 Q^4
double y2q4(const GroundState& gs) {
  const auto& g = gs.Q.grid;
  Vec v(g.n);
  for (int i = 0; i < g.n; ++i) v[i] = std::pow(gs.Q[i], 4);
  return quadrature(RadialFunction(g, v), 2);
}

AngularField partial_Q(const LinOps& ops, int j) {
  const Vec& dq = ops.ground().dQ.values;
  Vec zero;
  return j == 0 ? AngularField::mode(1, dq, zero) : AngularField::mode(1, zero, dq);
}

AngularField radial_field(const Vec& v) { return AngularField::radial(v); }

Vec pow_q(const GroundState& gs, int p) {
  Vec v(gs.Q.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::pow(gs.Q[i], p);
  return v;
}

ComplexAngular real_field(const AngularField& f) { return ComplexAngular(f, AngularField(f.n())); }

}  // namespace

ProfileConstants derive_constants(const LinOps& ops, const InhomogeneityModel& k, bool require_definite) {
  k.validate(require_definite);
  const auto& gs = ops.ground();
  const auto& mo = gs.moments;
  const auto& g = ops.grid();
  ProfileConstants c;
  const double ratio = mo.quarticQ / (2 * mo.massQ);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) c.c0[j][i] = ratio * k.H[j][i];

  const double half_y2q4 = 0.5 * y2q4(gs);  // int y_l^2 Q^4 for either axis
  for (int j = 0; j < 2; ++j) c.beta3[j] = (k.D3[j][0][0] + k.D3[j][1][1]) * half_y2q4 / (4 * mo.massQ);

  auto rho = compute_rho(ops);
  Vec y2q_rho(g.n), q_rho(g.n);
  for (int i = 0; i < g.n; ++i) {
    y2q_rho[i] = g.r(i) * g.r(i) * gs.Q[i] * rho[i];
    q_rho[i] = gs.Q[i] * rho[i];
  }
  const double num = quadrature(RadialFunction(g, y2q_rho), 0);
  const double den = quadrature(RadialFunction(g, q_rho), 0);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      c.d0_form[j][i] = 2 * mo.massQ / mo.ymomQ * k.H[j][i];
      c.d1_form[j][i] = num / (4 * den) * c.d0_form[j][i];
    }

  c.a1 = -trace(k.H) / 8 * mo.quarticQ / mo.massQ;

  // projection formula with the full (radial + mode 2) solution of L+ T = H(y,y) Q^3 / 2
  AngularField q = radial_field(gs.Q.values);
  AngularField q2 = radial_field(pow_q(gs, 2));
  AngularField Hyy = quadratic_form(g, k.H[0][0], k.H[0][1], k.H[1][1]);
  AngularField src = 0.5 * (Hyy * radial_field(pow_q(gs, 3)));
  src.prune();
  AngularField T20 = src.is_zero() ? AngularField(g.n) : ops.solve(Op::Plus, src);
  for (int j = 0; j < 2; ++j) {
    AngularField dj = partial_Q(ops, j);
    AngularField a = 6.0 * ((q * T20) * dj);
    a.axpy(1.5, (Hyy * q2) * dj);
    c.a1_axis[j] = -inner(a, dj, g) / mo.massQ;
  }
  c.a1_projection = 0.5 * (c.a1_axis[0] + c.a1_axis[1]);
  return c;
}

std::string constants_json(const ProfileConstants& c) {
  nlohmann::json j;
  auto mat = [](const Mat2& m) { return nlohmann::json{{m[0][0], m[0][1]}, {m[1][0], m[1][1]}}; };
  j["c0"] = mat(c.c0);
  j["beta3"] = {c.beta3[0], c.beta3[1]};
  j["beta4"] = {c.beta4[0], c.beta4[1]};
  j["d0_form"] = mat(c.d0_form);
  j["d1_form"] = mat(c.d1_form);
  j["a1"] = c.a1;
  j["a1_projection"] = c.a1_projection;
  j["a1_axis"] = {c.a1_axis[0], c.a1_axis[1]};
  j["C0"] = c.C0;
  return j.dump(2);
}

double compute_C0(const GroundState& gs, double E0, const InhomogeneityModel& k) {
  const double hq4 = 0.5 * trace(k.H) * y2q4(gs);  // int H(y,y) Q^4
  const double Et = E0 + hq4 / 8;
  if (!(Et > 0))
    throw EnergyConditionViolated("E0 + int H(y,y)Q^4/8 = " + std::to_string(Et) +
                                  " is not positive; no critical blow-up element");
  return std::sqrt(gs.moments.ymomQ) / std::sqrt(8 * Et);
}

double energy_for_C0(const GroundState& gs, double C0, const InhomogeneityModel& k) {
  const double hq4 = 0.5 * trace(k.H) * y2q4(gs);
  return gs.moments.ymomQ / (8 * C0 * C0) - hq4 / 8;
}

// ---------------------------------------------------------------- expansion

ProfileExpansion::ProfileExpansion(std::shared_ptr<const LinOps> ops, InhomogeneityModel k, ProfileConstants c,
                                   double C0)
    : ops_(std::move(ops)), k_(k), c_(c), C0_(C0), f4_(ops_->grid().n) {
  c_.C0 = C0;
}

ParamPoly ProfileExpansion::polynomial(int max_order) const {
  const int n = ops_->grid().n;
  ParamPoly P(n);
  P.add(1.0, Monomial{}, real_field(radial_field(ground().Q.values)));
  for (const auto& t : terms_) {
    if (t.mono.degree() > max_order) continue;
    ComplexAngular f = t.imaginary ? ComplexAngular(AngularField(n), t.field) : real_field(t.field);
    P.add(1.0, t.mono, f);
  }
  return P;
}

ComplexAngular ProfileExpansion::sum(const ParamPoint& P, int deriv) const {
  const int n = ops_->grid().n;
  ComplexAngular out{AngularField(n), AngularField(n)};
  if (deriv == -1) out.re += radial_field(ground().Q.values);
  for (const auto& t : terms_) {
    double coef;
    if (deriv < 0) {
      coef = t.mono.eval(P);  // -1: with Q, -2: corrections only
    } else {
      if (t.mono.e[deriv] == 0) continue;
      Monomial d = t.mono;
      d.e[deriv] -= 1;
      coef = t.mono.e[deriv] * d.eval(P);
    }
    if (coef == 0.0) continue;
    (t.imaginary ? out.im : out.re).axpy(coef, t.field);
  }
  return out;
}

Vec2 ProfileExpansion::B(const ParamPoint& P) const {
  Vec2 out;
  const double l = P.lambda;
  for (int j = 0; j < 2; ++j)
    out[j] = l * (c_.c0[j][0] * P.alpha[0] + c_.c0[j][1] * P.alpha[1]) + c_.beta3[j] * l * l * l +
             c_.beta4[j] * l * l * l * l;
  return out;
}

ParamPoly ProfileExpansion::known_residual(const ParamPoly& P, int order) const {
  const auto& g = ops_->grid();
  const int n = g.n;
  const cplx I(0, 1);
  auto keep = [](const Monomial& m) { return kept_by_construction(m); };
  const Monomial b = Monomial::of(kB), l = Monomial::of(kLambda);
  const Monomial be[2] = {Monomial::of(kBeta1), Monomial::of(kBeta2)};
  const Monomial al[2] = {Monomial::of(kAlpha1), Monomial::of(kAlpha2)};

  ParamPoly E(n);
  // parameter flow: -i b^2 dP/db - i lambda b dP/dlambda + 2 i lambda beta.dP/dalpha + i(-b beta + B).dP/dbeta
  E.axpy(1.0, P.derivative(kB).times(-I, b * b));
  E.axpy(1.0, P.derivative(kLambda).times(-I, l * b));
  for (int j = 0; j < 2; ++j) {
    ParamPoly da = P.derivative(kAlpha1 + j), db = P.derivative(kBeta1 + j);
    E.axpy(1.0, da.times(2.0 * I, l * be[j]));
    E.axpy(1.0, db.times(-I, b * be[j]));
    for (int i = 0; i < 2; ++i) E.axpy(1.0, db.times(I * c_.c0[j][i], l * al[i]));
    E.axpy(1.0, db.times(I * c_.beta3[j], l * l * l));
    E.axpy(1.0, db.times(I * c_.beta4[j], l * l * l * l));
  }
  // -(B.y) P; the term i lambda beta.grad k(alpha)/k(alpha) P carries alpha*beta and is dropped
  ParamPoly By(n);
  for (int i = 0; i < 2; ++i)
    By.add(1.0, l * al[i], real_field(linear_form(g, c_.c0[0][i], c_.c0[1][i])));
  By.add(1.0, l * l * l, real_field(linear_form(g, c_.beta3[0], c_.beta3[1])));
  By.add(1.0, l * l * l * l, real_field(linear_form(g, c_.beta4[0], c_.beta4[1])));
  E.axpy(-1.0, ParamPoly::mul(By, P, keep));

  // Delta P - P, with Delta Q - Q = -Q^3 from the ground-state equation
  for (const auto& [m, f] : P.terms()) {
    if (m.degree() == 0) {
      E.add(-1.0, m, real_field(radial_field(pow_q(ground(), 3))));
      continue;
    }
    ComplexAngular lap(ops_->laplacian(f.re), ops_->laplacian(f.im));
    E.add(1.0, m, lap);
    E.add(-1.0, m, f);
  }

  // K P |P|^2 with the Taylor polynomial of k(lambda y + alpha)/k(alpha)
  ParamPoly K(n);
  K.add(1.0, Monomial{}, real_field(radial_field(Vec(n, 1.0))));
  for (int i = 0; i < 2; ++i) {
    K.add(1.0, l * al[i], real_field(linear_form(g, k_.H[i][0], k_.H[i][1])));
    K.add(0.5, l * l * al[i], real_field(quadratic_form(g, k_.D3[i][0][0], k_.D3[i][0][1], k_.D3[i][1][1])));
  }
  K.add(0.5, l * l, real_field(quadratic_form(g, k_.H[0][0], k_.H[0][1], k_.H[1][1])));
  K.add(1.0 / 6.0, l * l * l, real_field(cubic_form(g, k_.D3)));
  double q[2][2][2][2];
  k_.quartic(q);
  K.add(1.0 / 24.0, l * l * l * l, real_field(quartic_form(g, q)));
  ParamPoly KP = ParamPoly::mul(K, P, keep);
  ParamPoly PP = ParamPoly::mul(P, P.conj(), keep);
  E.axpy(1.0, ParamPoly::mul(KP, PP, keep));

  return E.filtered(keep).degree(order);
}

void ProfileExpansion::add_solved(const std::string& tag, const ParamPoly& src) {
  const int n = ops_->grid().n;
  for (const auto& [mono, f] : src.terms()) {
    for (int part = 0; part < 2; ++part) {
      AngularField s = part == 0 ? f.re : f.im;
      s.prune();
      if (s.is_zero()) continue;
      const Op op = part == 0 ? Op::Plus : Op::Minus;
      const std::string name = std::string(part == 0 ? "T" : "S") + tag;
      AngularField sol(n);
      for (const auto& h : s.modes()) {
        if (h.is_zero()) continue;
        HarmonicField hs;
        hs.m = h.m;
        if (!h.c.empty()) {
          solves_.push_back({name, mono, op, h.m, ops_->kernel_projection(op, h.m, h.c)});
          hs.c = ops_->solve(op, h.m, h.c);
        }
        if (!h.s.empty()) {
          solves_.push_back({name, mono, op, h.m, ops_->kernel_projection(op, h.m, h.s)});
          hs.s = ops_->solve(op, h.m, h.s);
        }
        sol += AngularField::mode(hs.m, hs.c, hs.s);
      }
      terms_.push_back({name, mono, part == 1, std::move(sol)});
    }
  }
}

ParamPoly ProfileExpansion::symbolic_residual(int order) const {
  ParamPoly r = known_residual(polynomial(), order);
  return order == 4 ? r.conformal(C0_) : r;
}

ProfileExpansion build_expansion(std::shared_ptr<const LinOps> ops, const InhomogeneityModel& k, double C0,
                                 bool require_definite) {
  if (!(C0 > 0)) throw ConfigError("C0 must be positive");
  ProfileConstants c = derive_constants(*ops, k, require_definite);
  ProfileExpansion e(ops, k, c, C0);
  // each order only sees the lower ones, so the linear operator of the new order is absent
  for (int order : {2, 3}) e.add_solved(std::to_string(order), e.known_residual(e.polynomial(), order));

  ParamPoly src4 = e.known_residual(e.polynomial(), 4).conformal(C0);
  const Monomial l4 = Monomial::of(kLambda, 4);
  auto it = src4.terms().find(l4);
  if (it != src4.terms().end()) e.f4_ = it->second.re;
  const double mass = e.ground().moments.massQ;
  for (int j = 0; j < 2; ++j) e.c_.beta4[j] = -2 * inner(e.f4_, partial_Q(*ops, j), ops->grid()) / mass;
  src4 = e.known_residual(e.polynomial(), 4).conformal(C0);
  e.add_solved("4", src4);
  return e;
}

// ---------------------------------------------------------------- evaluation

namespace {

struct Interp {
  int idx[8];
  double w[8];
  bool valid = false;
};

Interp interp_at(const RadialGrid& g, double r) {
  Interp s;
  if (r > g.r_max) return s;
  const double x = r / g.h();
  int i0 = static_cast<int>(std::floor(x)) - 3;
  if (i0 + 7 > g.n - 1) i0 = g.n - 8;
  for (int k = 0; k < 8; ++k) {
    double lk = 1.0;
    for (int j = 0; j < 8; ++j)
      if (j != k) lk *= (x - (i0 + j)) / double(k - j);
    s.idx[k] = i0 + k;
    s.w[k] = lk;
  }
  s.valid = true;
  return s;
}

double apply(const Interp& s, const Vec& v, int parity) {
  if (v.empty()) return 0.0;
  double out = 0;
  for (int k = 0; k < 8; ++k) {
    int i = s.idx[k];
    out += s.w[k] * (i < 0 ? parity * v[-i] : v[i]);
  }
  return out;
}

}  // namespace

ProfileField::ProfileField(const ProfileExpansion& e, const ParamPoint& P) : grid_(e.ops().grid()), P_(P) {
  init(e.sum(P), e.ops());
}

ProfileField::ProfileField(const ComplexAngular& f, const LinOps& ops, const ParamPoint& P)
    : grid_(ops.grid()), P_(P) {
  init(f, ops);
}

void ProfileField::init(const ComplexAngular& f, const LinOps& ops) {
  const int mm = std::max(f.re.max_mode(), f.im.max_mode());
  for (int m = 0; m <= mm; ++m) {
    const auto& hr = f.re.harmonic(m);
    const auto& hi = f.im.harmonic(m);
    if (hr.is_zero() && hi.is_zero()) continue;
    Mode md;
    md.m = m;
    md.rc = hr.c;
    md.rs = hr.s;
    md.ic = hi.c;
    md.is = hi.s;
    auto d = [&](const Vec& v) { return v.empty() ? Vec() : ops.derivative(m, v); };
    md.drc = d(md.rc);
    md.drs = d(md.rs);
    md.dic = d(md.ic);
    md.dis = d(md.is);
    modes_.push_back(std::move(md));
  }
}

void ProfileField::eval(double y0, double y1, bool with_grad, cplx& v, cplx& gr, cplx& gt) const {
  eval_rt(std::hypot(y0, y1), std::atan2(y1, y0), with_grad, v, gr, gt);
}

void ProfileField::eval_rt(double r, double t, bool with_grad, cplx& v, cplx& gr, cplx& gt) const {
  v = gr = gt = 0.0;
  Interp s = interp_at(grid_, r);
  if (!s.valid) return;
  for (const auto& md : modes_) {
    const int par = (md.m % 2 == 0) ? 1 : -1;
    const double cm = std::cos(md.m * t), sm = std::sin(md.m * t);
    const double rc = apply(s, md.rc, par), rs = apply(s, md.rs, par);
    const double ic = apply(s, md.ic, par), is = apply(s, md.is, par);
    v += cplx(rc * cm + rs * sm, ic * cm + is * sm);
    if (!with_grad) continue;
    const double drc = apply(s, md.drc, -par), drs = apply(s, md.drs, -par);
    const double dic = apply(s, md.dic, -par), dis = apply(s, md.dis, -par);
    gr += cplx(drc * cm + drs * sm, dic * cm + dis * sm);
    gt += double(md.m) * cplx(-rc * sm + rs * cm, -ic * sm + is * cm);
  }
}

cplx ProfileField::pp(double y0, double y1) const {
  cplx v, gr, gt;
  eval(y0, y1, false, v, gr, gt);
  return v;
}

cplx ProfileField::qp(double y0, double y1) const {
  const double ph = -P_.b * (y0 * y0 + y1 * y1) / 4 + P_.beta[0] * y0 + P_.beta[1] * y1;
  return pp(y0, y1) * std::polar(1.0, ph);
}

void ProfileField::qp_grad(double y0, double y1, cplx& v, cplx& gx, cplx& gy) const {
  cplx p, gr, gt;
  eval(y0, y1, true, p, gr, gt);
  double r = std::hypot(y0, y1);
  double c = 1, s = 0;
  if (r > 0) {
    c = y0 / r;
    s = y1 / r;
  }
  const double rr = std::max(r, 1e-300);
  cplx px = c * gr - s * gt / rr, py = s * gr + c * gt / rr;
  if (r == 0) {
    // only mode 1 has a gradient at the origin: radial slopes along the two axes
    cplx v0, gt0;
    eval_rt(0, M_PI / 2, true, v0, py, gt0);
    px = gr;
  }
  const double ph = -P_.b * (y0 * y0 + y1 * y1) / 4 + P_.beta[0] * y0 + P_.beta[1] * y1;
  const cplx e = std::polar(1.0, ph), I(0, 1);
  v = p * e;
  gx = (px + I * (P_.beta[0] - P_.b * y0 / 2) * p) * e;
  gy = (py + I * (P_.beta[1] - P_.b * y1 / 2) * p) * e;
}

namespace {

struct PolarTables {
  int nt;
  std::vector<double> theta;
  std::vector<std::vector<double>> cosm, sinm;

  // mode 1 is always tabulated, it gives the Cartesian coordinates
  PolarTables(int n_theta, int max_mode) : nt(n_theta), theta(n_theta) {
    max_mode = std::max(max_mode, 1);
    cosm.resize(max_mode + 1);
    sinm.resize(max_mode + 1);
    for (int j = 0; j < nt; ++j) theta[j] = 2 * M_PI * j / nt;
    for (int m = 0; m <= max_mode; ++m) {
      cosm[m].resize(nt);
      sinm[m].resize(nt);
      for (int j = 0; j < nt; ++j) {
        cosm[m][j] = std::cos(m * theta[j]);
        sinm[m][j] = std::sin(m * theta[j]);
      }
    }
  }
};

void add_polar(const AngularField& f, const PolarTables& tb, int n, std::vector<cplx>& out, cplx scale) {
  for (const auto& h : f.modes()) {
    if (h.is_zero()) continue;
    for (int i = 0; i < n; ++i) {
      const double c = h.c.empty() ? 0.0 : h.c[i], s = h.s.empty() ? 0.0 : h.s[i];
      if (c == 0.0 && s == 0.0) continue;
      cplx* row = &out[static_cast<size_t>(i) * tb.nt];
      for (int j = 0; j < tb.nt; ++j) row[j] += scale * (c * tb.cosm[h.m][j] + s * tb.sinm[h.m][j]);
    }
  }
}

std::vector<cplx> to_polar(const ComplexAngular& f, const PolarTables& tb, int n) {
  std::vector<cplx> out(static_cast<size_t>(n) * tb.nt, 0.0);
  add_polar(f.re, tb, n, out, 1.0);
  add_polar(f.im, tb, n, out, cplx(0, 1));
  return out;
}

int max_mode(const ComplexAngular& f) { return std::max({f.re.max_mode(), f.im.max_mode(), 0}); }

}  // namespace

std::vector<cplx> eval_polar(const ProfileExpansion& e, const ParamPoint& P, int n_theta) {
  const auto& g = e.ops().grid();
  ComplexAngular f = e.sum(P);
  PolarTables tb(n_theta, max_mode(f));
  std::vector<cplx> out = to_polar(f, tb, g.n);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < n_theta; ++j) {
      double r = g.r(i), y0 = r * tb.cosm[1][j], y1 = r * tb.sinm[1][j];
      out[static_cast<size_t>(i) * n_theta + j] *=
          std::polar(1.0, -P.b * r * r / 4 + P.beta[0] * y0 + P.beta[1] * y1);
    }
  return out;
}

PsiReport residual_Psi(const ProfileExpansion& e, const ParamPoint& P, const PsiOptions& opt) {
  const LinOps& ops = e.ops();
  const auto& g = ops.grid();
  const int n = g.n, nt = opt.n_theta;
  const cplx I(0, 1);

  ComplexAngular D = e.sum(P, -2);
  ComplexAngular Pv = D;
  Pv.re += radial_field(e.ground().Q.values);
  Vec lapq(n);
  for (int i = 0; i < n; ++i) lapq[i] = e.ground().Q[i] - std::pow(e.ground().Q[i], 3);
  ComplexAngular lap(ops.laplacian(D.re), ops.laplacian(D.im));
  lap.re += radial_field(lapq);

  ComplexAngular parts[kNumParams];
  int mm = std::max(max_mode(Pv), max_mode(lap));
  for (int p = 0; p < kNumParams; ++p) {
    parts[p] = e.sum(P, p);
    mm = std::max(mm, max_mode(parts[p]));
  }
  PolarTables tb(nt, std::max(mm, 1));
  auto pv = to_polar(Pv, tb, n), lv = to_polar(lap, tb, n);
  std::vector<std::vector<cplx>> dv(kNumParams);
  for (int p = 0; p < kNumParams; ++p) dv[p] = to_polar(parts[p], tb, n);

  const auto& k = e.model();
  const bool flat = k.homogeneous();
  const double ka = flat ? 1.0 : k.value(P.alpha[0], P.alpha[1]);
  Vec2 gk = flat ? Vec2{0, 0} : k.grad(P.alpha[0], P.alpha[1]);
  const Vec2 B = e.B(P);
  const double lam = P.lambda, b = P.b;
  const cplx drift = I * lam * (P.beta[0] * gk[0] + P.beta[1] * gk[1]) / ka;

  // weighted Psi, row-major (radius, angle)
  std::vector<cplx> F(static_cast<size_t>(n) * nt);
  for (int i = 0; i < n; ++i) {
    const double r = g.r(i), w = std::exp(opt.weight_rate * r);
    for (int j = 0; j < nt; ++j) {
      const size_t id = static_cast<size_t>(i) * nt + j;
      const double y0 = r * tb.cosm[1][j], y1 = r * tb.sinm[1][j];
      const double K = flat ? 1.0 : k.value(lam * y0 + P.alpha[0], lam * y1 + P.alpha[1]) / ka;
      const cplx p = pv[id];
      cplx E = -I * b * b * dv[kB][id] - I * lam * b * dv[kLambda][id];
      for (int q = 0; q < 2; ++q) {
        E += 2.0 * I * lam * P.beta[q] * dv[kAlpha1 + q][id];
        E += I * (-b * P.beta[q] + B[q]) * dv[kBeta1 + q][id];
      }
      E -= (B[0] * y0 + B[1] * y1 + drift) * p;
      E += lv[id] - p + K * p * std::norm(p);
      const double ph = -b * r * r / 4 + P.beta[0] * y0 + P.beta[1] * y1;
      F[id] = -E * std::polar(w, ph);
    }
  }

  // drop the Dirichlet node, where the elliptic equations are replaced by f = 0
  const Vec& W = radial_weights(g);
  const int last = n - 2;
  double l2 = 0;
  for (int i = 0; i <= last; ++i) {
    double s = 0;
    for (int j = 0; j < nt; ++j) s += std::norm(F[static_cast<size_t>(i) * nt + j]);
    l2 += W[i] * g.r(i) * s * (2 * M_PI / nt);
  }

  // gradient part through the angular harmonics of F
  // radial derivatives are taken only on rows whose stencil avoids the Dirichlet node
  const int grad_last = n - 1 - RadialStencil::kHalf - 1;
  double grad2 = 0;
  const int mtop = nt / 2 - 1;
  PolarTables tf(nt, mtop);
  for (int m = 0; m <= mtop; ++m) {
    Vec ac_re(n), ac_im(n), as_re(n), as_im(n);
    for (int i = 0; i < n; ++i) {
      cplx ac = 0, as = 0;
      const cplx* row = &F[static_cast<size_t>(i) * nt];
      for (int j = 0; j < nt; ++j) {
        ac += row[j] * tf.cosm[m][j];
        as += row[j] * tf.sinm[m][j];
      }
      const double norm = (m == 0 ? 1.0 : 2.0) / nt;
      ac_re[i] = norm * ac.real();
      ac_im[i] = norm * ac.imag();
      as_re[i] = norm * as.real();
      as_im[i] = norm * as.imag();
    }
    const double ang = m == 0 ? 2 * M_PI : M_PI;
    for (const Vec* v : {&ac_re, &ac_im, &as_re, &as_im}) {
      if (m == 0 && (v == &as_re || v == &as_im)) continue;
      Vec d = ops.derivative(m, *v);
      double s = 0;
      for (int i = 1; i <= grad_last; ++i) {
        const double r = g.r(i);
        s += W[i] * r * (d[i] * d[i] + m * m * (*v)[i] * (*v)[i] / (r * r));
      }
      grad2 += ang * s;
    }
  }
  PsiReport rep;
  rep.l2w = std::sqrt(l2);
  rep.h1w = std::sqrt(l2 + grad2);
  rep.weight_rate = opt.weight_rate;
  return rep;
}

InvariantReport profile_invariants(const ProfileExpansion& e, const ParamPoint& P, int n_theta) {
  const LinOps& ops = e.ops();
  const auto& g = ops.grid();
  const auto& mo = e.ground().moments;
  const int n = g.n;
  InvariantReport rep;

  AngularField q = radial_field(e.ground().Q.values);
  ComplexAngular D = e.sum(P, -2);
  ComplexAngular Pv = D;
  Pv.re += q;
  rep.mass_dev = 2 * inner(q, D.re, g) + inner(D.re, D.re, g) + inner(D.im, D.im, g);

  // energy on the polar grid, relative to the same discretization of E(Q) = 0
  auto energy = [&](const ComplexAngular& f, const ParamPoint& pt, bool inhom) {
    ComplexAngular dr;
    dr.re = AngularField(n);
    dr.im = AngularField(n);
    for (int part = 0; part < 2; ++part) {
      const AngularField& src = part == 0 ? f.re : f.im;
      AngularField& dst = part == 0 ? dr.re : dr.im;
      for (const auto& h : src.modes()) {
        if (h.is_zero()) continue;
        Vec c = h.c.empty() ? Vec() : ops.derivative(h.m, h.c);
        Vec s = h.s.empty() ? Vec() : ops.derivative(h.m, h.s);
        dst += AngularField::mode(h.m, c, s);
      }
    }
    PolarTables tb(n_theta, std::max(max_mode(f), 1));
    auto pv = to_polar(f, tb, n), rv = to_polar(dr, tb, n);
    // angular derivative: m (-c sin + s cos)
    std::vector<cplx> tv(static_cast<size_t>(n) * n_theta, 0.0);
    for (int part = 0; part < 2; ++part) {
      const AngularField& src = part == 0 ? f.re : f.im;
      const cplx sc = part == 0 ? cplx(1) : cplx(0, 1);
      for (const auto& h : src.modes()) {
        if (h.is_zero() || h.m == 0) continue;
        for (int i = 0; i < n; ++i) {
          const double c = h.c.empty() ? 0.0 : h.c[i], s = h.s.empty() ? 0.0 : h.s[i];
          for (int j = 0; j < n_theta; ++j)
            tv[static_cast<size_t>(i) * n_theta + j] +=
                sc * double(h.m) * (-c * tb.sinm[h.m][j] + s * tb.cosm[h.m][j]);
        }
      }
    }
    const auto& k = e.model();
    const double ka = k.value(pt.alpha[0], pt.alpha[1]);
    const Vec& W = radial_weights(g);
    const cplx I(0, 1);
    double kin = 0, pot = 0;
    for (int i = 0; i < n; ++i) {
      const double r = g.r(i);
      double sk = 0, sp = 0;
      for (int j = 0; j < n_theta; ++j) {
        const size_t id = static_cast<size_t>(i) * n_theta + j;
        const double c = tb.cosm[1][j], s = tb.sinm[1][j], y0 = r * c, y1 = r * s;
        const cplx p = pv[id];
        cplx px = c * rv[id], py = s * rv[id];
        if (r > 0) {
          px -= s * tv[id] / r;
          py += c * tv[id] / r;
        }
        px += I * (pt.beta[0] - pt.b * y0 / 2) * p;
        py += I * (pt.beta[1] - pt.b * y1 / 2) * p;
        sk += std::norm(px) + std::norm(py);
        const double K = inhom ? k.value(pt.lambda * y0 + pt.alpha[0], pt.lambda * y1 + pt.alpha[1]) / ka : 1.0;
        sp += K * std::norm(p) * std::norm(p);
      }
      kin += W[i] * r * sk;
      pot += W[i] * r * sp;
    }
    const double dtheta = 2 * M_PI / n_theta;
    return 0.5 * kin * dtheta - 0.25 * pot * dtheta;
  };
  ComplexAngular q0(q, AngularField(n));
  const double base = energy(q0, ParamPoint{}, false);
  rep.energy = energy(Pv, P, !e.model().homogeneous()) - base;

  const auto& H = e.model().H;
  const double hq4 = 0.5 * (H[0][0] + H[1][1]) * y2q4(e.ground());
  const double beta2 = P.beta[0] * P.beta[0] + P.beta[1] * P.beta[1];
  rep.energy_lead = P.b * P.b / 8 * mo.ymomQ + beta2 / 2 * mo.massQ - P.lambda * P.lambda / 8 * hq4;
  rep.energy_dev = rep.energy - rep.energy_lead;
  return rep;
}

ParamPoint conformal_ray(double lambda, double C0, const Vec2& kb, const Vec2& ka) {
  ParamPoint P;
  P.lambda = lambda;
  P.b = lambda / C0;
  for (int j = 0; j < 2; ++j) {
    P.beta[j] = kb[j] * lambda * lambda;
    P.alpha[j] = ka[j] * lambda * lambda;
  }
  return P;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int n = static_cast<int>(x.size());
  for (int i = 0; i < n; ++i) {
    double lx = std::log(x[i]), ly = std::log(std::fabs(y[i]));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace nlslab
