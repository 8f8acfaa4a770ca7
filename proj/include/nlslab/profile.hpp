#pragma once

#include <array>
#include <complex>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nlslab/harmonic.hpp"
#include "nlslab/kmodel.hpp"
#include "nlslab/linop.hpp"

namespace nlslab {

using cplx = std::complex<double>;

struct ParamPoint {
  double b = 0, lambda = 0;
  Vec2 beta{0, 0}, alpha{0, 0};

  double norm() const;  // max-norm over all six entries
  double get(int p) const;
  void set(int p, double v);
};

// Parameter slots of a monomial.
enum Param : int { kB = 0, kLambda = 1, kBeta1 = 2, kBeta2 = 3, kAlpha1 = 4, kAlpha2 = 5 };
constexpr int kNumParams = 6;

struct Monomial {
  std::array<int, kNumParams> e{};

  static Monomial of(int p, int power = 1);
  int degree() const;
  int alpha_beta_degree() const { return e[kBeta1] + e[kBeta2] + e[kAlpha1] + e[kAlpha2]; }
  double eval(const ParamPoint& P) const;
  Monomial operator*(const Monomial& o) const;
  auto operator<=>(const Monomial&) const = default;
  std::string str() const;
};

struct ComplexAngular {
  AngularField re, im;

  ComplexAngular() = default;
  ComplexAngular(AngularField r, AngularField i) : re(std::move(r)), im(std::move(i)) {}
  bool is_zero() const { return re.is_zero() && im.is_zero(); }
  ComplexAngular& axpy(cplx a, const ComplexAngular& o);
  ComplexAngular conj() const;
  cplx value(int i, double theta) const { return {re.value(i, theta), im.value(i, theta)}; }
};

ComplexAngular operator*(const ComplexAngular& a, const ComplexAngular& b);

// Polynomial in (b, lambda, beta, alpha) with complex angular-field coefficients.
class ParamPoly {
 public:
  using Filter = bool (*)(const Monomial&);

  explicit ParamPoly(int n = 0) : n_(n) {}
  static ParamPoly constant(const ComplexAngular& f, const Monomial& m = {});

  int n() const { return n_; }
  const std::map<Monomial, ComplexAngular>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  ParamPoly& add(cplx a, const Monomial& m, const ComplexAngular& f);
  ParamPoly& axpy(cplx a, const ParamPoly& o);
  ParamPoly times(cplx a, const Monomial& m) const;
  ParamPoly derivative(int p) const;
  ParamPoly conj() const;
  ParamPoly filtered(Filter keep) const;
  // terms of total degree d only
  ParamPoly degree(int d) const;
  // b -> lambda / C0
  ParamPoly conformal(double C0) const;
  ComplexAngular eval(const ParamPoint& P) const;

  // product truncated with keep()
  static ParamPoly mul(const ParamPoly& a, const ParamPoly& b, Filter keep);

 private:
  int n_;
  std::map<Monomial, ComplexAngular> terms_;
};

// Truncation rule of the construction: everything up to degree 2, at degree 3
// at most one alpha/beta factor, at degree 4 no alpha/beta factor.
bool kept_by_construction(const Monomial& m);

struct ProfileConstants {
  Mat2 c0{};     // c0(alpha)_j = sum_i c0[j][i] alpha_i
  Vec2 beta3{}, beta4{};
  Mat2 d0_form{}, d1_form{};
  double a1 = 0;             // closed form from the trace of H
  double a1_projection = 0;  // projection formula averaged over the two axes
  Vec2 a1_axis{};            // projection formula per axis
  double C0 = 0;             // 0 when no energy was supplied
};

ProfileConstants derive_constants(const LinOps& ops, const InhomogeneityModel& k, bool require_definite = true);
std::string constants_json(const ProfileConstants& c);

// Theoretical conformal constant ||yQ|| / sqrt(8 (E0 + int H(y,y) Q^4 / 8)).
double compute_C0(const GroundState& gs, double E0, const InhomogeneityModel& k);
// Energy giving a prescribed C0.
double energy_for_C0(const GroundState& gs, double C0, const InhomogeneityModel& k);

struct ProfileTerm {
  std::string name;  // T2, S3, ...
  Monomial mono;
  bool imaginary = false;
  AngularField field;
};

struct SolveRecord {
  std::string name;
  Monomial mono;
  Op op;
  int mode;
  double projection;  // relative kernel projection of the source before the solve
};

class ProfileExpansion {
 public:
  ProfileExpansion(std::shared_ptr<const LinOps> ops, InhomogeneityModel k, ProfileConstants c, double C0);

  const LinOps& ops() const { return *ops_; }
  std::shared_ptr<const LinOps> ops_ptr() const { return ops_; }
  const InhomogeneityModel& model() const { return k_; }
  const ProfileConstants& constants() const { return c_; }
  double C0() const { return C0_; }
  const std::vector<ProfileTerm>& terms() const { return terms_; }
  const std::vector<SolveRecord>& solves() const { return solves_; }
  const GroundState& ground() const { return ops_->ground(); }

  // P_P = Q + sum of terms, as a polynomial (Q included as the constant term)
  ParamPoly polynomial(int max_order = 4) const;
  // P_P or one of its parameter derivatives (deriv = Param) evaluated at P;
  // deriv = -2 gives P_P - Q without cancellation
  ComplexAngular sum(const ParamPoint& P, int deriv = -1) const;
  // B = lambda c0(alpha) + beta3 lambda^3 + beta4 lambda^4
  Vec2 B(const ParamPoint& P) const;

  // Real order-4 source before the beta4 adjustment.
  const AngularField& f4() const { return f4_; }
  // Symbolic residual of the truncated profile equation at the given order,
  // after the construction's truncation rule (should vanish to solver level).
  ParamPoly symbolic_residual(int order) const;

 private:
  friend ProfileExpansion build_expansion(std::shared_ptr<const LinOps>, const InhomogeneityModel&, double,
                                          bool);
  ParamPoly known_residual(const ParamPoly& P, int order) const;
  void add_solved(const std::string& name, const ParamPoly& src);

  std::shared_ptr<const LinOps> ops_;
  InhomogeneityModel k_;
  ProfileConstants c_;
  double C0_;
  std::vector<ProfileTerm> terms_;
  std::vector<SolveRecord> solves_;
  AngularField f4_;
};

ProfileExpansion build_expansion(std::shared_ptr<const LinOps> ops, const InhomogeneityModel& k, double C0,
                                 bool require_definite = true);

// P_P (or Q_P with the phase exp(-i b |y|^2/4 + i beta.y)) at arbitrary points.
class ProfileField {
 public:
  ProfileField(const ProfileExpansion& e, const ParamPoint& P);
  explicit ProfileField(const ComplexAngular& f, const LinOps& ops, const ParamPoint& P);

  cplx pp(double y0, double y1) const;
  cplx qp(double y0, double y1) const;
  // value and Cartesian gradient of Q_P
  void qp_grad(double y0, double y1, cplx& v, cplx& gx, cplx& gy) const;
  double r_max() const { return grid_.r_max; }

 private:
  struct Mode {
    int m;
    Vec rc, rs, ic, is;      // real/imag cos/sin profiles
    Vec drc, drs, dic, dis;  // radial derivatives
  };
  void init(const ComplexAngular& f, const LinOps& ops);
  void eval(double y0, double y1, bool with_grad, cplx& v, cplx& gr, cplx& gt) const;
  void eval_rt(double r, double theta, bool with_grad, cplx& v, cplx& gr, cplx& gt) const;

  RadialGrid grid_;
  ParamPoint P_;
  std::vector<Mode> modes_;
};

// Samples of Q_P on the polar grid (radial node i, angle 2 pi j / n_theta), row-major by i.
std::vector<cplx> eval_polar(const ProfileExpansion& e, const ParamPoint& P, int n_theta);

struct PsiReport {
  double l2w = 0;  // || e^{c|y|} Psi ||_{L2}
  double h1w = 0;  // || e^{c|y|} Psi ||_{H1}
  double weight_rate = 0;
};

struct PsiOptions {
  int n_theta = 64;
  double weight_rate = 0.5;
};

PsiReport residual_Psi(const ProfileExpansion& e, const ParamPoint& P, const PsiOptions& opt = {});

struct InvariantReport {
  double mass_dev = 0;    // int |Q_P|^2 - int Q^2
  double energy = 0;      // E~(Q_P)
  double energy_lead = 0; // b^2/8 |yQ|^2 + |beta|^2/2 int Q^2 - lambda^2/8 int H(y,y) Q^4
  double energy_dev = 0;
};

InvariantReport profile_invariants(const ProfileExpansion& e, const ParamPoint& P, int n_theta = 64);

// Point on the conformal ray: b = lambda/C0, beta = kb lambda^2, alpha = ka lambda^2.
ParamPoint conformal_ray(double lambda, double C0, const Vec2& kappa_beta, const Vec2& kappa_alpha);

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace nlslab
