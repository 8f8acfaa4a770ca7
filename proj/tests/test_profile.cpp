#include <cmath>
#include <random>

#include "nlslab/errors.hpp"
#include "nlslab/profile.hpp"
#include "test_main.hpp"

using namespace nlslab;

namespace {

std::shared_ptr<const LinOps> ops() {
  static auto L = std::make_shared<const LinOps>(make_ground_state(RadialGrid(30.0, 8192), 1e-10));
  return L;
}

InhomogeneityModel generic_model() { return InhomogeneityModel({{{-1.0, 0.2}, {0.2, -0.6}}}, {0.3, -0.1, 0.2, 0.1}, 0.5); }

const ProfileExpansion& generic() {
  static ProfileExpansion e = build_expansion(ops(), generic_model(), 1.7);
  return e;
}

double rel(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

Mat2 random_negative_definite(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ev(0.1, 2.0), ang(0, M_PI);
  double l1 = -ev(rng), l2 = -ev(rng), t = ang(rng), c = std::cos(t), s = std::sin(t);
  return {{{l1 * c * c + l2 * s * s, (l1 - l2) * c * s}, {(l1 - l2) * c * s, l1 * s * s + l2 * c * c}}};
}

}  // namespace

TEST_CASE("canonical k satisfies the normalization at the origin") {
  auto k = generic_model();
  CHECK(k.violations().empty());
  CHECK(k.value(0, 0) == 1.0);
  CHECK(k.value(3.0, -1.0) >= k.k1);
  CHECK(k.value(3.0, -1.0) <= 1.0);
  // analytic gradient against central differences away from the origin
  const double h = 1e-6;
  for (auto [x, y] : std::vector<std::pair<double, double>>{{0.4, 0.3}, {1.3, -0.5}, {-0.2, 1.7}}) {
    Vec2 g = k.grad(x, y);
    CHECK(g[0] == doctest::Approx((k.value(x + h, y) - k.value(x - h, y)) / (2 * h)).epsilon(1e-7));
    CHECK(g[1] == doctest::Approx((k.value(x, y + h) - k.value(x, y - h)) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("inadmissible models are rejected with every violation listed") {
  InhomogeneityModel k({{{1.0, 0.0}, {0.0, -1.0}}}, {0, 0, 0, 0}, 1.5);
  auto v = k.violations();
  CHECK(v.size() == 2);
  CHECK_THROWS_AS(k.validate(), InvalidModel);
  InhomogeneityModel big({{{-0.1, 0.0}, {0.0, -0.1}}}, {5, 0, 0, 0}, 0.5);
  CHECK_THROWS_AS(big.validate(), InvalidModel);
  InhomogeneityModel flat({{{0.0, 0.0}, {0.0, 0.0}}}, {0, 0, 0, 0}, 0.5);
  CHECK_THROWS_AS(derive_constants(*ops(), flat), InvalidModel);
  CHECK_NOTHROW(derive_constants(*ops(), flat, false));
}

TEST_CASE("c0 for H = -I agrees with direct quadrature of the solvability condition") {
  InhomogeneityModel k({{{-1.0, 0.0}, {0.0, -1.0}}}, {0, 0, 0, 0}, 0.5);
  auto c = derive_constants(*ops(), k);
  const auto& m = ops()->ground().moments;
  CHECK(c.c0[0][0] == doctest::Approx(-m.quarticQ / (2 * m.massQ)).epsilon(1e-14));
  CHECK(c.c0[1][0] == 0.0);
  // (H(alpha,y) Q^3, d1 Q) = c0(alpha)_1 (y1 Q, d1 Q) for alpha = e1
  const auto& g = ops()->grid();
  Vec q3(g.n);
  for (int i = 0; i < g.n; ++i) q3[i] = std::pow(ops()->ground().Q[i], 3);
  AngularField d1 = AngularField::mode(1, ops()->ground().dQ.values, {});
  AngularField lhs = linear_form(g, -1.0, 0.0) * AngularField::radial(q3);
  AngularField yq = linear_form(g, 1.0, 0.0) * AngularField::radial(ops()->ground().Q.values);
  double direct = inner(lhs, d1, g) / inner(yq, d1, g);
  CHECK(rel(c.c0[0][0], direct) < 1e-8);
  CHECK(c.beta3[0] == 0.0);
  CHECK(c.beta3[1] == 0.0);
}

TEST_CASE("a1 closed form equals the projection formula for random Hessians") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 3; ++trial) {
    InhomogeneityModel k(random_negative_definite(rng), {0, 0, 0, 0}, 0.5);
    auto c = derive_constants(*ops(), k);
    INFO("H = " << k.H[0][0] << " " << k.H[0][1] << " " << k.H[1][1]);
    CHECK(c.a1 > 0);
    CHECK(rel(c.a1_projection, c.a1) < 1e-6);
  }
}

TEST_CASE("quadratic forms d0 and d1 are nonpositive") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  auto c = generic().constants();
  for (int i = 0; i < 50; ++i) {
    double a[2] = {nd(rng), nd(rng)};
    double d0 = 0, d1 = 0;
    for (int j = 0; j < 2; ++j)
      for (int l = 0; l < 2; ++l) {
        d0 += c.d0_form[j][l] * a[j] * a[l];
        d1 += c.d1_form[j][l] * a[j] * a[l];
      }
    CHECK(d0 <= 0);
    CHECK(d1 <= 0);
  }
}

TEST_CASE("every elliptic solve of the construction was solvable") {
  const auto& e = generic();
  bool saw_s3_radial = false;
  for (const auto& s : e.solves()) {
    INFO(s.name << " " << s.mono.str() << " mode " << s.mode);
    CHECK(s.projection < 1e-8);
    if (s.name == "S3" && s.mode == 0) saw_s3_radial = true;
  }
  CHECK(saw_s3_radial);
}

TEST_CASE("monomial degrees match the term orders") {
  for (const auto& t : generic().terms()) {
    INFO(t.name << " " << t.mono.str());
    CHECK(t.mono.degree() == t.name[1] - '0');
    CHECK(kept_by_construction(t.mono));
    CHECK((t.name[0] == 'S') == t.imaginary);
  }
}

TEST_CASE("the truncated profile equation holds order by order") {
  const auto& e = generic();
  for (int order = 2; order <= 4; ++order) {
    double worst = 0;
    const ParamPoly res = e.symbolic_residual(order);
    for (const auto& [m, f] : res.terms())
      worst = std::max({worst, f.re.max_abs(), f.im.max_abs()});
    INFO("order " << order);
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("T2 and T3 are orthogonal to Q") {
  const auto& e = generic();
  const auto& g = e.ops().grid();
  AngularField q = AngularField::radial(e.ground().Q.values);
  for (const auto& t : e.terms()) {
    if (t.name != "T2" && t.name != "T3") continue;
    INFO(t.name << " " << t.mono.str());
    CHECK(std::fabs(inner(t.field, q, g)) / (norm(t.field, g) * norm(q, g)) < 1e-7);
  }
}

TEST_CASE("the order-4 source is even, so beta4 vanishes") {
  const auto& e = generic();
  const double scale = e.f4().max_abs();
  REQUIRE(scale > 0);
  for (int m = 1; m <= e.f4().max_mode(); m += 2) {
    AngularField odd = AngularField::mode(m, e.f4().harmonic(m).c, e.f4().harmonic(m).s);
    INFO("mode " << m << " " << odd.max_abs());
    CHECK(odd.max_abs() < 1e-12 * scale);
  }
  CHECK(std::fabs(e.constants().beta4[0]) < 1e-12);
  CHECK(std::fabs(e.constants().beta4[1]) < 1e-12);
}

TEST_CASE("homogeneous model gives no corrections") {
  InhomogeneityModel flat({{{0.0, 0.0}, {0.0, 0.0}}}, {0, 0, 0, 0}, 0.5);
  auto e = build_expansion(ops(), flat, 1.0, false);
  CHECK(e.terms().empty());
}

TEST_CASE("profile at P = 0 is Q, on both output grids") {
  const auto& e = generic();
  ParamPoint zero;
  auto polar = eval_polar(e, zero, 16);
  const auto& Q = e.ground().Q;
  for (int i : {0, 10, 500, 4000})
    for (int j = 0; j < 16; ++j) CHECK(polar[i * 16 + j] == std::complex<double>(Q[i], 0.0));
  ProfileField f(e, zero);
  CHECK(std::abs(f.qp(0.7, -1.1) - Q.at(std::hypot(0.7, 1.1))) < 1e-14);
  CHECK(residual_Psi(e, zero).l2w < 1e-12);
}

TEST_CASE("Cartesian evaluation matches the polar samples") {
  const auto& e = generic();
  ParamPoint P = conformal_ray(0.08, e.C0(), {0.3, -0.2}, {0.5, 0.4});
  P.alpha = {0.02, -0.01};
  auto polar = eval_polar(e, P, 8);
  ProfileField f(e, P);
  const auto& g = e.ops().grid();
  for (int i : {3, 200, 900})
    for (int j = 0; j < 8; ++j) {
      double t = 2 * M_PI * j / 8;
      CHECK(std::abs(f.qp(g.r(i) * std::cos(t), g.r(i) * std::sin(t)) - polar[i * 8 + j]) < 1e-12);
    }
  // gradient against central differences
  std::complex<double> v, gx, gy;
  f.qp_grad(0.6, -0.9, v, gx, gy);
  const double h = 1e-5;
  CHECK(std::abs(gx - (f.qp(0.6 + h, -0.9) - f.qp(0.6 - h, -0.9)) / (2 * h)) < 1e-8);
  CHECK(std::abs(gy - (f.qp(0.6, -0.9 + h) - f.qp(0.6, -0.9 - h)) / (2 * h)) < 1e-8);
  // the origin, where mode 1 carries the whole gradient
  f.qp_grad(0, 0, v, gx, gy);
  auto d4 = [&](double ux, double uy) {
    const double k = 1e-3;
    return (8.0 * (f.qp(k * ux, k * uy) - f.qp(-k * ux, -k * uy)) - (f.qp(2 * k * ux, 2 * k * uy) - f.qp(-2 * k * ux, -2 * k * uy))) /
           (12 * k);
  };
  CHECK(std::abs(gx - d4(1, 0)) < 1e-8);
  CHECK(std::abs(gy - d4(0, 1)) < 1e-8);
  CHECK(std::abs(gy) > 1e-4);
}

TEST_CASE("rotating H by 90 degrees rotates the profile") {
  InhomogeneityModel k1({{{-1.0, 0.0}, {0.0, -0.4}}}, {0, 0, 0, 0}, 0.5);
  InhomogeneityModel k2({{{-0.4, 0.0}, {0.0, -1.0}}}, {0, 0, 0, 0}, 0.5);
  auto e1 = build_expansion(ops(), k1, 1.3), e2 = build_expansion(ops(), k2, 1.3);
  ParamPoint P1;
  P1.b = 0.05;
  P1.lambda = 0.07;
  P1.beta = {0.01, -0.02};
  P1.alpha = {0.03, 0.015};
  ParamPoint P2 = P1;  // R (x, y) = (-y, x)
  P2.beta = {-P1.beta[1], P1.beta[0]};
  P2.alpha = {-P1.alpha[1], P1.alpha[0]};
  ProfileField f1(e1, P1), f2(e2, P2);
  for (auto [x, y] : std::vector<std::pair<double, double>>{{0.3, 0.1}, {-1.2, 0.8}, {2.0, -2.5}})
    CHECK(std::abs(f1.qp(x, y) - f2.qp(-y, x)) < 1e-12);
}

TEST_CASE("residual scales like the fifth power on the conformal ray") {
  const auto& e = generic();
  std::vector<double> ls, psi, mass, energy;
  for (int i = 0; i <= 6; ++i) {
    double l = 0.01 * std::pow(10.0, i / 6.0);
    ParamPoint P = conformal_ray(l, e.C0(), {0.3, -0.2}, {0.5, 0.4});
    ls.push_back(l);
    psi.push_back(residual_Psi(e, P).l2w);
    auto inv = profile_invariants(e, P);
    mass.push_back(inv.mass_dev);
    energy.push_back(inv.energy_dev);
  }
  double s = loglog_slope(ls, psi);
  CHECK(s >= 4.5);
  CHECK(s <= 5.5);
  CHECK(loglog_slope(ls, mass) == doctest::Approx(4.0).epsilon(0.125));
  CHECK(loglog_slope(ls, energy) == doctest::Approx(4.0).epsilon(0.125));
}

TEST_CASE("off the ray the residual is only third order") {
  const auto& e = generic();
  std::vector<double> ls, psi;
  // alpha-alpha terms dominate only for small lambda
  for (int i = 0; i <= 4; ++i) {
    double l = 0.001 * std::pow(5.0, i / 4.0);
    ParamPoint P = conformal_ray(l, e.C0(), {0, 0}, {0, 0});
    P.alpha = {l, 0.0};
    ls.push_back(l);
    psi.push_back(residual_Psi(e, P).l2w);
  }
  CHECK(loglog_slope(ls, psi) == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("residual norm is stable under grid refinement") {
  auto coarse = std::make_shared<const LinOps>(make_ground_state(RadialGrid(30.0, 4096), 1e-10));
  auto ec = build_expansion(coarse, generic_model(), 1.7);
  ParamPoint P = conformal_ray(0.05, 1.7, {0.3, -0.2}, {0.5, 0.4});
  auto a = residual_Psi(ec, P), b = residual_Psi(generic(), P);
  CHECK(rel(a.l2w, b.l2w) < 0.05);
  CHECK(rel(a.h1w, b.h1w) < 0.05);
}

TEST_CASE("conformal constant from the energy") {
  const auto& gs = ops()->ground();
  auto k = generic_model();
  double E1 = energy_for_C0(gs, 1.0, k);
  CHECK(compute_C0(gs, E1, k) == doctest::Approx(1.0).epsilon(1e-14));
  // halving the shifted energy multiplies C0 by sqrt(2)
  double shift = E1 - gs.moments.ymomQ / 8;
  CHECK(compute_C0(gs, gs.moments.ymomQ / 16 + shift, k) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(compute_C0(gs, shift - 0.1, k), EnergyConditionViolated);
  CHECK_THROWS_AS(compute_C0(gs, shift - 1e-12, k), EnergyConditionViolated);
}

TEST_CASE("monomial algebra") {
  Monomial m = Monomial::of(kB, 2) * Monomial::of(kLambda);
  CHECK(m.degree() == 3);
  CHECK(m.str() == "b^2*l");
  ParamPoint P;
  P.b = 0.5;
  P.lambda = 3;
  CHECK(m.eval(P) == 0.75);
  const int n = 8;
  ComplexAngular one(AngularField::radial(Vec(n, 1.0)), AngularField(n));
  ParamPoly p = ParamPoly::constant(one, m);
  auto d = p.derivative(kB);
  REQUIRE(d.terms().size() == 1);
  CHECK(d.terms().begin()->first == Monomial::of(kB) * Monomial::of(kLambda));
  CHECK(d.terms().begin()->second.re.value(0, 0.0) == 2.0);
  auto c = p.conformal(2.0);
  CHECK(c.terms().begin()->first == Monomial::of(kLambda, 3));
  CHECK(c.terms().begin()->second.re.value(0, 0.0) == 0.25);
  CHECK(!kept_by_construction(Monomial::of(kLambda, 3) * Monomial::of(kAlpha1)));
  CHECK(kept_by_construction(Monomial::of(kLambda, 2) * Monomial::of(kAlpha1)));
  CHECK(!kept_by_construction(Monomial::of(kLambda) * Monomial::of(kAlpha1, 2)));
}
