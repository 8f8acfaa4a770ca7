#include <cmath>
#include <random>

#include "nlslab/errors.hpp"
#include "nlslab/modeqs.hpp"
#include "test_main.hpp"

using namespace nlslab;

namespace {

const ProfileConstants& generic_constants() {
  static ProfileConstants c = [] {
    LinOps ops(make_ground_state(RadialGrid(30.0, 8192), 1e-10));
    return derive_constants(ops, InhomogeneityModel({{{-1.0, 0.2}, {0.2, -0.6}}}, {0.3, -0.1, 0.2, 0.1}, 0.5));
  }();
  return c;
}

std::vector<double> logspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a * std::pow(b / a, double(i) / (n - 1));
  return v;
}

}  // namespace

TEST_CASE("homogeneous law reproduces b = 1/s") {
  ModState x0;
  x0.b = 1;
  x0.lambda = 0.7;
  x0.s = 1;
  ModOptions opt;
  opt.output = logspace(1, 1e3, 40);
  auto tr = integrate(x0, ModLaw::homogeneous(), 1e3, opt);
  REQUIRE(tr.points.size() == 40);
  CHECK(tr.stop_reason == "end");
  double worst = 0;
  for (const auto& p : tr.points) {
    ModState ex = homogeneous_exact(x0, p.s);
    CHECK(ex.b == doctest::Approx(1 / p.s).epsilon(1e-15));
    worst = std::max({worst, std::fabs(p.b - ex.b) / ex.b, std::fabs(p.lambda - ex.lambda) / ex.lambda,
                      std::fabs(p.t - ex.t) / std::fabs(ex.t - x0.t + 1e-300), std::fabs(p.gamma - ex.gamma) / ex.gamma});
    // exact integrals of the homogeneous law
    CHECK(p.b * p.s == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.lambda * p.s == doctest::Approx(0.7).epsilon(1e-9));
  }
  CHECK(worst <= 10 * opt.rtol);
}

TEST_CASE("integration is reversible") {
  const auto& c = generic_constants();
  ModLaw law = ModLaw::from(c);
  // alpha of size lambda^2; larger offsets excite the backward Riccati pole of b_s = -b^2 + d0
  ModState x0 = conformal_data(-1.7 * 1.7 / 1e3, 1.7);
  x0.alpha = {1e-6, -2e-6};
  auto back = integrate(x0, law, 10.0);
  ModState mid = back.points.back();
  CHECK(mid.s == 10.0);
  auto fwd = integrate(mid, law, 1e3);
  ModState end = fwd.points.back();
  const double tol = 100 * ModOptions{}.rtol;
  CHECK(std::fabs(end.b - x0.b) <= tol * std::fabs(x0.b));
  CHECK(std::fabs(end.lambda - x0.lambda) <= tol * x0.lambda);
  CHECK(std::fabs(end.t - x0.t) <= tol * std::fabs(x0.t));
  for (int j = 0; j < 2; ++j) {
    CHECK(std::fabs(end.alpha[j] - x0.alpha[j]) <= tol * 1e-3);
    CHECK(std::fabs(end.beta[j] - x0.beta[j]) <= 1e-12);
  }
}

TEST_CASE("the s and t clocks agree") {
  ModLaw law = ModLaw::from(generic_constants());
  ModState x0 = conformal_data(-0.3, 1.7);
  auto in_s = integrate(x0, law, 200.0);
  ModState end = in_s.points.back();
  ModOptions ot;
  ot.clock = Clock::T;
  auto in_t = integrate(x0, law, end.t, ot);
  ModState e2 = in_t.points.back();
  CHECK(std::fabs(e2.s - end.s) <= 100 * ot.rtol * end.s);
  CHECK(std::fabs(e2.lambda - end.lambda) <= 100 * ot.rtol * end.lambda);
  // backward in t as well; the error in s scales with the span covered
  auto back = integrate(e2, law, x0.t, ot);
  CHECK(std::fabs(back.points.back().s - x0.s) <= 100 * ot.rtol * end.s);
}

TEST_CASE("conformal data stays on the conformal law") {
  const auto& c = generic_constants();
  const double C0 = 1.7;
  ModLaw law = ModLaw::from(c);
  // data at t1 = -C0^2/1e3 propagated backwards over s in [10, 1e3]
  ModState x1 = conformal_data(-C0 * C0 / 1e3, C0);
  CHECK(x1.s == doctest::Approx(1e3).epsilon(1e-15));
  ModOptions opt;
  opt.output = logspace(10, 1e3, 60);
  auto tr = integrate(x1, law, 10.0, opt);
  REQUIRE(tr.points.size() == 60);
  double worst = 0, worst_ls = 0;
  for (const auto& p : tr.points) {
    worst = std::max(worst, std::fabs(p.b / p.lambda - 1 / C0) / (p.lambda * p.lambda));
    worst_ls = std::max(worst_ls, std::fabs(p.lambda * p.s - C0) / C0);
  }
  MESSAGE("max |b/lambda - 1/C0| / lambda^2 = " << worst);
  CHECK(worst <= 5.0);
  CHECK(worst_ls <= 0.01);
  CHECK(std::hypot(tr.points.back().alpha[0], tr.points.back().alpha[1]) > 0);

  // forward from s = 10: lambda s approaches C0
  ModState x0 = conformal_data(-C0 * C0 / 10.0, C0);
  auto fwd = integrate(x0, law, 1e3);
  const auto& last = fwd.points.back();
  CHECK(std::fabs(last.lambda * last.s - C0) <= 0.01 * C0);
}

TEST_CASE("lambda_min stops the integration") {
  ModState x0;
  x0.b = 1;
  x0.lambda = 0.5;
  x0.s = 1;
  ModOptions opt;
  opt.lambda_min = 1e-3;
  auto tr = integrate(x0, ModLaw::homogeneous(), 1e9, opt);
  CHECK(tr.stop_reason == "lambda_min");
  CHECK(tr.points.back().lambda == doctest::Approx(1e-3).epsilon(1e-8));
  CHECK(tr.points.back().s == doctest::Approx(500.0).epsilon(1e-6));
}

TEST_CASE("invalid modulation data") {
  ModState x0;
  x0.lambda = 0;
  CHECK_THROWS(integrate(x0, ModLaw::homogeneous(), 1.0));
  CHECK_THROWS(conformal_data(0.1, 1.0));
}

TEST_CASE("d0 is nonpositive and the alpha-beta reduction has positive varsigma") {
  const auto& c = generic_constants();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  ModLaw law = ModLaw::from(c);
  for (int i = 0; i < 100; ++i) {
    ModState x;
    x.alpha = {nd(rng), nd(rng)};
    x.lambda = 0.1;
    CHECK(modulation_rhs(x, law).b <= 0);
  }
  Vec2 vs = alpha_beta_varsigma(c.c0, 1.7);
  CHECK(vs[0] > 0);
  CHECK(vs[1] > 0);
  // trace and determinant of c0 are recovered from the two eigenvalues
  const double C2 = 1.7 * 1.7;
  CHECK(-(vs[0] + vs[1]) / C2 == doctest::Approx(c.c0[0][0] + c.c0[1][1]).epsilon(1e-12));
  CHECK(vs[0] * vs[1] / (C2 * C2) ==
        doctest::Approx(c.c0[0][0] * c.c0[1][1] - c.c0[0][1] * c.c0[1][0]).epsilon(1e-10));
}

TEST_CASE("closed-form basis: kinds, Wronskian and homogeneous system") {
  CHECK(appendixB_basis(0.05).kind == BasisKind::Power);
  CHECK(appendixB_basis(0.125).kind == BasisKind::Critical);
  CHECK(appendixB_basis(0.25).kind == BasisKind::Oscillatory);
  CHECK_THROWS(appendixB_basis(0.0));
  CHECK_THROWS(appendixB_basis(-1.0));

  auto crit = appendixB_basis(0.125);
  double zp, dzp, zm, dzm;
  crit.z(std::exp(1.0), zp, dzp, zm, dzm);
  CHECK(zp == doctest::Approx(std::exp(0.5)).epsilon(1e-15));
  CHECK(zm == doctest::Approx(std::exp(0.5)).epsilon(1e-15));
  CHECK(crit.W == 0.5);
  // oscillatory case: determinant of (Z+, Z-) is -sqrt(8 vs - 1)/4
  CHECK(appendixB_basis(0.25).W == doctest::Approx(-0.25).epsilon(1e-15));

  for (double vs : {0.05, 0.125, 0.25, 0.5, 2.0}) {
    auto sys = appendixB_basis(vs);
    for (double s : {1.0, 2.5, 17.0, 400.0}) {
      sys.z(s, zp, dzp, zm, dzm);
      INFO("varsigma " << vs << " s " << s);
      CHECK(-0.5 * zp * dzm + 0.5 * dzp * zm == doctest::Approx(sys.W).epsilon(1e-12));
      // z'' = -2 vs z / s^2 by a fourth-order difference of z'
      const double h = 1e-3 * s;
      double d[4][4];
      for (int k = 0; k < 4; ++k) {
        const double off[4] = {-2, -1, 1, 2};
        sys.z(s + off[k] * h, d[k][0], d[k][1], d[k][2], d[k][3]);
      }
      double ddp = (d[0][1] - 8 * d[1][1] + 8 * d[2][1] - d[3][1]) / (12 * h);
      double ddm = (d[0][3] - 8 * d[1][3] + 8 * d[2][3] - d[3][3]) / (12 * h);
      const double scale = std::max(std::fabs(zp), std::fabs(zm)) / (s * s);
      CHECK(std::fabs(ddp + 2 * vs * zp / (s * s)) <= 1e-10 * scale);
      CHECK(std::fabs(ddm + 2 * vs * zm / (s * s)) <= 1e-10 * scale);
    }
  }
}

TEST_CASE("closed-form basis agrees with direct integration") {
  auto zero = [](double) { return Vec2{0, 0}; };
  auto at = logspace(1, 1e3, 30);
  for (double vs : {0.05, 0.125, 0.5}) {
    auto sys = appendixB_basis(vs);
    for (int which = 0; which < 2; ++which) {
      auto Zc = [&](double s) { return which ? sys.Zminus(s) : sys.Zplus(s); };
      auto num = appendixB_integrate(sys, zero, 1.0, Zc(1.0), at);
      double worst = 0;
      for (size_t i = 0; i < at.size(); ++i) {
        Vec2 ex = Zc(at[i]);
        double scale = std::sqrt(at[i]) * (1 + std::log(at[i]));
        worst = std::max({worst, std::fabs(num[i][0] - ex[0]) / scale, at[i] * std::fabs(num[i][1] - ex[1]) / scale});
      }
      INFO("varsigma " << vs << " basis " << which);
      CHECK(worst <= 1e-8);
    }
  }
}

TEST_CASE("variation of constants matches adaptive integration") {
  auto sys = appendixB_basis(0.25);
  auto F = [](double s) { return Vec2{1 / (s * s * s), 0.0}; };
  AppendixBOptions opt;
  opt.s_min = 2;
  opt.s_max = 1e5;
  opt.samples = 101;
  auto rep = appendixB_solve(sys, F, opt);
  const auto& last = rep.samples.back();
  std::vector<double> at;
  std::vector<Vec2> ref;
  for (auto it = rep.samples.rbegin(); it != rep.samples.rend(); ++it)
    if (it->s <= 1e3) {
      at.push_back(it->s);
      ref.push_back(it->Z);
    }
  auto num = appendixB_integrate(sys, F, last.s, last.Z, at);
  double scale = 0, worst = 0;
  for (size_t i = 0; i < at.size(); ++i) scale = std::max(scale, std::fabs(ref[i][0]) + at[i] * std::fabs(ref[i][1]));
  for (size_t i = 0; i < at.size(); ++i)
    worst = std::max(worst, std::fabs(num[i][0] - ref[i][0]) + at[i] * std::fabs(num[i][1] - ref[i][1]));
  CHECK(worst <= 1e-8 * scale);
  // Z vanishes at infinity
  CHECK(std::fabs(last.Z[0]) < 1e-8);
}

TEST_CASE("closed-form bound ratio is uniform and stable") {
  std::vector<Forcing> forcings = {
      [](double s) { return Vec2{std::pow(s, -3), 0.0}; },
      [](double s) { return Vec2{0.0, std::pow(s, -3)}; },
      [](double s) { return Vec2{std::sin(s) * std::pow(s, -3), std::cos(2 * std::log(s)) * std::pow(s, -4)}; },
  };
  for (double vs : {0.05, 0.125, 0.5})
    for (size_t k = 0; k < forcings.size(); ++k) {
      AppendixBOptions a, b;
      a.s_max = 1e3;
      b.s_max = 2e3;
      b.samples = a.samples + 22;  // same spacing
      auto ra = appendixB_solve(appendixB_basis(vs), forcings[k], a);
      auto rb = appendixB_solve(appendixB_basis(vs), forcings[k], b);
      INFO("varsigma " << vs << " forcing " << k << " ratio " << ra.max_ratio << " -> " << rb.max_ratio);
      CHECK(std::isfinite(ra.max_ratio));
      CHECK(ra.max_ratio < 10);
      CHECK(std::fabs(rb.max_ratio - ra.max_ratio) <= 0.05 * ra.max_ratio);
    }
}

TEST_CASE("zero forcing gives Z = 0; non-integrable forcing is rejected") {
  auto rep = appendixB_solve(appendixB_basis(0.3), [](double) { return Vec2{0, 0}; });
  for (const auto& s : rep.samples) {
    CHECK(s.Z[0] == 0.0);
    CHECK(s.Z[1] == 0.0);
  }
  CHECK_THROWS_AS(appendixB_solve(appendixB_basis(0.3), [](double s) { return Vec2{1 / (s * s), 0.0}; }),
                  NonIntegrableForcing);
}
