#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "nlslab/kmodel.hpp"
#include "nlslab/profile.hpp"

namespace nlslab {

struct ModState {
  double b = 0, lambda = 1;
  Vec2 beta{0, 0}, alpha{0, 0};
  double gamma = 0;
  double s = 0, t = 0;
};

// Coefficients of the leading-order modulation system.
struct ModLaw {
  Mat2 c0{}, d0{}, d1{};
  Vec2 beta3{}, beta4{};
  bool include_beta4 = false;
  double d1_sign = 1.0;  // gamma_s = 1 + |beta|^2 - d1_sign * d1(alpha, alpha)

  static ModLaw from(const ProfileConstants& c);
  static ModLaw homogeneous() { return {}; }
};

// d/ds of (b, lambda, beta, alpha, gamma, t); the s-component is 1.
struct ModDerivative {
  double b, lambda;
  Vec2 beta, alpha;
  double gamma, t;
};

ModDerivative modulation_rhs(const ModState& x, const ModLaw& law);

enum class Clock { S, T };

struct ModOptions {
  double rtol = 1e-10, atol = 1e-12;
  double lambda_min = 1e-6;
  double initial_step = 1e-3;
  Clock clock = Clock::S;
  // values of the independent variable to sample through dense output;
  // empty means every accepted step
  std::vector<double> output;
};

struct Trajectory {
  std::vector<ModState> points;
  std::string stop_reason;  // "end", "lambda_min"
  int steps = 0;
};

// Integrates from x0 to the target value of the chosen clock (either direction).
// Stops early when lambda reaches lambda_min. Throws StepSizeUnderflow.
Trajectory integrate(const ModState& x0, const ModLaw& law, double target, const ModOptions& opt = {});

// Conformal data at t1 < 0: b = -t1/C0^2, lambda = -t1/C0, alpha = beta = 0, s = C0^2/|t1|.
ModState conformal_data(double t1, double C0);

// Exact solution of the law with zero coefficients (alpha and beta stay constant;
// requires beta = 0 in x0).
ModState homogeneous_exact(const ModState& x0, double s);

// varsigma_j = -r_j C0^2 for the eigenvalues r_j of c0.
Vec2 alpha_beta_varsigma(const Mat2& c0, double C0);

// ---------------------------------------------------------------- Z' = [[0,-2],[vs/s^2,0]] Z + F

enum class BasisKind { Power, Critical, Oscillatory };

struct AppendixBSystem {
  double varsigma;
  BasisKind kind;
  double W;  // -z+ z-'/2 + z+' z-/2

  // z and z' of the pair at s
  void z(double s, double& zp, double& dzp, double& zm, double& dzm) const;
  // Z = (z, -z'/2)
  Vec2 Zplus(double s) const;
  Vec2 Zminus(double s) const;
};

AppendixBSystem appendixB_basis(double varsigma);

using Forcing = std::function<Vec2(double)>;

struct AppendixBOptions {
  double s_min = 2, s_max = 1e3;
  int samples = 200;  // logarithmically spaced in [s_min, s_max]
  double quad_tol = 1e-13;
};

struct AppendixBSample {
  double s;
  Vec2 Z;
  double lhs;    // |Z1| + s |Z2|
  double rhs;    // int_s^inf (|F1| + sigma |F2|) log sigma
  double ratio;  // lhs / rhs, 0 if rhs = 0
};

struct AppendixBReport {
  std::vector<AppendixBSample> samples;
  double max_ratio = 0;
  double decay_constant = 0;  // sampled sup s^3 |F|
};

// Variation of constants with zero constants at infinity. Throws NonIntegrableForcing
// when s^3 |F| grows along the sampled tail.
AppendixBReport appendixB_solve(const AppendixBSystem& sys, const Forcing& F, const AppendixBOptions& opt = {});

// Direct adaptive integration of the system from s_from (state Z0) to each s in `at`.
std::vector<Vec2> appendixB_integrate(const AppendixBSystem& sys, const Forcing& F, double s_from, Vec2 Z0,
                                      const std::vector<double>& at, double rtol = 1e-12, double atol = 1e-14);

}  // namespace nlslab
