#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "nlslab/modeqs.hpp"
#include "nlslab/nls.hpp"

namespace nlslab {

// The seven orthogonality conditions written as Re(eps, F_i):
//   F_0,1 = i d_j Q_P, F_2,3 = y_j Q_P, F_4 = i Lambda Q_P, F_5 = |y|^2 Q_P,
//   F_6 = i rho e^{-ib|y|^2/4 + i beta.y}
class OrthoDirections {
 public:
  OrthoDirections(const ProfileExpansion& e, const RadialFunction& rho, const ParamPoint& P);

  // Q_P and the seven directions at y
  void eval(double y0, double y1, cplx& qp, std::array<cplx, 7>& F) const;
  // Q_P and its gradient
  void qp_grad(double y0, double y1, cplx& v, cplx& gx, cplx& gy) const { f_.qp_grad(y0, y1, v, gx, gy); }
  const ParamPoint& point() const { return P_; }

 private:
  ProfileField f_;
  const RadialFunction& rho_;
  ParamPoint P_;
};

ParamPoint param_point(const ModState& m);

// f minus its combination of the F_i, so that the seven conditions vanish (lattice quadrature
// of spacing h on the disk of the given radius). The result refers to od.
using PointFn = std::function<cplx(double, double)>;
PointFn project_orthogonal(const OrthoDirections& od, const PointFn& f, double radius = 20, double h = 0.05);

// (1/k(alpha)^{1/2}) (1/lambda) (Q_P + eps)((x - alpha)/lambda) e^{i gamma} sampled on the grid;
// eps may be empty.
ComplexField2D modulated_field(const ProfileExpansion& e, const ModState& p, int n, double L,
                               const PointFn& eps = {});

struct DecomposeOptions {
  double spacing = 0.15;  // target quadrature spacing in rescaled variables
  double radius = 20;     // rescaled integration radius
  double tol = 1e-9;      // residual tolerance relative to int Q^2
  int max_iter = 40;
  double eps_bound = 1.0;  // largest accepted ||eps||_L2
};

struct Decomposition {
  ModState params;         // s unused, t = field time
  ComplexField2D epsilon;  // on a lattice centred at y = 0
  std::array<double, 7> residuals{};
  double eps_L2 = 0, eps_H1 = 0;
  int iterations = 0;
  double jacobian_cond = 0;  // with lambda and alpha columns scaled by lambda
};

class Decomposer {
 public:
  explicit Decomposer(const ProfileExpansion& e, DecomposeOptions opt = {});

  // Newton iteration on the seven conditions from guess. Throws NewtonDiverged.
  Decomposition operator()(const ComplexField2D& u, const ModState& guess) const;
  // The seven conditions for given parameters, by lattice quadrature.
  std::array<double, 7> residuals(const ComplexField2D& u, const ModState& p) const;

  const RadialFunction& rho() const { return rho_; }
  const ProfileExpansion& expansion() const { return e_; }
  const DecomposeOptions& options() const { return opt_; }

 private:
  struct Lattice {
    int stride;     // on the simulation grid
    double radius;  // rescaled radius actually used
  };
  Lattice lattice(const ComplexField2D& u, double lambda) const;
  std::array<double, 7> residuals(const ComplexField2D& u, const ModState& p, const Lattice& lat) const;
  ComplexField2D extract_eps(const ComplexField2D& u, const ModState& p, const Lattice& lat) const;

  const ProfileExpansion& e_;
  DecomposeOptions opt_;
  RadialFunction rho_;
};

Decomposition decompose(const ComplexField2D& u, const ModState& guess, const ProfileExpansion& e,
                        const DecomposeOptions& opt = {});

// Starting point for the next sample at time t: lambda and b scaled by lambda_ratio (e.g. from
// the gradient proxy), gamma advanced by int dt / lambda^2 with lambda linear in between.
ModState advance_guess(const ModState& prev, double t, double lambda_ratio);

// ---------------------------------------------------------------- blow-up law fit

struct FitReport {
  double T_est = 0, C0_est = 0;
  double residual = 0;  // rms deviation of lambda from the fitted line
  double t_from = 0, t_to = 0;
  int samples = 0;
};

// Least squares of lambda = (T - t)/C0 over the trailing fraction of the series.
// Throws NonMonotoneSeries when lambda does not decrease; needs 10 samples in the window.
FitReport fit_rate(const std::vector<double>& t, const std::vector<double>& lambda, double window_fraction = 1.0);

// ---------------------------------------------------------------- functionals

// phi'(r): r on [0, 1], 3 - e^{-r} on [2, inf), quintic in between (C^2 join)
double cutoff_slope(double r);

struct LyapunovTerms {
  double kinetic = 0;    // 1/2 int |grad v|^2
  double mass = 0;       // 1/2 int |v|^2 / lambda^2
  double potential = 0;  // - int k [F(w + v) - F(w) - F'(w).v]
  double virial = 0;     // (b / 2 lambda) Im int A grad phi((x - alpha)/(A lambda)) . grad v conj(v)
  double total() const { return kinetic + mass + potential + virial; }
};

// v = u - w; k = nullptr means k = 1
LyapunovTerms lyapunov_terms(const ModState& p, const ComplexField2D& u, const ComplexField2D& w, double A,
                             const InhomogeneityModel* k);
double lyapunov_I(const Decomposition& d, const ComplexField2D& u, const ComplexField2D& w, double A,
                  const InhomogeneityModel* k);

// -(b/lambda) |yQ|^2/4 + (1/(2 lambda)) Im int A grad phi(y/A) . grad eps conj(eps)
double virial_boundary(const Decomposition& d, double A, const Moments& q);

// ---------------------------------------------------------------- coercivity sampling

struct CoercivityOptions {
  int draws = 100;
  uint64_t seed = 2024;
  int n = 512;
  double L = 3;
  double A = 20;
  double amplitude = 1e-4;  // ||eps||_H1 of each draw
  double width = 1.5;       // Gaussian width of the random basis
  int degree = 4;           // Hermite degree of the random basis
};

struct CoercivitySample {
  double ratio;  // lambda^2 I / ||eps||_H1^2
  double q_proj; // (eps_1, Q)^2 / ||eps||_H1^2
  double ortho;  // largest |orthogonality condition| / ||eps||_L2 after projection
};

struct CoercivityReport {
  std::vector<CoercivitySample> samples;
  double c_fit = 0;      // min ratio
  int violations = 0;    // ratio <= 0
  // smallest C with ratio + C q_proj >= c_floor for every draw, c_floor = median ratio / 10
  double c_floor = 0, C_q = 0;
};

// Random eps in a Hermite-Gaussian basis, projected onto the seven conditions at the
// decomposition point, evaluated through lyapunov_I on the simulation grid.
CoercivityReport coercivity_check(const ProfileExpansion& e, const ModState& p, const CoercivityOptions& opt = {});

}  // namespace nlslab
