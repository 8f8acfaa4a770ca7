#pragma once

#include <Eigen/SparseLU>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "nlslab/harmonic.hpp"
#include "nlslab/radial.hpp"

namespace nlslab {

enum class Op { Plus, Minus };  // L+ = -Lap + 1 - 3Q^2, L- = -Lap + 1 - Q^2

// Radial parts of the kernel and generalized kernel elements.
struct KernelBasis {
  RadialFunction dQ;       // d_j Q = Q'(r) (cos t, sin t), mode 1
  RadialFunction Q;        // kernel of L-, mode 0
  RadialFunction LambdaQ;  // Q + r Q'
  RadialFunction yQ;       // r Q, mode 1
  RadialFunction y2Q;      // r^2 Q
  RadialFunction rho;      // L+ rho = |y|^2 Q
};

class LinOps {
 public:
  explicit LinOps(const GroundState& gs, int m_max = 4, double solvability_tol = 1e-8);
  ~LinOps();
  LinOps(const LinOps&) = delete;
  LinOps& operator=(const LinOps&) = delete;

  const GroundState& ground() const { return gs_; }
  const RadialGrid& grid() const { return gs_.Q.grid; }
  int m_max() const { return m_max_; }
  double solvability_tol() const { return solv_tol_; }

  Vec apply(Op op, int m, const Vec& f) const;
  // Solution of op f = g in mode m, orthogonal to the kernel element of that
  // mode when there is one. Throws SolvabilityViolated.
  Vec solve(Op op, int m, const Vec& g) const;

  HarmonicField apply(Op op, const HarmonicField& f) const;
  HarmonicField solve(Op op, const HarmonicField& g) const;
  AngularField apply(Op op, const AngularField& f) const;
  AngularField solve(Op op, const AngularField& g) const;

  const Vec* kernel(Op op, int m) const;
  // |(g, k)| / (|g| |k|) for the kernel element k of (op, m), 0 if none
  double kernel_projection(Op op, int m, const Vec& g) const;

  const RadialStencil& stencil(int m) const { return (m % 2 == 0) ? even_ : odd_; }
  Vec derivative(int m, const Vec& f) const;
  Vec laplacian(int m, const Vec& f) const;
  AngularField laplacian(const AngularField& f) const;
  // int f g r dr
  double radial_inner(const Vec& f, const Vec& g) const;

 private:
  struct Factor;
  const Factor& factor(Op op, int m) const;
  const Vec& potential(Op op) const { return op == Op::Plus ? vplus_ : vminus_; }
  void check_mode(int m) const;

  GroundState gs_;
  int m_max_;
  double solv_tol_;
  RadialStencil even_, odd_;
  Vec vplus_, vminus_, zero_;
  Vec dq_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<int, int>, std::unique_ptr<Factor>> cache_;
};

KernelBasis kernel_basis(const LinOps& ops);
RadialFunction compute_rho(const LinOps& ops);
// (y_j y_l Q^3, Lambda Q), axes j, l in {0, 1}
double cancellation_moment(const LinOps& ops, int j, int l);

struct IdentityResult {
  std::string name;
  double residual = 0;
  double threshold = 0;
  bool pass() const { return residual < threshold; }
};

// Relations of the kernel and generalized kernel, plus the second-derivative
// identity L+(Lap Q) = 6 |grad Q|^2 Q, cancellation and nondegeneracy.
std::vector<IdentityResult> identity_suite(const LinOps& ops);

}  // namespace nlslab
