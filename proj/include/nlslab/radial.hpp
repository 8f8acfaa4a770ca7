#pragma once

#include <Eigen/SparseCore>
#include <limits>
#include <string>
#include <vector>

namespace nlslab {

using Vec = std::vector<double>;

struct RadialGrid {
  double r_max = 30.0;
  int n = 8192;

  RadialGrid() = default;
  RadialGrid(double r_max, int n);

  double h() const { return r_max / (n - 1); }
  double r(int i) const { return i * h(); }
  Vec nodes() const;
  bool operator==(const RadialGrid&) const = default;
};

struct RadialFunction {
  RadialGrid grid;
  Vec values;
  double tail_rate = std::numeric_limits<double>::quiet_NaN();

  RadialFunction() = default;
  RadialFunction(const RadialGrid& g, Vec v);

  double operator[](int i) const { return values[i]; }
  int size() const { return static_cast<int>(values.size()); }
  // parity selects the extension to r < 0 used near the origin
  double at(double r, int parity = 1) const;
};

// Slope of log|f| over the last decade of amplitude above the noise floor.
double fit_tail_rate(const RadialGrid& g, const Vec& v);

// Finite-difference weights (Fornberg) for derivatives 0..order at x0.
std::vector<Vec> fd_weights(double x0, const Vec& x, int order);

// Eighth-order first/second derivative rows on a uniform radial grid.
// Ghost values at r < 0 are folded back with the given parity; rows near
// r_max switch to one-sided stencils.
class RadialStencil {
 public:
  static constexpr int kHalf = 4;
  static constexpr int kOneSided = 10;

  struct Row {
    int first = 0;
    Vec d1, d2;
  };

  RadialStencil(const RadialGrid& g, int parity);

  const RadialGrid& grid() const { return grid_; }
  int parity() const { return parity_; }
  const Row& row(int i) const { return rows_[i]; }

  Vec d1(const Vec& f) const;
  Vec d2(const Vec& f) const;

 private:
  RadialGrid grid_;
  int parity_;
  std::vector<Row> rows_;
};

int parity_of_mode(int m);

// -f'' - f'/r + m^2 f / r^2 + V f, evaluated pointwise (regular limit at r=0).
Vec apply_radial(const RadialStencil& st, int m, const Vec& potential, const Vec& f);

enum class OuterBoundary { Dirichlet, Robin };

// Sparse matrix of the same operator. Row 0 is the identity for m != 0;
// the last row imposes f(r_max)=0 or f' = robin_coeff * f.
Eigen::SparseMatrix<double> assemble_radial(const RadialStencil& st, int m, const Vec& potential,
                                            OuterBoundary bc, double robin_coeff = 0.0);

// Weights W_i with sum W_i g(r_i) approximating the integral of g over [0, r_max]
// (trapezoid with eighth-order Gregory end corrections).
const Vec& radial_weights(const RadialGrid& g);

// 2*pi * int f r^{p+1} dr, optionally with an exponential tail beyond r_max.
double quadrature(const RadialFunction& f, int radial_weight_power, bool tail_correction = true);

struct Moments {
  double massQ = 0, quarticQ = 0, ymomQ = 0, gradQ = 0;
};

struct GroundState {
  RadialFunction Q;
  RadialFunction dQ;
  Moments moments;
  double residual = 0;        // max pointwise residual of the discrete equation
  double residual_floor = 0;  // rounding level of that residual
};

// Rounding level of -f'' for |f| <= scale on this grid.
double second_difference_floor(const RadialGrid& g, double scale);

// Bisection on Q(0) in [lo, hi] with RK4 of step h; returns the converged Q(0).
double shoot_q0(double lo, double hi, double h, double r_max);

RadialFunction solve_ground_state(const RadialGrid& grid, double tol = 1e-10);
Moments compute_moments(const RadialFunction& Q);
GroundState make_ground_state(const RadialGrid& grid, double tol = 1e-10);

std::string ground_state_json(const GroundState& gs);
std::string ground_state_csv(const GroundState& gs);

}  // namespace nlslab
