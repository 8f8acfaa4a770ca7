#pragma once

#include <array>
#include <string>
#include <vector>

namespace nlslab {

using Mat2 = std::array<std::array<double, 2>, 2>;
using Vec2 = std::array<double, 2>;

// k(x) = k1 + (1-k1) exp(g(x)/(1-k1)),  g(x) = H(x,x)/2 + D3(x,x,x) w(|x|)/6,
// where w is a smooth cutoff equal to 1 on |x| <= 1 and 0 on |x| >= 2.
struct InhomogeneityModel {
  Mat2 H{{{-1.0, 0.0}, {0.0, -1.0}}};
  double D3[2][2][2] = {};
  double k1 = 0.5;

  InhomogeneityModel() = default;
  // third = (D_111, D_112, D_122, D_222)
  InhomogeneityModel(const Mat2& hessian, const std::array<double, 4>& third, double floor);

  std::array<double, 4> third() const { return {D3[0][0][0], D3[0][0][1], D3[0][1][1], D3[1][1][1]}; }
  bool homogeneous() const;  // k == 1
  bool negative_definite() const;

  double value(double x, double y) const;
  Vec2 grad(double x, double y) const;
  // fourth derivative tensor at the origin
  void quartic(double q[2][2][2][2]) const;

  // Every violated condition, empty when the model is admissible.
  std::vector<std::string> violations(bool require_definite = true) const;
  void validate(bool require_definite = true) const;  // throws InvalidModel
};

double cutoff(double r);
double cutoff_derivative(double r);

}  // namespace nlslab
