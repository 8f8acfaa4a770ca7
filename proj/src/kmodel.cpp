#include "nlslab/kmodel.hpp"

#include <cmath>

#include "nlslab/errors.hpp"

namespace nlslab {

namespace {

double psi(double x) { return x > 0 ? std::exp(-1.0 / x) : 0.0; }
double dpsi(double x) { return x > 0 ? std::exp(-1.0 / x) / (x * x) : 0.0; }

double cubic(const double d[2][2][2], const double u[2]) {
  double s = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int l = 0; l < 2; ++l) s += d[i][j][l] * u[i] * u[j] * u[l];
  return s;
}

}  // namespace

double cutoff(double r) {
  if (r <= 1.0) return 1.0;
  if (r >= 2.0) return 0.0;
  double a = psi(2.0 - r), b = psi(r - 1.0);
  return a / (a + b);
}

double cutoff_derivative(double r) {
  if (r <= 1.0 || r >= 2.0) return 0.0;
  double a = psi(2.0 - r), b = psi(r - 1.0);
  double da = -dpsi(2.0 - r), db = dpsi(r - 1.0);
  return (da * b - a * db) / ((a + b) * (a + b));
}

InhomogeneityModel::InhomogeneityModel(const Mat2& hessian, const std::array<double, 4>& t, double floor)
    : H(hessian), k1(floor) {
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int l = 0; l < 2; ++l) D3[i][j][l] = t[i + j + l];
}

bool InhomogeneityModel::homogeneous() const {
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      if (H[i][j] != 0.0) return false;
  for (double v : third())
    if (v != 0.0) return false;
  return true;
}

bool InhomogeneityModel::negative_definite() const {
  return H[0][0] < 0 && H[0][0] * H[1][1] - H[0][1] * H[1][0] > 0;
}

double InhomogeneityModel::value(double x, double y) const {
  double u[2] = {x, y};
  double g = 0.5 * (H[0][0] * x * x + 2 * H[0][1] * x * y + H[1][1] * y * y);
  double w = cutoff(std::hypot(x, y));
  if (w > 0) g += cubic(D3, u) * w / 6.0;
  return k1 + (1 - k1) * std::exp(g / (1 - k1));
}

Vec2 InhomogeneityModel::grad(double x, double y) const {
  double u[2] = {x, y};
  double r = std::hypot(x, y);
  double g = 0.5 * (H[0][0] * x * x + 2 * H[0][1] * x * y + H[1][1] * y * y);
  Vec2 dg{H[0][0] * x + H[0][1] * y, H[1][0] * x + H[1][1] * y};
  double w = cutoff(r);
  if (w > 0) {
    double c = cubic(D3, u), dw = cutoff_derivative(r);
    g += c * w / 6.0;
    for (int i = 0; i < 2; ++i) {
      double dc = 0;  // d/dx_i of D3(u,u,u) = 3 D3(e_i,u,u)
      for (int j = 0; j < 2; ++j)
        for (int l = 0; l < 2; ++l) dc += 3 * D3[i][j][l] * u[j] * u[l];
      dg[i] += dc * w / 6.0 + (r > 0 ? c * dw * u[i] / (6.0 * r) : 0.0);
    }
  }
  double e = std::exp(g / (1 - k1));
  return {e * dg[0], e * dg[1]};
}

void InhomogeneityModel::quartic(double q[2][2][2][2]) const {
  // Taylor term H(x,x)^2 / (8 (1-k1)) = q(x,x,x,x)/24
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int l = 0; l < 2; ++l)
        for (int m = 0; m < 2; ++m)
          q[i][j][l][m] = (H[i][j] * H[l][m] + H[i][l] * H[j][m] + H[i][m] * H[j][l]) / (1 - k1);
}

std::vector<std::string> InhomogeneityModel::violations(bool require_definite) const {
  std::vector<std::string> out;
  if (!(k1 > 0 && k1 < 1)) out.push_back("k1 must lie in (0, 1)");
  if (H[0][1] != H[1][0]) out.push_back("hessian not symmetric");
  if (require_definite && !negative_definite()) out.push_back("hessian not negative definite");
  if (!out.empty()) return out;

  const double h = 1e-4;
  if (std::fabs(value(0, 0) - 1.0) > 1e-14) out.push_back("k(0) != 1");
  Vec2 g0 = grad(0, 0);
  double fd0 = (value(h, 0) - value(-h, 0)) / (2 * h), fd1 = (value(0, h) - value(0, -h)) / (2 * h);
  if (std::fabs(g0[0]) + std::fabs(g0[1]) > 1e-7 || std::fabs(fd0) > 1e-7 || std::fabs(fd1) > 1e-7)
    out.push_back("grad k(0) != 0");
  const double hh = 1e-4;
  double h00 = (value(hh, 0) - 2 * value(0, 0) + value(-hh, 0)) / (hh * hh);
  double h11 = (value(0, hh) - 2 * value(0, 0) + value(0, -hh)) / (hh * hh);
  double h01 = (value(hh, hh) - value(hh, -hh) - value(-hh, hh) + value(-hh, -hh)) / (4 * hh * hh);
  if (std::fabs(h00 - H[0][0]) > 1e-6 || std::fabs(h11 - H[1][1]) > 1e-6 || std::fabs(h01 - H[0][1]) > 1e-6)
    out.push_back("hessian of k at 0 does not match H");

  // k <= 1 needs g <= 0; sample the annulus where the cubic part lives plus a coarse far field
  double kmax = 0;
  for (int ir = 1; ir <= 80; ++ir)
    for (int it = 0; it < 64; ++it) {
      double r = 2.5 * ir / 80.0, t = 2 * M_PI * it / 64;
      kmax = std::max(kmax, value(r * std::cos(t), r * std::sin(t)));
    }
  if (kmax > 1.0 + 1e-15) out.push_back("k exceeds 1 (third-derivative tensor too large for H)");
  return out;
}

void InhomogeneityModel::validate(bool require_definite) const {
  auto v = violations(require_definite);
  if (v.empty()) return;
  std::string msg;
  for (const auto& s : v) msg += (msg.empty() ? "" : "; ") + s;
  throw InvalidModel(msg);
}

}  // namespace nlslab
