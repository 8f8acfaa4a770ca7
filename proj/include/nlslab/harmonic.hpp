#pragma once

#include <vector>

#include "nlslab/radial.hpp"

namespace nlslab {

// c(r) cos(m theta) + s(r) sin(m theta); an empty vector stands for zero.
struct HarmonicField {
  int m = 0;
  Vec c, s;

  bool is_zero() const { return c.empty() && s.empty(); }
};

// Real function on the plane as a finite sum of angular harmonics.
class AngularField {
 public:
  AngularField() = default;
  explicit AngularField(int n) : n_(n) {}

  static AngularField radial(const Vec& f);
  static AngularField mode(int m, const Vec& c, const Vec& s);

  int n() const { return n_; }
  int max_mode() const { return static_cast<int>(modes_.size()) - 1; }
  bool is_zero() const;

  const HarmonicField& harmonic(int m) const;
  Vec& cos_part(int m);
  Vec& sin_part(int m);
  const std::vector<HarmonicField>& modes() const { return modes_; }

  AngularField& operator+=(const AngularField& o);
  AngularField& operator-=(const AngularField& o);
  AngularField& operator*=(double a);
  AngularField& axpy(double a, const AngularField& o);

  AngularField times_radial(const Vec& w) const;

  // value at radial node i and angle theta
  double value(int i, double theta) const;
  double max_abs() const;
  void prune();
  // allocate harmonic slots up to m (references from cos_part stay valid below m)
  void ensure(int m);

 private:
  int n_ = 0;
  std::vector<HarmonicField> modes_;
};

AngularField operator+(AngularField a, const AngularField& b);
AngularField operator-(AngularField a, const AngularField& b);
AngularField operator*(double a, AngularField f);
AngularField operator*(const AngularField& a, const AngularField& b);

// integral over the plane of f g, given the grid the radial profiles live on
double inner(const AngularField& f, const AngularField& g, const RadialGrid& grid);
double norm(const AngularField& f, const RadialGrid& grid);

// Elementary angular fields: y_j (j = 0, 1), H(y, y), H(e, y), D(y, y, y), ...
Vec radial_power(const RadialGrid& g, int p);
AngularField linear_form(const RadialGrid& g, double a0, double a1);  // a . y
AngularField quadratic_form(const RadialGrid& g, double h00, double h01, double h11);
AngularField cubic_form(const RadialGrid& g, const double d[2][2][2]);
AngularField quartic_form(const RadialGrid& g, const double q[2][2][2][2]);

}  // namespace nlslab
