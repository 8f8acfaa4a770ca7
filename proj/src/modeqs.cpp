#include "nlslab/modeqs.hpp"

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>
#include <cmath>

#include "nlslab/errors.hpp"

namespace nlslab {

namespace odeint = boost::numeric::odeint;

namespace {

double form(const Mat2& m, const Vec2& a) {
  double v = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) v += m[i][j] * a[i] * a[j];
  return v;
}

// packed as b, lambda, beta1, beta2, alpha1, alpha2, gamma, other clock
using State = std::array<double, 8>;

State pack(const ModState& x, Clock c) {
  return {x.b, x.lambda, x.beta[0], x.beta[1], x.alpha[0], x.alpha[1], x.gamma, c == Clock::S ? x.t : x.s};
}

ModState unpack(const State& v, double indep, Clock c) {
  ModState x;
  x.b = v[0];
  x.lambda = v[1];
  x.beta = {v[2], v[3]};
  x.alpha = {v[4], v[5]};
  x.gamma = v[6];
  if (c == Clock::S) {
    x.s = indep;
    x.t = v[7];
  } else {
    x.t = indep;
    x.s = v[7];
  }
  return x;
}

}  // namespace

ModLaw ModLaw::from(const ProfileConstants& c) {
  ModLaw l;
  l.c0 = c.c0;
  l.d0 = c.d0_form;
  l.d1 = c.d1_form;
  l.beta3 = c.beta3;
  l.beta4 = c.beta4;
  return l;
}

ModDerivative modulation_rhs(const ModState& x, const ModLaw& law) {
  const double l = x.lambda, l3 = l * l * l;
  ModDerivative d;
  d.b = -x.b * x.b + form(law.d0, x.alpha);
  d.lambda = -x.b * l;
  for (int j = 0; j < 2; ++j) {
    d.alpha[j] = 2 * x.beta[j] * l;
    double c0a = law.c0[j][0] * x.alpha[0] + law.c0[j][1] * x.alpha[1];
    d.beta[j] = -x.b * x.beta[j] + c0a * l + law.beta3[j] * l3;
    if (law.include_beta4) d.beta[j] += law.beta4[j] * l3 * l;
  }
  d.gamma = 1 + x.beta[0] * x.beta[0] + x.beta[1] * x.beta[1] - law.d1_sign * form(law.d1, x.alpha);
  d.t = l * l;
  return d;
}

Trajectory integrate(const ModState& x0, const ModLaw& law, double target, const ModOptions& opt) {
  if (!(x0.lambda > 0)) throw std::invalid_argument("lambda must be positive");
  const Clock clock = opt.clock;
  auto rhs = [&](const State& v, State& dv, double indep) {
    ModDerivative d = modulation_rhs(unpack(v, indep, clock), law);
    // in the t clock every rate is divided by lambda^2 = dt/ds
    const double f = (clock == Clock::S) ? 1.0 : 1.0 / (v[1] * v[1]);
    dv = {d.b * f, d.lambda * f, d.beta[0] * f, d.beta[1] * f, d.alpha[0] * f, d.alpha[1] * f, d.gamma * f,
          clock == Clock::S ? d.t : f};
  };

  const double start = (clock == Clock::S) ? x0.s : x0.t;
  const double dir = (target >= start) ? 1.0 : -1.0;
  std::vector<double> outs = opt.output;
  std::sort(outs.begin(), outs.end(), [dir](double a, double b) { return dir * a < dir * b; });
  size_t next_out = 0;

  Trajectory tr;
  auto record = [&](const State& v, double indep) { tr.points.push_back(unpack(v, indep, clock)); };
  auto emit_outputs = [&](auto& st, double upto) {
    State tmp;
    while (next_out < outs.size() && dir * outs[next_out] <= dir * upto) {
      if (dir * outs[next_out] >= dir * start) {
        st.calc_state(outs[next_out], tmp);
        record(tmp, outs[next_out]);
      }
      ++next_out;
    }
  };

  State v = pack(x0, clock);
  if (outs.empty()) record(v, start);
  if (target == start) {
    tr.stop_reason = "end";
    if (!outs.empty()) record(v, start);
    return tr;
  }

  auto st = odeint::make_dense_output(opt.atol, opt.rtol, odeint::runge_kutta_dopri5<State>());
  st.initialize(v, start, dir * std::min(opt.initial_step, std::fabs(target - start)));
  tr.stop_reason = "end";
  while (dir * st.current_time() < dir * target) {
    try {
      st.do_step(rhs);
    } catch (const odeint::step_adjustment_error& e) {
      throw StepSizeUnderflow(std::string("modulation integrator: ") + e.what());
    }
    ++tr.steps;
    const double cur = st.current_time(), prev = st.previous_time();
    if (std::fabs(cur - prev) < 1e-14 * std::max(1.0, std::fabs(cur)))
      throw StepSizeUnderflow("modulation integrator step " + std::to_string(cur - prev) + " at " +
                              std::to_string(cur));
    const State& x = st.current_state();
    for (double c : x)
      if (!std::isfinite(c)) throw StepSizeUnderflow("non-finite modulation state at " + std::to_string(cur));

    // stop time inside this step: target or lambda_min crossing
    double stop = cur;
    bool hit_min = false;
    if (x[1] <= opt.lambda_min) {
      double lo = prev, hi = cur;
      State tmp;
      for (int it = 0; it < 100 && std::fabs(hi - lo) > 1e-15 * std::max(1.0, std::fabs(hi)); ++it) {
        double mid = 0.5 * (lo + hi);
        st.calc_state(mid, tmp);
        (tmp[1] > opt.lambda_min ? lo : hi) = mid;
      }
      stop = hi;
      hit_min = true;
    }
    if (dir * stop > dir * target) stop = target;

    emit_outputs(st, stop);
    if (stop != cur || hit_min) {
      State tmp;
      st.calc_state(stop, tmp);
      if (outs.empty()) record(tmp, stop);
      tr.stop_reason = hit_min ? "lambda_min" : "end";
      return tr;
    }
    if (outs.empty()) record(x, cur);
  }
  return tr;
}

ModState conformal_data(double t1, double C0) {
  if (!(t1 < 0) || !(C0 > 0)) throw std::invalid_argument("conformal data needs t1 < 0 and C0 > 0");
  ModState x;
  x.b = -t1 / (C0 * C0);
  x.lambda = -t1 / C0;
  x.s = C0 * C0 / -t1;
  x.t = t1;
  return x;
}

ModState homogeneous_exact(const ModState& x0, double s) {
  if (x0.beta[0] != 0 || x0.beta[1] != 0) throw std::invalid_argument("homogeneous_exact needs beta = 0");
  ModState x = x0;
  const double ds = s - x0.s;
  x.s = s;
  x.gamma = x0.gamma + ds;
  if (x0.b == 0) {
    x.t = x0.t + x0.lambda * x0.lambda * ds;
    return x;
  }
  const double sigma = ds + 1 / x0.b;  // b = 1 / sigma
  x.b = 1 / sigma;
  x.lambda = x0.lambda * x.b / x0.b;
  const double k = x0.lambda / x0.b;
  x.t = x0.t + k * k * (x0.b - 1 / sigma);
  return x;
}

Vec2 alpha_beta_varsigma(const Mat2& c0, double C0) {
  // symmetric part; c0 is symmetric whenever it comes from a Hessian
  const double a = c0[0][0], d = c0[1][1], b = 0.5 * (c0[0][1] + c0[1][0]);
  const double m = 0.5 * (a + d), r = std::hypot(0.5 * (a - d), b);
  return {-(m - r) * C0 * C0, -(m + r) * C0 * C0};
}

// ---------------------------------------------------------------- closed-form alpha-beta system

AppendixBSystem appendixB_basis(double vs) {
  if (!(vs > 0)) throw std::invalid_argument("varsigma must be positive");
  AppendixBSystem sys{vs, BasisKind::Power, 0};
  if (std::fabs(vs - 0.125) <= 1e-12 * 0.125) {
    sys.kind = BasisKind::Critical;
    sys.W = 0.5;
  } else if (vs < 0.125) {
    sys.W = 0.5 * std::sqrt(1 - 8 * vs);
  } else {
    sys.kind = BasisKind::Oscillatory;
    sys.W = -0.25 * std::sqrt(8 * vs - 1);
  }
  return sys;
}

void AppendixBSystem::z(double s, double& zp, double& dzp, double& zm, double& dzm) const {
  const double rs = std::sqrt(s), L = std::log(s);
  switch (kind) {
    case BasisKind::Power: {
      const double q = std::sqrt(1 - 8 * varsigma), tp = 0.5 * (1 + q), tm = 0.5 * (1 - q);
      zp = std::pow(s, tp);
      zm = std::pow(s, tm);
      dzp = tp * zp / s;
      dzm = tm * zm / s;
      break;
    }
    case BasisKind::Critical:
      zp = rs * L;
      dzp = (0.5 * L + 1) / rs;
      zm = rs;
      dzm = 0.5 / rs;
      break;
    case BasisKind::Oscillatory: {
      const double w = 0.5 * std::sqrt(8 * varsigma - 1), c = std::cos(w * L), sn = std::sin(w * L);
      zp = rs * c;
      dzp = (0.5 * c - w * sn) / rs;
      zm = rs * sn;
      dzm = (0.5 * sn + w * c) / rs;
      break;
    }
  }
}

Vec2 AppendixBSystem::Zplus(double s) const {
  double zp, dzp, zm, dzm;
  z(s, zp, dzp, zm, dzm);
  return {zp, -0.5 * dzp};
}

Vec2 AppendixBSystem::Zminus(double s) const {
  double zp, dzp, zm, dzm;
  z(s, zp, dzp, zm, dzm);
  return {zm, -0.5 * dzm};
}

namespace {

// int_a^b f, finite or b = inf
template <class F>
double integral(F f, double a, double b, double tol) {
  if (std::isinf(b)) {
    boost::math::quadrature::exp_sinh<double> es;
    return es.integrate(f, a, b, tol);
  }
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, tol);
}

}  // namespace

AppendixBReport appendixB_solve(const AppendixBSystem& sys, const Forcing& F, const AppendixBOptions& opt) {
  if (!(opt.s_min > 1) || !(opt.s_max > opt.s_min) || opt.samples < 2)
    throw std::invalid_argument("closed-form system range needs 1 < s_min < s_max and at least 2 samples");

  AppendixBReport rep;
  // sampled decay check on s^3 |F| over [s_min, 1e3 s_max]
  double near = 0, far = 0;
  for (double s = opt.s_min; s <= 1e3 * opt.s_max; s *= 1.25) {
    Vec2 f = F(s);
    double v = s * s * s * std::hypot(f[0], f[1]);
    if (!std::isfinite(v)) throw NonIntegrableForcing("forcing is not finite at s = " + std::to_string(s));
    (s <= opt.s_max ? near : far) = std::max(s <= opt.s_max ? near : far, v);
  }
  rep.decay_constant = std::max(near, far);
  if (far > 100 * near + 1e-300)
    throw NonIntegrableForcing("s^3 |F| grows along the tail: " + std::to_string(near) + " -> " +
                               std::to_string(far));

  auto ip = [&](double s) {
    Vec2 f = F(s), zm = sys.Zminus(s);
    return (f[0] * zm[1] - f[1] * zm[0]) / sys.W;
  };
  auto im = [&](double s) {
    Vec2 f = F(s), zp = sys.Zplus(s);
    return (f[1] * zp[0] - f[0] * zp[1]) / sys.W;
  };
  auto bound = [&](double s) {
    Vec2 f = F(s);
    return (std::fabs(f[0]) + s * std::fabs(f[1])) * std::log(s);
  };

  std::vector<double> ss(opt.samples);
  const double ratio = std::pow(opt.s_max / opt.s_min, 1.0 / (opt.samples - 1));
  for (int i = 0; i < opt.samples; ++i) ss[i] = opt.s_min * std::pow(ratio, i);
  ss.back() = opt.s_max;

  const double inf = std::numeric_limits<double>::infinity();
  double Ap = integral(ip, ss.back(), inf, opt.quad_tol), Am = integral(im, ss.back(), inf, opt.quad_tol);
  double R = integral(bound, ss.back(), inf, opt.quad_tol);
  rep.samples.resize(ss.size());
  for (int i = opt.samples - 1; i >= 0; --i) {
    if (i < opt.samples - 1) {
      Ap += integral(ip, ss[i], ss[i + 1], opt.quad_tol);
      Am += integral(im, ss[i], ss[i + 1], opt.quad_tol);
      R += integral(bound, ss[i], ss[i + 1], opt.quad_tol);
    }
    const double s = ss[i];
    Vec2 zp = sys.Zplus(s), zm = sys.Zminus(s);
    AppendixBSample& smp = rep.samples[i];
    smp.s = s;
    smp.Z = {-Ap * zp[0] - Am * zm[0], -Ap * zp[1] - Am * zm[1]};
    smp.lhs = std::fabs(smp.Z[0]) + s * std::fabs(smp.Z[1]);
    smp.rhs = R;
    smp.ratio = R > 0 ? smp.lhs / R : 0.0;
    rep.max_ratio = std::max(rep.max_ratio, smp.ratio);
  }
  return rep;
}

std::vector<Vec2> appendixB_integrate(const AppendixBSystem& sys, const Forcing& F, double s_from, Vec2 Z0,
                                      const std::vector<double>& at, double rtol, double atol) {
  using S2 = std::array<double, 2>;
  auto rhs = [&](const S2& z, S2& dz, double s) {
    Vec2 f = F(s);
    dz = {-2 * z[1] + f[0], sys.varsigma / (s * s) * z[0] + f[1]};
  };
  auto st = odeint::make_controlled(atol, rtol, odeint::runge_kutta_dopri5<S2>());
  std::vector<Vec2> out;
  S2 z = Z0;
  double s = s_from;
  for (double target : at) {
    if (target != s) {
      double dt = (target > s ? 1 : -1) * 1e-3 * std::max(1.0, std::fabs(s));
      odeint::integrate_adaptive(st, rhs, z, s, target, dt);
      s = target;
    }
    out.push_back(z);
  }
  return out;
}

}  // namespace nlslab
