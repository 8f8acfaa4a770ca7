#include "nlslab/nls.hpp"

#include <fftw3.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nlslab/errors.hpp"

namespace nlslab {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

namespace {

// planning is not thread-safe in FFTW
std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

ComplexField2D::ComplexField2D(int n_, double L_, double t_)
    : n(n_), L(L_), t(t_), data(static_cast<size_t>(n_) * n_, 0.0) {}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

SplitStep::SplitStep(int n, double L, const InhomogeneityModel* k, bool dealias)
    : n_(n), L_(L), dealias_(dealias), xi_(n), keep_(n), work_(static_cast<size_t>(n) * n) {
  if (!is_power_of_two(n)) throw std::invalid_argument("grid size must be a power of two");
  if (!(L > 0)) throw std::invalid_argument("box half-width must be positive");
  for (int j = 0; j < n; ++j) {
    const int m = (j < n / 2) ? j : j - n;
    xi_[j] = M_PI * m / L;
    keep_[j] = !dealias || 3 * std::abs(m) <= n;
  }
  if (k && !k->homogeneous()) {
    kx_.resize(static_cast<size_t>(n) * n);
    const double h = 2 * L / n;
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) kx_[static_cast<size_t>(iy) * n + ix] = k->value(-L + ix * h, -L + iy * h);
  }
  std::lock_guard<std::mutex> lock(fftw_mutex());
  auto* w = as_fftw(work_.data());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  plan_f_ = fftw_plan_dft_2d(n, n, w, w, FFTW_FORWARD, flags);
  plan_b_ = fftw_plan_dft_2d(n, n, w, w, FFTW_BACKWARD, flags);
}

SplitStep::~SplitStep() {
  std::lock_guard<std::mutex> lock(fftw_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan_f_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_b_));
}

void SplitStep::forward(cplx* a) const { fftw_execute_dft(static_cast<fftw_plan>(plan_f_), as_fftw(a), as_fftw(a)); }

void SplitStep::backward(cplx* a) const {
  fftw_execute_dft(static_cast<fftw_plan>(plan_b_), as_fftw(a), as_fftw(a));
  const double s = 1.0 / (double(n_) * n_);
  for (size_t i = 0; i < work_.size(); ++i) a[i] *= s;
}

const std::vector<cplx>& SplitStep::propagator(double dt) {
  for (const auto& [h, p] : props_)
    if (h == dt) return p;
  if (props_.size() >= 4) props_.erase(props_.begin());
  std::vector<cplx> p(static_cast<size_t>(n_) * n_);
  const double norm = 1.0 / (double(n_) * n_);  // inverse transform scaling folded in
  for (int iy = 0; iy < n_; ++iy)
    for (int ix = 0; ix < n_; ++ix) {
      const size_t i = static_cast<size_t>(iy) * n_ + ix;
      if (keep_[ix] && keep_[iy]) p[i] = std::polar(norm, -(xi_[ix] * xi_[ix] + xi_[iy] * xi_[iy]) * dt);
    }
  props_.emplace_back(dt, std::move(p));
  return props_.back().second;
}

void SplitStep::nonlinear(ComplexField2D& u, double h) const {
  const size_t N = u.size();
  double total = 0;
  for (size_t i = 0; i < N; ++i) {
    const double a = std::norm(u.data[i]);
    total += a;
    const double th = (kx_.empty() ? a : kx_[i] * a) * h;
    u.data[i] *= cplx(std::cos(th), std::sin(th));
  }
  if (!std::isfinite(total)) throw NaNDetected("non-finite field at t = " + std::to_string(u.t));
}

void SplitStep::linear(ComplexField2D& u, double dt) {
  const auto& prop = propagator(dt);
  cplx* a = u.data.data();
  forward(a);
  for (size_t i = 0; i < u.size(); ++i) a[i] *= prop[i];
  fftw_execute_dft(static_cast<fftw_plan>(plan_b_), as_fftw(a), as_fftw(a));
}

void SplitStep::step(ComplexField2D& u, double dt) {
  if (u.n != n_) throw std::invalid_argument("field and solver grids differ");
  nonlinear(u, 0.5 * dt);
  linear(u, dt);
  nonlinear(u, 0.5 * dt);
  u.t += dt;
}

// six-stage symmetric splitting of order 4 with optimized error constants; the linear flow
// takes the inner stages
void SplitStep::step4(ComplexField2D& u, double dt) {
  if (u.n != n_) throw std::invalid_argument("field and solver grids differ");
  constexpr double a1 = 0.0792036964311957, a2 = 0.353172906049774, a3 = -0.0420650803577195;
  constexpr double a4 = 1 - 2 * (a1 + a2 + a3);
  constexpr double b1 = 0.209515106613362, b2 = -0.143851773179818, b3 = 0.5 - (b1 + b2);
  nonlinear(u, a1 * dt);
  linear(u, b1 * dt);
  nonlinear(u, a2 * dt);
  linear(u, b2 * dt);
  nonlinear(u, a3 * dt);
  linear(u, b3 * dt);
  nonlinear(u, a4 * dt);
  linear(u, b3 * dt);
  nonlinear(u, a3 * dt);
  linear(u, b2 * dt);
  nonlinear(u, a2 * dt);
  linear(u, b1 * dt);
  nonlinear(u, a1 * dt);
  u.t += dt;
}

Conserved SplitStep::conserved(const ComplexField2D& u) const {
  Conserved c;
  const double dx = 2 * L_ / n_, area = dx * dx;
  const double N = double(n_) * n_;
  std::copy(u.data.begin(), u.data.end(), work_.begin());
  forward(work_.data());
  double total = 0, grad = 0, px = 0, py = 0, tail = 0;
  for (int iy = 0; iy < n_; ++iy) {
    const int my = (iy < n_ / 2) ? iy : iy - n_;
    for (int ix = 0; ix < n_; ++ix) {
      const int mx = (ix < n_ / 2) ? ix : ix - n_;
      const double p = std::norm(work_[static_cast<size_t>(iy) * n_ + ix]);
      total += p;
      grad += (xi_[ix] * xi_[ix] + xi_[iy] * xi_[iy]) * p;
      if (ix != n_ / 2) px += xi_[ix] * p;
      if (iy != n_ / 2) py += xi_[iy] * p;
      if (3 * std::max(std::abs(mx), std::abs(my)) > n_) tail += p;
    }
  }
  c.mass = total * area / N;
  const double g2 = grad * area / N;
  c.grad_norm = std::sqrt(g2);
  c.momentum[0] = px * area / N;
  c.momentum[1] = py * area / N;
  c.tail = total > 0 ? tail / total : 0.0;
  double q4 = 0;
  for (size_t i = 0; i < u.size(); ++i) {
    const double a = std::norm(u.data[i]);
    q4 += (kx_.empty() ? 1.0 : kx_[i]) * a * a;
  }
  c.energy = 0.5 * g2 - 0.25 * q4 * area;
  return c;
}

void SplitStep::gradient(const ComplexField2D& u, ComplexField2D& gx, ComplexField2D& gy) const {
  std::copy(u.data.begin(), u.data.end(), work_.begin());
  forward(work_.data());
  gx = ComplexField2D(n_, L_, u.t);
  gy = ComplexField2D(n_, L_, u.t);
  const cplx I(0, 1);
  for (int iy = 0; iy < n_; ++iy)
    for (int ix = 0; ix < n_; ++ix) {
      const size_t i = static_cast<size_t>(iy) * n_ + ix;
      gx.data[i] = (ix == n_ / 2) ? 0.0 : I * xi_[ix] * work_[i];
      gy.data[i] = (iy == n_ / 2) ? 0.0 : I * xi_[iy] * work_[i];
    }
  backward(gx.data.data());
  backward(gy.data.data());
}

void SplitStep::shift(ComplexField2D& u, double d0, double d1) const {
  if (u.n != n_) throw std::invalid_argument("field and solver grids differ");
  // the Nyquist mode has no sign, it only gets the cosine
  auto ramp = [&](int j, double d) {
    return j == n_ / 2 ? cplx(std::cos(xi_[j] * d), 0) : std::polar(1.0, xi_[j] * d);
  };
  std::vector<cplx> rx(n_);
  for (int j = 0; j < n_; ++j) rx[j] = ramp(j, d0);
  forward(u.data.data());
  for (int iy = 0; iy < n_; ++iy) {
    const cplx ry = ramp(iy, d1);
    for (int ix = 0; ix < n_; ++ix) u.data[static_cast<size_t>(iy) * n_ + ix] *= ry * rx[ix];
  }
  backward(u.data.data());
}

ComplexField2D pseudo_conformal(const RadialFunction& Q, int n, double L, double t) {
  if (!(t < 0)) throw std::invalid_argument("pseudo-conformal solution needs t < 0");
  ComplexField2D u(n, L, t);
  const double a = -t;
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double x = u.coord(ix), y = u.coord(iy), r2 = x * x + y * y;
      const double q = Q.at(std::sqrt(r2) / a, 1);
      u(ix, iy) = (q / a) * std::polar(1.0, r2 / (4 * t) - 1 / t);
    }
  return u;
}

ComplexField2D free_gaussian(int n, double L, double amplitude, double s2, double t) {
  ComplexField2D u(n, L, t);
  const cplx s = cplx(s2, 2 * t);
  const cplx pre = amplitude * s2 / s;
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double x = u.coord(ix), y = u.coord(iy);
      u(ix, iy) = pre * std::exp(-(x * x + y * y) / (2.0 * s));
    }
  return u;
}

ComplexField2D init_from_profile(const ProfileExpansion& e, double C0, double gamma0, double t1, int n, double L,
                                 InitReport* report, double smallness) {
  if (!(t1 < 0) || !(C0 > 0)) throw std::invalid_argument("profile initialization needs t1 < 0 and C0 > 0");
  if (!is_power_of_two(n)) throw std::invalid_argument("grid size must be a power of two");
  ParamPoint P;
  P.b = -t1 / (C0 * C0);
  P.lambda = -t1 / C0;
  if (P.norm() > smallness)
    throw std::invalid_argument("|P| = " + std::to_string(P.norm()) + " exceeds the profile smallness radius " +
                                std::to_string(smallness));
  ComplexField2D u(n, L, t1);
  if (P.lambda < 8 * u.dx())
    throw UnderResolved("lambda(t1) = " + std::to_string(P.lambda) + " is below 8 grid spacings (" +
                        std::to_string(8 * u.dx()) + ")");
  const double gamma = gamma0 - C0 * C0 / t1;
  ProfileField f(e, P);
  const double rmax = f.r_max() * P.lambda;
  const cplx phase = std::polar(1.0 / P.lambda, gamma);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double x = u.coord(ix), y = u.coord(iy);
      if (x * x + y * y > rmax * rmax) continue;
      u(ix, iy) = phase * f.qp(x / P.lambda, y / P.lambda);
    }
  if (report) {
    report->P = P;
    report->gamma = gamma;
  }
  return u;
}

std::vector<std::string> SimConfig::violations() const {
  std::vector<std::string> v;
  if (!is_power_of_two(n)) v.push_back("n must be a power of two");
  if (!(L > 0)) v.push_back("L must be positive");
  if (!(c_dt > 0)) v.push_back("c_dt must be positive");
  if (!(dt_max > 0)) v.push_back("dt_max must be positive");
  if (!(t_stop > t_start)) v.push_back("t_stop must exceed t_start");
  if (lambda_stop < 0) v.push_back("lambda_stop must be nonnegative");
  if (lambda_stop > 0 && n > 0 && !(lambda_stop > 4 * (2 * L / n)))
    v.push_back("lambda_stop must exceed 4 grid spacings");
  if (refresh < 1) v.push_back("refresh must be at least 1");
  if (series_stride < 1) v.push_back("series_stride must be at least 1");
  if (snapshot_stride < 0) v.push_back("snapshot_stride must be nonnegative");
  if (order != 2 && order != 4) v.push_back("order must be 2 or 4");
  if (!(tail_budget > 0)) v.push_back("tail_budget must be positive");
  return v;
}

double lambda_proxy(const Conserved& c, const Moments& q) {
  return std::sqrt(q.gradQ) * std::sqrt(c.mass / q.massQ) / c.grad_norm;
}

RunResult run(const SimConfig& cfg, const InhomogeneityModel* k, ComplexField2D u0, const Moments& q,
              const SnapshotSink& sink) {
  auto bad = cfg.violations();
  if (!bad.empty()) {
    std::string msg;
    for (const auto& s : bad) msg += (msg.empty() ? "" : "; ") + s;
    if (cfg.lambda_stop > 0 && cfg.lambda_stop <= 4 * (2 * cfg.L / cfg.n) && bad.size() == 1) throw UnderResolved(msg);
    throw ConfigError(msg);
  }
  if (u0.n != cfg.n || std::fabs(u0.L - cfg.L) > 1e-12 * cfg.L) throw ConfigError("initial field grid differs from config");

  SplitStep ss(cfg.n, cfg.L, k, cfg.dealias);
  RunResult res;
  res.final = std::move(u0);
  ComplexField2D& u = res.final;
  u.t = cfg.t_start;

  auto row = [&](const Conserved& c, double lam) {
    res.series.push_back({u.t, c.mass, c.energy, c.momentum[0], c.momentum[1], c.grad_norm, lam, c.tail});
  };

  double dt = 0;
  int refreshes = 0;
  for (;;) {
    if (res.steps % cfg.refresh == 0) {
      Conserved c = ss.conserved(u);
      const double lam = lambda_proxy(c, q);
      if (refreshes++ % cfg.series_stride == 0) row(c, lam);
      if (c.tail > cfg.tail_budget) {
        if (res.series.back().t != u.t) row(c, lam);
        res.stop_reason = "resolution_breach";
        res.valid = false;
        return res;
      }
      if (cfg.lambda_stop > 0 && lam < cfg.lambda_stop) {
        if (res.series.back().t != u.t) row(c, lam);
        res.stop_reason = "lambda_stop";
        return res;
      }
      dt = std::min(cfg.c_dt * lam * lam, cfg.dt_max);
    }
    double h = dt;
    const bool last = u.t + h >= cfg.t_stop;
    if (last) h = cfg.t_stop - u.t;
    if (cfg.order == 4)
      ss.step4(u, h);
    else
      ss.step(u, h);
    ++res.steps;
    if (last) u.t = cfg.t_stop;
    if (sink && cfg.snapshot_stride > 0 && res.steps % cfg.snapshot_stride == 0) {
      sink(u);
      ++res.snapshots;
    }
    if (last) {
      Conserved c = ss.conserved(u);
      row(c, lambda_proxy(c, q));
      res.stop_reason = "t_stop";
      return res;
    }
  }
}

// ---------------------------------------------------------------- snapshots

void write_snapshot(const std::string& path, const ComplexField2D& u) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  const int64_t n = u.n;
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(reinterpret_cast<const char*>(&u.L), 8);
  f.write(reinterpret_cast<const char*>(&u.t), 8);
  f.write(reinterpret_cast<const char*>(u.data.data()), static_cast<std::streamsize>(u.size() * sizeof(cplx)));
  if (!f) throw IoError("write failed for " + path);
}

ComplexField2D read_snapshot(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  int64_t n = 0;
  double L = 0, t = 0;
  f.read(reinterpret_cast<char*>(&n), 8);
  f.read(reinterpret_cast<char*>(&L), 8);
  f.read(reinterpret_cast<char*>(&t), 8);
  if (!f || n <= 0 || n > (1 << 16) || !(L > 0)) throw IoError("bad snapshot header in " + path);
  ComplexField2D u(static_cast<int>(n), L, t);
  f.read(reinterpret_cast<char*>(u.data.data()), static_cast<std::streamsize>(u.size() * sizeof(cplx)));
  if (!f) throw IoError("truncated snapshot " + path);
  return u;
}

SnapshotWriter::SnapshotWriter(std::string dir, size_t capacity) : dir_(std::move(dir)), capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("snapshot queue capacity must be positive");
  std::filesystem::create_directories(dir_);
  worker_ = std::thread([this] { loop(); });
}

SnapshotWriter::~SnapshotWriter() {
  try {
    close();
  } catch (...) {
  }
}

void SnapshotWriter::push(const ComplexField2D& u) {
  std::unique_lock<std::mutex> lock(mu_);
  if (done_) throw std::logic_error("snapshot writer is closed");
  if (error_) std::rethrow_exception(error_);
  cv_.wait(lock, [&] { return queue_.size() < capacity_ || error_; });
  if (error_) std::rethrow_exception(error_);
  char name[32];
  std::snprintf(name, sizeof name, "snap_%06d.bin", count_++);
  files_.push_back((std::filesystem::path(dir_) / name).string());
  queue_.push_back(u);
  cv_.notify_all();
}

void SnapshotWriter::loop() {
  size_t index = 0;
  for (;;) {
    ComplexField2D item;
    std::string path;
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_.wait(lock, [&] { return !queue_.empty() || done_; });
      if (queue_.empty()) return;
      item = std::move(queue_.front());
      path = files_[index++];
    }
    try {
      write_snapshot(path, item);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu_);
      if (!error_) error_ = std::current_exception();
    }
    std::lock_guard<std::mutex> lock(mu_);
    queue_.pop_front();
    cv_.notify_all();
  }
}

void SnapshotWriter::close() {
  {
    std::unique_lock<std::mutex> lock(mu_);
    if (!done_) {
      cv_.wait(lock, [&] { return queue_.empty(); });
      done_ = true;
      cv_.notify_all();
    }
  }
  if (worker_.joinable()) worker_.join();
  if (error_) std::rethrow_exception(error_);
}

std::string series_csv(const std::vector<SeriesRow>& rows) {
  std::ostringstream o;
  o.precision(17);
  o << "t,mass,energy,momentum_x,momentum_y,grad_norm,lambda_proxy\n";
  for (const auto& r : rows)
    o << r.t << ',' << r.mass << ',' << r.energy << ',' << r.px << ',' << r.py << ',' << r.grad_norm << ','
      << r.lambda_proxy << '\n';
  return o.str();
}

}  // namespace nlslab
