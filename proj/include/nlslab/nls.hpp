#pragma once

#include <complex>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "nlslab/kmodel.hpp"
#include "nlslab/profile.hpp"

namespace nlslab {

using cplx = std::complex<double>;

// Uniform periodic grid on [-L, L)^2, row-major with x varying fastest.
struct ComplexField2D {
  int n = 0;
  double L = 0;
  double t = 0;
  std::vector<cplx> data;

  ComplexField2D() = default;
  ComplexField2D(int n_, double L_, double t_ = 0);

  double dx() const { return 2 * L / n; }
  double coord(int i) const { return -L + i * dx(); }
  cplx& operator()(int ix, int iy) { return data[static_cast<size_t>(iy) * n + ix]; }
  cplx operator()(int ix, int iy) const { return data[static_cast<size_t>(iy) * n + ix]; }
  size_t size() const { return data.size(); }
};

bool is_power_of_two(int n);

struct Conserved {
  double mass = 0;
  double energy = 0;  // 1/2 int |grad u|^2 - 1/4 int k |u|^4
  double momentum[2] = {0, 0};
  double grad_norm = 0;  // || grad u ||_{L2}
  double tail = 0;       // spectral energy fraction beyond 2/3 of the Nyquist band
};

// Split-step Fourier solver for i u_t = -Lap u - k(x)|u|^2 u on a fixed grid.
class SplitStep {
 public:
  // k = nullptr means k = 1
  SplitStep(int n, double L, const InhomogeneityModel* k, bool dealias = true);
  ~SplitStep();
  SplitStep(const SplitStep&) = delete;
  SplitStep& operator=(const SplitStep&) = delete;

  int n() const { return n_; }
  double L() const { return L_; }
  bool dealias() const { return dealias_; }
  const std::vector<double>& k_grid() const { return kx_; }

  // One Strang step: half nonlinear phase, linear step, half nonlinear phase. Throws NaNDetected.
  void step(ComplexField2D& u, double dt);
  // Fourth-order symmetric splitting: seven nonlinear and six linear substeps.
  void step4(ComplexField2D& u, double dt);
  Conserved conserved(const ComplexField2D& u) const;
  // spectral gradient (d/dx, d/dy) of u
  void gradient(const ComplexField2D& u, ComplexField2D& gx, ComplexField2D& gy) const;
  // u(x) <- u(x + d) by a Fourier phase ramp
  void shift(ComplexField2D& u, double d0, double d1) const;

 private:
  void nonlinear(ComplexField2D& u, double h) const;
  void linear(ComplexField2D& u, double dt);  // exact free flow, dealias mask applied
  void forward(cplx* a) const;
  void backward(cplx* a) const;  // normalized
  const std::vector<cplx>& propagator(double dt);

  int n_;
  double L_;
  bool dealias_;
  std::vector<double> xi_;    // angular wavenumbers per index
  std::vector<double> kx_;    // k(x) on the grid, empty when k = 1
  std::vector<char> keep_;    // dealias mask per index
  // exp(-i |xi|^2 dt) * mask for the last few step sizes
  std::vector<std::pair<double, std::vector<cplx>>> props_;
  mutable std::vector<cplx> work_;
  void* plan_f_ = nullptr;
  void* plan_b_ = nullptr;
};

// S(t, x) = |t|^{-1} Q(|x|/|t|) exp(i|x|^2/(4t) - i/t), t < 0.
ComplexField2D pseudo_conformal(const RadialFunction& Q, int n, double L, double t);

// Free Schrodinger evolution of A exp(-|x|^2 / (2 s2)) after time t.
ComplexField2D free_gaussian(int n, double L, double amplitude, double s2, double t);

// u(t1) = lambda^{-1} Q_P(x / lambda) e^{i gamma} with b = -t1/C0^2, lambda = -t1/C0,
// alpha = beta = 0 and gamma = gamma0 - C0^2/t1. Throws UnderResolved.
struct InitReport {
  ParamPoint P;
  double gamma = 0;
};
ComplexField2D init_from_profile(const ProfileExpansion& e, double C0, double gamma0, double t1, int n, double L,
                                 InitReport* report = nullptr, double smallness = 0.3);

struct SimConfig {
  int n = 512;
  double L = 12;
  double c_dt = 0.05;  // dt = c_dt lambda_est^2
  double dt_max = 1e-2;
  double t_start = -0.5;
  double t_stop = 0;   // run stops at t_stop or at lambda_stop, whichever comes first
  double lambda_stop = 0;
  bool dealias = true;
  int order = 2;             // 2 (Strang) or 4
  int refresh = 10;          // steps between lambda_est refreshes
  int series_stride = 1;     // refreshes between series rows
  int snapshot_stride = 0;   // steps between snapshots, 0 = none
  double tail_budget = 1e-6;

  // every violation, empty when valid
  std::vector<std::string> violations() const;
};

struct SeriesRow {
  double t, mass, energy, px, py, grad_norm, lambda_proxy, tail;
};

struct RunResult {
  ComplexField2D final;
  std::vector<SeriesRow> series;
  std::string stop_reason;  // "t_stop", "lambda_stop", "resolution_breach"
  bool valid = true;
  int steps = 0;
  int snapshots = 0;
};

using SnapshotSink = std::function<void(const ComplexField2D&)>;

// lambda_est = ||grad Q|| sqrt(mass / int Q^2) / ||grad u||
double lambda_proxy(const Conserved& c, const Moments& q);

RunResult run(const SimConfig& cfg, const InhomogeneityModel* k, ComplexField2D u0, const Moments& q,
              const SnapshotSink& sink = {});

// ---------------------------------------------------------------- snapshot files

// header: n (int64), L, t (float64), little-endian; payload row-major re/im float64 pairs
void write_snapshot(const std::string& path, const ComplexField2D& u);
ComplexField2D read_snapshot(const std::string& path);

// Writes snapshots from a background thread. push() blocks while the queue is full.
class SnapshotWriter {
 public:
  SnapshotWriter(std::string dir, size_t capacity = 4);
  ~SnapshotWriter();
  void push(const ComplexField2D& u);
  // waits for the queue to drain; rethrows the first write error
  void close();
  const std::vector<std::string>& files() const { return files_; }

 private:
  void loop();

  std::string dir_;
  size_t capacity_;
  std::deque<ComplexField2D> queue_;
  std::vector<std::string> files_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool done_ = false;
  int count_ = 0;
  std::exception_ptr error_;
  std::thread worker_;
};

std::string series_csv(const std::vector<SeriesRow>& rows);

}  // namespace nlslab
