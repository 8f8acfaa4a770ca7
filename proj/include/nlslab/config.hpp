#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nlslab/kmodel.hpp"
#include "nlslab/nls.hpp"

namespace nlslab {

struct RadialConfig {
  double r_max = 30;
  int points = 8192;
  double tol = 1e-10;
  bool operator==(const RadialConfig&) const = default;
};

struct GridConfig {
  int n = 512;
  double L = 12;
  bool operator==(const GridConfig&) const = default;
};

struct IntegratorConfig {
  double rtol = 1e-10, atol = 1e-12;
  bool operator==(const IntegratorConfig&) const = default;
};

struct ProfileRunConfig {
  int n_theta = 64;
  double lambda_min = 0.01, lambda_max = 0.1;
  int points = 7;
  Vec2 kappa_beta{0, 0}, kappa_alpha{0, 0};
  bool operator==(const ProfileRunConfig&) const = default;
};

struct OdeConfig {
  double s_from = 1e3, s_to = 10;  // conformal data at s_from, propagated to s_to
  int samples = 60;
  bool include_beta4 = false;
  double lambda_min = 1e-6;
  bool operator==(const OdeConfig&) const = default;
};

struct AppendixBConfig {
  std::vector<double> varsigma{0.05, 0.125, 0.5};
  double s_min = 2, s_max = 1e3;
  int samples = 200;
  bool operator==(const AppendixBConfig&) const = default;
};

struct SimulateConfig {
  std::string initial = "profile";  // "profile" or "pseudo_conformal" (k = 1)
  double t_start = -0.3, t_stop = 0, lambda_stop = 0;
  double gamma0 = 0;
  double c_dt = 0.05, dt_max = 1e-2;
  int order = 2;
  bool dealias = true;
  int refresh = 10, series_stride = 1, snapshot_stride = 0;
  double tail_budget = 1e-6;
  bool operator==(const SimulateConfig&) const = default;
};

struct AnalyzeConfig {
  std::string snapshots;  // empty = <out>/snapshots
  double A = 20;
  double spacing = 0.15, radius = 20, tol = 1e-9, eps_bound = 1.0;
  double fit_window = 0.5;
  double tol_soft = 1e-3;
  bool operator==(const AnalyzeConfig&) const = default;
};

struct RunConfig {
  uint64_t seed = 0;
  std::string output = "out";
  InhomogeneityModel model;
  // exactly one of E0 and C0 is used; C0 wins when both are absent
  std::optional<double> E0;
  std::optional<double> C0;
  RadialConfig radial;
  GridConfig grid;
  IntegratorConfig integrator;
  ProfileRunConfig profile;
  OdeConfig ode;
  AppendixBConfig appendix_b;
  SimulateConfig simulate;
  AnalyzeConfig analyze;

  // C0 from the configured energy, or the configured C0 (default 2)
  double conformal_constant(const GroundState& gs) const;
  SimConfig sim_config() const;
  bool operator==(const RunConfig& o) const;
};

// Parses JSON text and validates it. Throws ConfigError listing every violation,
// one "path: message" per line.
RunConfig parse_config(const std::string& text);
// Every violation of an already parsed config, empty when valid.
std::vector<std::string> config_violations(const RunConfig& c);
std::string serialize_config(const RunConfig& c);

// key.path=value overrides applied to config text before parsing; value is JSON or a bare string.
std::string apply_overrides(const std::string& text, const std::vector<std::string>& overrides);

}  // namespace nlslab
