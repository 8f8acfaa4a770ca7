#include "nlslab/orchestrate.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "nlslab/errors.hpp"
#include "nlslab/linop.hpp"
#include "nlslab/modeqs.hpp"
#include "nlslab/modfit.hpp"
#include "nlslab/profile.hpp"

namespace nlslab {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr)) throw IoError("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s = {"ground-state", "verify",   "profile", "ode",
                                             "appendix-b",   "simulate", "analyze"};
  return s;
}

fs::path resolve_output(const RunConfig& cfg, const std::string& flag_out) {
  fs::path p = flag_out.empty() ? fs::path(cfg.output) : fs::path(flag_out);
  if (p.is_relative())
    if (const char* root = std::getenv("NLSLAB_OUT"); root && *root) p = fs::path(root) / p;
  return p;
}

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_row(std::initializer_list<double> xs) {
  std::string s;
  for (double x : xs) s += (s.empty() ? "" : ",") + num(x);
  return s + "\n";
}

std::vector<double> logspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a * std::pow(b / a, double(i) / (n - 1));
  return v;
}

// Files emitted by one subcommand
class Emitter {
 public:
  explicit Emitter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
  const fs::path& dir() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
    if (!out) throw IoError("cannot write " + p.string());
    add(name);
  }
  void json_file(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
  void add(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }

  void manifest(const std::string& sub, const RunConfig& cfg, int status) {
    json files = json::array();
    for (const auto& f : files_) {
      const fs::path p = dir_ / f;
      files.push_back({{"path", f}, {"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}});
    }
    json m = {{"subcommand", sub},
              {"seed", cfg.seed},
              {"exit_code", status},
              {"config", json::parse(serialize_config(cfg))},
              {"files", files}};
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    out << m.dump(2) << "\n";
    if (!out) throw IoError("cannot write manifest");
  }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

struct Context {
  Context(const RunConfig& c, Emitter& e, std::ostream& l) : cfg(c), out(e), log(l) {}
  const RunConfig& cfg;
  Emitter& out;
  std::ostream& log;

  const GroundState& ground() {
    if (!gs_) {
      gs_ = std::make_shared<GroundState>(
          make_ground_state(RadialGrid(cfg.radial.r_max, cfg.radial.points), cfg.radial.tol));
      log << "ground state: Q(0) = " << gs_->Q.values[0] << ", int Q^2 = " << gs_->moments.massQ << "\n";
    }
    return *gs_;
  }
  std::shared_ptr<const LinOps> ops() {
    if (!ops_) ops_ = std::make_shared<const LinOps>(ground());
    return ops_;
  }

 private:
  std::shared_ptr<GroundState> gs_;
  std::shared_ptr<const LinOps> ops_;
};

bool homogeneous_run(const RunConfig& cfg) { return cfg.simulate.initial == "pseudo_conformal"; }

// expansion matching the simulated equation (k = 1 and C0 = 1 for the exact solution)
ProfileExpansion run_expansion(Context& c) {
  if (homogeneous_run(c.cfg))
    return build_expansion(c.ops(), InhomogeneityModel({{{0, 0}, {0, 0}}}, {0, 0, 0, 0}, c.cfg.model.k1), 1.0,
                           false);
  return build_expansion(c.ops(), c.cfg.model, c.cfg.conformal_constant(c.ground()));
}

int cmd_ground_state(Context& c) {
  const auto& gs = c.ground();
  c.out.write("ground_state.json", ground_state_json(gs));
  c.out.write("ground_state.csv", ground_state_csv(gs));
  return kOk;
}

int cmd_verify(Context& c) {
  json ids = json::array();
  bool ok = true;
  for (const auto& r : identity_suite(*c.ops())) {
    ids.push_back({{"name", r.name}, {"residual", r.residual}, {"threshold", r.threshold}, {"pass", r.pass()}});
    ok = ok && r.pass();
    c.log << (r.pass() ? "PASS " : "FAIL ") << r.name << " " << r.residual << "\n";
  }
  // two formulas for a1 on the configured model and on random negative-definite hessians
  std::mt19937_64 rng(c.cfg.seed);
  std::uniform_real_distribution<double> eig(-1.5, -0.2), ang(0, M_PI);
  std::vector<InhomogeneityModel> models = {c.cfg.model};
  for (int i = 0; i < 3; ++i) {
    const double l0 = eig(rng), l1 = eig(rng), th = ang(rng), cs = std::cos(th), sn = std::sin(th);
    Mat2 H{{{l0 * cs * cs + l1 * sn * sn, (l0 - l1) * cs * sn}, {(l0 - l1) * cs * sn, l0 * sn * sn + l1 * cs * cs}}};
    models.emplace_back(H, std::array<double, 4>{0, 0, 0, 0}, 0.5);
  }
  json a1 = json::array();
  for (const auto& m : models) {
    const auto k = derive_constants(*c.ops(), m);
    const double rel = std::fabs(k.a1_projection - k.a1) / std::fabs(k.a1);
    const bool pass = rel < 1e-6 && k.a1 > 0;
    ok = ok && pass;
    a1.push_back({{"hessian", m.H}, {"a1", k.a1}, {"a1_projection", k.a1_projection}, {"relative", rel}, {"pass", pass}});
    c.log << (pass ? "PASS " : "FAIL ") << "a1 cross-check " << rel << "\n";
  }
  c.out.json_file("verify.json", {{"identities", ids}, {"a1", a1}, {"pass", ok}});
  return ok ? kOk : kChecksFailed;
}

int cmd_profile(Context& c) {
  const auto& cfg = c.cfg;
  const double C0 = cfg.conformal_constant(c.ground());
  const auto e = build_expansion(c.ops(), cfg.model, C0);
  json constants = json::parse(constants_json(e.constants()));
  json solves = json::array();
  for (const auto& s : e.solves()) solves.push_back({{"name", s.name}, {"mode", s.mode}, {"projection", s.projection}});

  std::vector<double> ls, psi, mass, energy;
  std::string csv = "lambda,psi_l2w,psi_h1w,mass_dev,energy_dev\n";
  PsiOptions po;
  po.n_theta = cfg.profile.n_theta;
  for (double l : logspace(cfg.profile.lambda_min, cfg.profile.lambda_max, cfg.profile.points)) {
    const ParamPoint P = conformal_ray(l, C0, cfg.profile.kappa_beta, cfg.profile.kappa_alpha);
    const auto r = residual_Psi(e, P, po);
    const auto inv = profile_invariants(e, P, cfg.profile.n_theta);
    csv += csv_row({l, r.l2w, r.h1w, inv.mass_dev, inv.energy_dev});
    ls.push_back(l);
    psi.push_back(r.l2w);
    mass.push_back(std::fabs(inv.mass_dev));
    energy.push_back(std::fabs(inv.energy_dev));
  }
  c.out.write("profile_scaling.csv", csv);
  const json slopes = {{"psi", loglog_slope(ls, psi)}, {"mass_dev", loglog_slope(ls, mass)},
                       {"energy_dev", loglog_slope(ls, energy)}};
  c.log << "residual slope " << slopes["psi"].get<double>() << "\n";
  c.out.json_file("profile.json", {{"C0", C0}, {"constants", constants}, {"solves", solves}, {"slopes", slopes}});
  return kOk;
}

int cmd_ode(Context& c) {
  const auto& o = c.cfg.ode;
  const double C0 = c.cfg.conformal_constant(c.ground());
  ModLaw law = ModLaw::from(derive_constants(*c.ops(), c.cfg.model));
  law.include_beta4 = o.include_beta4;
  ModOptions opt;
  opt.rtol = c.cfg.integrator.rtol;
  opt.atol = c.cfg.integrator.atol;
  opt.lambda_min = o.lambda_min;
  opt.output = logspace(o.s_from, o.s_to, o.samples);
  const auto tr = integrate(conformal_data(-C0 * C0 / o.s_from, C0), law, o.s_to, opt);

  std::string csv = "s,t,b,lambda,beta1,beta2,alpha1,alpha2,gamma,b_over_lambda_dev\n";
  double worst = 0;
  for (const auto& p : tr.points) {
    csv += csv_row({p.s, p.t, p.b, p.lambda, p.beta[0], p.beta[1], p.alpha[0], p.alpha[1], p.gamma,
                    p.b / p.lambda - 1 / C0});
    worst = std::max(worst, std::fabs(p.b / p.lambda - 1 / C0) / (p.lambda * p.lambda));
  }
  c.out.write("ode.csv", csv);
  const auto& end = tr.points.back();
  c.out.json_file("ode.json", {{"C0", C0},
                               {"stop_reason", tr.stop_reason},
                               {"steps", tr.steps},
                               {"max_b_over_lambda_dev_per_lambda2", worst},
                               {"lambda_s_end", end.lambda * end.s},
                               {"s_end", end.s}});
  return kOk;
}

int cmd_appendix_b(Context& c) {
  const auto& a = c.cfg.appendix_b;
  const Forcing F = [](double s) {
    return Vec2{std::sin(s) * std::pow(s, -3), std::cos(2 * std::log(s)) * std::pow(s, -4)};
  };
  const auto zero = [](double) { return Vec2{0, 0}; };
  const char* kinds[] = {"power", "critical", "oscillatory"};
  std::string csv = "varsigma,s,Z1,Z2,lhs,rhs,ratio\n";
  json rows = json::array();
  bool ok = true;
  for (double vs : a.varsigma) {
    const auto sys = appendixB_basis(vs);
    // closed-form basis against direct integration
    const auto at = logspace(1, a.s_max, 30);
    double basis_err = 0;
    for (int which = 0; which < 2; ++which) {
      auto Zc = [&](double s) { return which ? sys.Zminus(s) : sys.Zplus(s); };
      const auto num = appendixB_integrate(sys, zero, 1.0, Zc(1.0), at);
      for (size_t i = 0; i < at.size(); ++i) {
        const Vec2 ex = Zc(at[i]);
        const double scale = std::sqrt(at[i]) * (1 + std::log(at[i]));
        basis_err = std::max({basis_err, std::fabs(num[i][0] - ex[0]) / scale,
                              at[i] * std::fabs(num[i][1] - ex[1]) / scale});
      }
    }
    AppendixBOptions o1, o2;
    o1.s_min = o2.s_min = a.s_min;
    o1.s_max = a.s_max;
    o2.s_max = 2 * a.s_max;
    o1.samples = a.samples;
    // same logarithmic spacing over the doubled range
    o2.samples = a.samples + static_cast<int>(std::lround((a.samples - 1) * std::log(2.0) / std::log(a.s_max / a.s_min)));
    const auto r1 = appendixB_solve(sys, F, o1);
    const auto r2 = appendixB_solve(sys, F, o2);
    for (const auto& s : r1.samples) csv += csv_row({vs, s.s, s.Z[0], s.Z[1], s.lhs, s.rhs, s.ratio});
    const double drift = std::fabs(r2.max_ratio - r1.max_ratio) / r1.max_ratio;
    const bool pass = basis_err <= 1e-8 && std::isfinite(r1.max_ratio) && drift <= 0.05;
    ok = ok && pass;
    rows.push_back({{"varsigma", vs},
                    {"kind", kinds[static_cast<int>(sys.kind)]},
                    {"wronskian", sys.W},
                    {"basis_error", basis_err},
                    {"max_ratio", r1.max_ratio},
                    {"max_ratio_doubled", r2.max_ratio},
                    {"pass", pass}});
    c.log << (pass ? "PASS " : "FAIL ") << "varsigma " << vs << " basis error " << basis_err << " ratio "
          << r1.max_ratio << " -> " << r2.max_ratio << "\n";
  }
  c.out.write("appendix_b.csv", csv);
  c.out.json_file("appendix_b.json", {{"systems", rows}, {"pass", ok}});
  return ok ? kOk : kChecksFailed;
}

int cmd_simulate(Context& c) {
  const auto& cfg = c.cfg;
  const auto& gs = c.ground();
  const bool flat = homogeneous_run(cfg);
  const InhomogeneityModel* k = flat ? nullptr : &cfg.model;
  ComplexField2D u0;
  json init;
  if (flat) {
    u0 = pseudo_conformal(gs.Q, cfg.grid.n, cfg.grid.L, cfg.simulate.t_start);
    init = {{"initial", "pseudo_conformal"}, {"C0", 1.0}};
  } else {
    const double C0 = cfg.conformal_constant(gs);
    const auto e = build_expansion(c.ops(), cfg.model, C0);
    InitReport rep;
    u0 = init_from_profile(e, C0, cfg.simulate.gamma0, cfg.simulate.t_start, cfg.grid.n, cfg.grid.L, &rep);
    init = {{"initial", "profile"}, {"C0", C0}, {"b", rep.P.b}, {"lambda", rep.P.lambda}, {"gamma", rep.gamma}};
  }

  const fs::path snapdir = c.out.dir() / "snapshots";
  fs::remove_all(snapdir);
  std::unique_ptr<SnapshotWriter> writer;
  SnapshotSink sink;
  if (cfg.simulate.snapshot_stride > 0) {
    writer = std::make_unique<SnapshotWriter>(snapdir.string());
    sink = [&](const ComplexField2D& u) { writer->push(u); };
  }
  const auto res = run(cfg.sim_config(), k, std::move(u0), gs.moments, sink);
  if (writer) {
    writer->close();
    for (const auto& f : writer->files()) c.out.add(fs::relative(fs::path(f), c.out.dir()).string());
  }
  c.out.write("series.csv", series_csv(res.series));
  write_snapshot((c.out.dir() / "final.bin").string(), res.final);
  c.out.add("final.bin");
  const auto& last = res.series.back();
  const auto& first = res.series.front();
  c.out.json_file("simulate.json", {{"init", init},
                                    {"stop_reason", res.stop_reason},
                                    {"valid", res.valid},
                                    {"steps", res.steps},
                                    {"snapshots", res.snapshots},
                                    {"t_end", res.final.t},
                                    {"lambda_end", last.lambda_proxy},
                                    {"mass_drift", std::fabs(last.mass - first.mass) / first.mass}});
  c.log << "simulate: " << res.steps << " steps to t = " << res.final.t << " (" << res.stop_reason << ")\n";
  return res.valid ? kOk : kChecksFailed;
}

int cmd_analyze(Context& c) {
  const auto& cfg = c.cfg;
  const auto& gs = c.ground();
  const fs::path snapdir = cfg.analyze.snapshots.empty() ? c.out.dir() / "snapshots" : fs::path(cfg.analyze.snapshots);
  if (!fs::is_directory(snapdir)) throw IoError("no snapshot directory " + snapdir.string());
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(snapdir))
    if (de.path().extension() == ".bin") files.push_back(de.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no snapshots in " + snapdir.string());

  const bool flat = homogeneous_run(cfg);
  const InhomogeneityModel* k = flat ? nullptr : &cfg.model;
  const auto e = run_expansion(c);
  const double C0 = e.C0();
  DecomposeOptions dopt;
  dopt.spacing = cfg.analyze.spacing;
  dopt.radius = cfg.analyze.radius;
  dopt.tol = cfg.analyze.tol;
  dopt.eps_bound = cfg.analyze.eps_bound;
  Decomposer dec(e, dopt);
  const double A = cfg.analyze.A;

  std::string csv =
      "t,b,lambda,alpha1,alpha2,beta1,beta2,gamma,eps_L2,eps_H1,b_over_lambda,I_value,virial_boundary\n";
  std::vector<double> ts, lams, bl, vir, ss;
  json gaps = json::array();
  bool have = false;
  ModState guess, last;
  double proxy_last = 0;
  double s_clock = 0, t_prev = 0;
  std::unique_ptr<SplitStep> probe;
  for (const auto& f : files) {
    const auto u = read_snapshot(f.string());
    if (!probe || probe->n() != u.n || probe->L() != u.L) probe = std::make_unique<SplitStep>(u.n, u.L, k, false);
    const auto cons = probe->conserved(u);
    const double proxy = lambda_proxy(cons, gs.moments);
    if (!have) {
      // centre and phase from the peak, size from the gradient proxy
      size_t imax = 0;
      for (size_t i = 0; i < u.size(); ++i)
        if (std::norm(u.data[i]) > std::norm(u.data[imax])) imax = i;
      guess = ModState{};
      guess.lambda = proxy;
      guess.b = proxy / C0;
      guess.alpha = {u.coord(static_cast<int>(imax % u.n)), u.coord(static_cast<int>(imax / u.n))};
      guess.gamma = std::arg(u.data[imax]);
    } else {
      guess = advance_guess(last, u.t, proxy / proxy_last);
    }
    guess.t = u.t;
    try {
      const auto d = dec(u, guess);
      const auto w = modulated_field(e, d.params, u.n, u.L);
      const auto& p = d.params;
      const double I = lyapunov_I(d, u, w, A, k);
      const double V = virial_boundary(d, A, gs.moments);
      csv += csv_row({u.t, p.b, p.lambda, p.alpha[0], p.alpha[1], p.beta[0], p.beta[1], p.gamma, d.eps_L2, d.eps_H1,
                      p.b / p.lambda, I, V});
      if (!ts.empty()) s_clock += (u.t - t_prev) / (0.5 * (p.lambda * p.lambda + lams.back() * lams.back()));
      ts.push_back(u.t);
      lams.push_back(p.lambda);
      bl.push_back(p.b / p.lambda);
      vir.push_back(V);
      ss.push_back(s_clock);
      t_prev = u.t;
      last = p;
      proxy_last = proxy;
      have = true;
    } catch (const NewtonDiverged& ex) {
      gaps.push_back({{"t", u.t}, {"file", f.filename().string()}, {"error", ex.what()}});
      c.log << "gap at t = " << u.t << ": " << ex.what() << "\n";
    }
  }
  c.out.write("parameters.csv", csv);

  json report = {{"C0_theory", C0}, {"decomposed", ts.size()}, {"gaps", gaps}};
  int status = kOk;
  try {
    const auto fit = fit_rate(ts, lams, cfg.analyze.fit_window);
    report["fit"] = {{"T_est", fit.T_est},   {"C0_est", fit.C0_est}, {"residual", fit.residual},
                     {"t_from", fit.t_from}, {"t_to", fit.t_to},     {"samples", fit.samples}};
    report["C0_relative_error"] = std::fabs(fit.C0_est - C0) / C0;
    double worst = 0;
    for (size_t i = 0; i < ts.size(); ++i)
      if (ts[i] >= fit.t_from) worst = std::max(worst, std::fabs(bl[i] - 1 / C0));
    report["max_b_over_lambda_dev"] = worst;
  } catch (const Error& ex) {
    report["fit_error"] = {{"kind", ex.kind()}, {"message", ex.what()}};
    status = kChecksFailed;
  } catch (const std::invalid_argument& ex) {
    report["fit_error"] = {{"kind", "invalid_argument"}, {"message", ex.what()}};
    status = kChecksFailed;
  }
  // soft monotonicity of the boundary term in the rescaled clock
  double min_rate = 0;
  for (size_t i = 1; i < ss.size(); ++i)
    if (ss[i] > ss[i - 1]) min_rate = std::min(min_rate, (vir[i] - vir[i - 1]) / (ss[i] - ss[i - 1]));
  report["virial_min_s_rate"] = min_rate;
  report["virial_soft_monotone"] = min_rate >= -cfg.analyze.tol_soft;
  c.out.json_file("analyze.json", report);
  return status;
}

}  // namespace

int orchestrate(const std::string& subcommand, const RunConfig& cfg, const fs::path& dir, std::ostream& log) {
  Emitter out(dir);
  Context c{cfg, out, log};
  int status;
  if (subcommand == "ground-state")
    status = cmd_ground_state(c);
  else if (subcommand == "verify")
    status = cmd_verify(c);
  else if (subcommand == "profile")
    status = cmd_profile(c);
  else if (subcommand == "ode")
    status = cmd_ode(c);
  else if (subcommand == "appendix-b")
    status = cmd_appendix_b(c);
  else if (subcommand == "simulate")
    status = cmd_simulate(c);
  else if (subcommand == "analyze")
    status = cmd_analyze(c);
  else
    throw ConfigError("unknown subcommand " + subcommand);
  out.write("config.json", serialize_config(cfg));
  out.manifest(subcommand, cfg, status);
  return status;
}

int run_command(const std::string& subcommand, const std::string& config_text,
                const std::vector<std::string>& overrides, const std::string& flag_out, std::ostream& log,
                std::ostream& err) {
  fs::path dir = resolve_output(RunConfig{}, flag_out);
  auto record = [&](int code, const std::string& kind, const std::string& msg) {
    const json j = {{"subcommand", subcommand}, {"exit_code", code}, {"kind", kind}, {"message", msg}};
    err << j.dump() << "\n";
    try {
      fs::create_directories(dir);
      std::ofstream(dir / "error.json") << j.dump(2) << "\n";
    } catch (...) {
      // the stream record above is the fallback
    }
    return code;
  };
  try {
    const RunConfig cfg = parse_config(apply_overrides(config_text, overrides));
    dir = resolve_output(cfg, flag_out);
    fs::remove(dir / "error.json");
    return orchestrate(subcommand, cfg, dir, log);
  } catch (const ConfigError& e) {
    return record(kConfigInvalid, e.kind(), e.what());
  } catch (const Error& e) {
    return record(kRuntimeError, e.kind(), e.what());
  } catch (const std::exception& e) {
    return record(kRuntimeError, "exception", e.what());
  }
}

}  // namespace nlslab
