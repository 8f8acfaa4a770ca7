#include "nlslab/config.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nlslab/errors.hpp"
#include "nlslab/profile.hpp"

namespace nlslab {

using json = nlohmann::json;

namespace {

// Reads typed fields out of a JSON object, recording problems by path instead of throwing.
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& errs) : j_(j), path_(std::move(path)), errs_(errs) {
    if (!j_.is_object()) fail("", "expected an object");
  }
  ~Reader() {
    if (!j_.is_object()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(it.key(), "unknown key");
  }

  template <class T>
  void get(const char* key, T& out) {
    const json* v = find(key);
    if (!v) return;
    read(key, *v, out);
  }
  template <class T>
  void get(const char* key, std::optional<T>& out) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_null()) {
      out.reset();
      return;
    }
    T x{};
    if (read(key, *v, x)) out = x;
  }
  // nested object; f receives a Reader
  template <class F>
  void section(const char* key, F&& f) {
    const json* v = find(key);
    if (!v) return;
    Reader sub(*v, where(key), errs_);
    if (v->is_object()) f(sub);
  }
  void fail(const std::string& key, const std::string& msg) { errs_.push_back(where(key) + ": " + msg); }
  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }
  bool read(const char* key, const json& v, double& out) {
    if (!v.is_number()) return fail(key, "expected a number"), false;
    out = v.get<double>();
    return true;
  }
  bool read(const char* key, const json& v, int& out) {
    if (!v.is_number_integer()) return fail(key, "expected an integer"), false;
    out = v.get<int>();
    return true;
  }
  bool read(const char* key, const json& v, uint64_t& out) {
    if (!v.is_number_unsigned()) return fail(key, "expected a nonnegative integer"), false;
    out = v.get<uint64_t>();
    return true;
  }
  bool read(const char* key, const json& v, bool& out) {
    if (!v.is_boolean()) return fail(key, "expected true or false"), false;
    out = v.get<bool>();
    return true;
  }
  bool read(const char* key, const json& v, std::string& out) {
    if (!v.is_string()) return fail(key, "expected a string"), false;
    out = v.get<std::string>();
    return true;
  }
  template <size_t N>
  bool read(const char* key, const json& v, std::array<double, N>& out) {
    if (!v.is_array() || v.size() != N) return fail(key, "expected " + std::to_string(N) + " numbers"), false;
    for (size_t i = 0; i < N; ++i) {
      if (!v[i].is_number()) return fail(key, "expected " + std::to_string(N) + " numbers"), false;
      out[i] = v[i].get<double>();
    }
    return true;
  }
  bool read(const char* key, const json& v, Mat2& out) {
    bool ok = v.is_array() && v.size() == 2;
    for (size_t i = 0; ok && i < 2; ++i) {
      ok = v[i].is_array() && v[i].size() == 2 && v[i][0].is_number() && v[i][1].is_number();
      if (ok) out[i] = {v[i][0].get<double>(), v[i][1].get<double>()};
    }
    if (!ok) fail(key, "expected a 2x2 array of numbers");
    return ok;
  }
  bool read(const char* key, const json& v, std::vector<double>& out) {
    if (!v.is_array()) return fail(key, "expected an array of numbers"), false;
    std::vector<double> x;
    for (const auto& e : v) {
      if (!e.is_number()) return fail(key, "expected an array of numbers"), false;
      x.push_back(e.get<double>());
    }
    out = x;
    return true;
  }

  const json& j_;
  std::string path_;
  std::vector<std::string>& errs_;
  std::set<std::string> seen_;
};

void read_all(const json& j, RunConfig& c, std::vector<std::string>& errs) {
  Reader r(j, "", errs);
  r.get("seed", c.seed);
  r.get("output", c.output);
  r.section("model", [&](Reader& m) {
    Mat2 H = c.model.H;
    std::array<double, 4> third = c.model.third();
    double k1 = c.model.k1;
    m.get("hessian", H);
    m.get("third", third);
    m.get("k1", k1);
    c.model = InhomogeneityModel(H, third, k1);
  });
  r.get("E0", c.E0);
  r.get("C0", c.C0);
  r.section("radial", [&](Reader& s) {
    s.get("r_max", c.radial.r_max);
    s.get("points", c.radial.points);
    s.get("tol", c.radial.tol);
  });
  r.section("grid", [&](Reader& s) {
    s.get("n", c.grid.n);
    s.get("L", c.grid.L);
  });
  r.section("integrator", [&](Reader& s) {
    s.get("rtol", c.integrator.rtol);
    s.get("atol", c.integrator.atol);
  });
  r.section("profile", [&](Reader& s) {
    auto& p = c.profile;
    s.get("n_theta", p.n_theta);
    s.get("lambda_min", p.lambda_min);
    s.get("lambda_max", p.lambda_max);
    s.get("points", p.points);
    s.get("kappa_beta", p.kappa_beta);
    s.get("kappa_alpha", p.kappa_alpha);
  });
  r.section("ode", [&](Reader& s) {
    auto& o = c.ode;
    s.get("s_from", o.s_from);
    s.get("s_to", o.s_to);
    s.get("samples", o.samples);
    s.get("include_beta4", o.include_beta4);
    s.get("lambda_min", o.lambda_min);
  });
  r.section("appendix_b", [&](Reader& s) {
    auto& a = c.appendix_b;
    s.get("varsigma", a.varsigma);
    s.get("s_min", a.s_min);
    s.get("s_max", a.s_max);
    s.get("samples", a.samples);
  });
  r.section("simulate", [&](Reader& s) {
    auto& m = c.simulate;
    s.get("initial", m.initial);
    s.get("t_start", m.t_start);
    s.get("t_stop", m.t_stop);
    s.get("lambda_stop", m.lambda_stop);
    s.get("gamma0", m.gamma0);
    s.get("c_dt", m.c_dt);
    s.get("dt_max", m.dt_max);
    s.get("order", m.order);
    s.get("dealias", m.dealias);
    s.get("refresh", m.refresh);
    s.get("series_stride", m.series_stride);
    s.get("snapshot_stride", m.snapshot_stride);
    s.get("tail_budget", m.tail_budget);
  });
  r.section("analyze", [&](Reader& s) {
    auto& a = c.analyze;
    s.get("snapshots", a.snapshots);
    s.get("A", a.A);
    s.get("spacing", a.spacing);
    s.get("radius", a.radius);
    s.get("tol", a.tol);
    s.get("eps_bound", a.eps_bound);
    s.get("fit_window", a.fit_window);
    s.get("tol_soft", a.tol_soft);
  });
}

const GroundState& check_ground() {
  static const GroundState gs = make_ground_state(RadialGrid(30.0, 2048), 1e-10);
  return gs;
}

void need(std::vector<std::string>& v, bool ok, const std::string& path, const std::string& msg) {
  if (!ok) v.push_back(path + ": " + msg);
}

}  // namespace

double RunConfig::conformal_constant(const GroundState& gs) const {
  if (E0) return compute_C0(gs, *E0, model);
  return C0.value_or(2.0);
}

SimConfig RunConfig::sim_config() const {
  SimConfig s;
  s.n = grid.n;
  s.L = grid.L;
  s.c_dt = simulate.c_dt;
  s.dt_max = simulate.dt_max;
  s.t_start = simulate.t_start;
  s.t_stop = simulate.t_stop;
  s.lambda_stop = simulate.lambda_stop;
  s.dealias = simulate.dealias;
  s.order = simulate.order;
  s.refresh = simulate.refresh;
  s.series_stride = simulate.series_stride;
  s.snapshot_stride = simulate.snapshot_stride;
  s.tail_budget = simulate.tail_budget;
  return s;
}

bool RunConfig::operator==(const RunConfig& o) const {
  const auto& a = model;
  const auto& b = o.model;
  return seed == o.seed && output == o.output && a.H == b.H && a.third() == b.third() && a.k1 == b.k1 && E0 == o.E0 &&
         C0 == o.C0 && radial == o.radial && grid == o.grid && integrator == o.integrator && profile == o.profile &&
         ode == o.ode && appendix_b == o.appendix_b && simulate == o.simulate && analyze == o.analyze;
}

std::vector<std::string> config_violations(const RunConfig& c) {
  std::vector<std::string> v;
  for (const auto& m : c.model.violations(true)) v.push_back("model: " + m);
  need(v, !(c.E0 && c.C0), "E0", "give either E0 or C0, not both");
  if (c.C0) need(v, *c.C0 > 0 && std::isfinite(*c.C0), "C0", "must be positive");
  if (c.E0 && c.model.violations(true).empty()) {
    try {
      compute_C0(check_ground(), *c.E0, c.model);
    } catch (const EnergyConditionViolated& e) {
      v.push_back(std::string("E0: ") + e.what());
    }
  }
  need(v, !c.output.empty(), "output", "must not be empty");

  need(v, c.radial.r_max >= 10, "radial.r_max", "must be at least 10");
  need(v, c.radial.points >= 256, "radial.points", "must be at least 256");
  need(v, c.radial.tol > 0 && c.radial.tol < 1e-3, "radial.tol", "must lie in (0, 1e-3)");

  need(v, c.integrator.rtol > 0, "integrator.rtol", "must be positive");
  need(v, c.integrator.atol > 0, "integrator.atol", "must be positive");

  const auto& p = c.profile;
  need(v, p.n_theta >= 8 && p.n_theta % 2 == 0, "profile.n_theta", "must be even and at least 8");
  need(v, p.lambda_min > 0 && p.lambda_max > p.lambda_min, "profile.lambda_min",
       "need 0 < lambda_min < lambda_max");
  need(v, p.lambda_max <= 0.5, "profile.lambda_max", "must not exceed 0.5 (expansion regime)");
  need(v, p.points >= 3, "profile.points", "must be at least 3");

  const auto& o = c.ode;
  need(v, o.s_from > 0 && o.s_to > 0, "ode.s_from", "both s values must be positive");
  need(v, o.s_from != o.s_to, "ode.s_to", "must differ from s_from");
  need(v, o.samples >= 2, "ode.samples", "must be at least 2");
  need(v, o.lambda_min > 0, "ode.lambda_min", "must be positive");

  const auto& a = c.appendix_b;
  need(v, !a.varsigma.empty(), "appendix_b.varsigma", "must not be empty");
  for (double s : a.varsigma) need(v, s > 0, "appendix_b.varsigma", "entries must be positive");
  need(v, a.s_min > 0 && a.s_max > a.s_min, "appendix_b.s_min", "need 0 < s_min < s_max");
  need(v, a.samples >= 2, "appendix_b.samples", "must be at least 2");

  const auto& s = c.simulate;
  need(v, s.initial == "profile" || s.initial == "pseudo_conformal", "simulate.initial",
       "must be \"profile\" or \"pseudo_conformal\"");
  need(v, s.t_start < 0, "simulate.t_start", "must be negative");
  for (const auto& m : c.sim_config().violations()) v.push_back("simulate: " + m);

  const auto& z = c.analyze;
  need(v, z.A >= 10, "analyze.A", "must be at least 10");
  need(v, z.spacing > 0 && z.spacing <= 0.5, "analyze.spacing", "must lie in (0, 0.5]");
  need(v, z.radius >= 5, "analyze.radius", "must be at least 5");
  need(v, z.tol > 0, "analyze.tol", "must be positive");
  need(v, z.eps_bound > 0, "analyze.eps_bound", "must be positive");
  need(v, z.fit_window > 0 && z.fit_window <= 1, "analyze.fit_window", "must lie in (0, 1]");
  need(v, z.tol_soft >= 0, "analyze.tol_soft", "must be nonnegative");
  return v;
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text.empty() ? std::string("{}") : text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("<root>: malformed JSON: ") + e.what());
  }
  RunConfig c;
  std::vector<std::string> errs;
  read_all(j, c, errs);
  if (errs.empty()) errs = config_violations(c);
  if (!errs.empty()) {
    std::string msg;
    for (const auto& e : errs) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
  }
  return c;
}

std::string serialize_config(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output"] = c.output;
  j["model"] = {{"hessian", c.model.H}, {"third", c.model.third()}, {"k1", c.model.k1}};
  j["E0"] = c.E0 ? json(*c.E0) : json(nullptr);
  j["C0"] = c.C0 ? json(*c.C0) : json(nullptr);
  j["radial"] = {{"r_max", c.radial.r_max}, {"points", c.radial.points}, {"tol", c.radial.tol}};
  j["grid"] = {{"n", c.grid.n}, {"L", c.grid.L}};
  j["integrator"] = {{"rtol", c.integrator.rtol}, {"atol", c.integrator.atol}};
  const auto& p = c.profile;
  j["profile"] = {{"n_theta", p.n_theta}, {"lambda_min", p.lambda_min}, {"lambda_max", p.lambda_max},
                  {"points", p.points},   {"kappa_beta", p.kappa_beta}, {"kappa_alpha", p.kappa_alpha}};
  const auto& o = c.ode;
  j["ode"] = {{"s_from", o.s_from},
              {"s_to", o.s_to},
              {"samples", o.samples},
              {"include_beta4", o.include_beta4},
              {"lambda_min", o.lambda_min}};
  const auto& a = c.appendix_b;
  j["appendix_b"] = {{"varsigma", a.varsigma}, {"s_min", a.s_min}, {"s_max", a.s_max}, {"samples", a.samples}};
  const auto& s = c.simulate;
  j["simulate"] = {{"initial", s.initial},
                   {"t_start", s.t_start},
                   {"t_stop", s.t_stop},
                   {"lambda_stop", s.lambda_stop},
                   {"gamma0", s.gamma0},
                   {"c_dt", s.c_dt},
                   {"dt_max", s.dt_max},
                   {"order", s.order},
                   {"dealias", s.dealias},
                   {"refresh", s.refresh},
                   {"series_stride", s.series_stride},
                   {"snapshot_stride", s.snapshot_stride},
                   {"tail_budget", s.tail_budget}};
  const auto& z = c.analyze;
  j["analyze"] = {{"snapshots", z.snapshots}, {"A", z.A},     {"spacing", z.spacing},
                  {"radius", z.radius},       {"tol", z.tol}, {"eps_bound", z.eps_bound},
                  {"fit_window", z.fit_window}, {"tol_soft", z.tol_soft}};
  return j.dump(2) + "\n";
}

std::string apply_overrides(const std::string& text, const std::vector<std::string>& overrides) {
  json j;
  try {
    j = json::parse(text.empty() ? std::string("{}") : text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("<root>: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("<root>: expected an object");
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(o + ": override must look like key.path=value");
    const std::string key = o.substr(0, eq), raw = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    std::string ptr = "/" + key;
    for (auto& ch : ptr)
      if (ch == '.') ch = '/';
    j[json::json_pointer(ptr)] = value;
  }
  return j.dump();
}

}  // namespace nlslab
