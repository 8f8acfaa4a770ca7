#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nlslab/errors.hpp"
#include "nlslab/orchestrate.hpp"
#include "test_main.hpp"

using namespace nlslab;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / (std::string("nlslab_cli_") + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string violations_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// short exact-solution run with enough snapshots for a fit
const char* kExactRun = R"({
  "grid": {"n": 256, "L": 8},
  "simulate": {"initial": "pseudo_conformal", "t_start": -0.5, "t_stop": -0.4, "dt_max": 0.001,
               "order": 4, "snapshot_stride": 10},
  "analyze": {"fit_window": 1.0}
})";

}  // namespace

TEST_CASE("minimal config fills defaults and validates") {
  const auto c = parse_config("{}");
  CHECK(c.model.H[0][0] == -1.0);
  CHECK(c.model.H[1][1] == -1.0);
  CHECK(c.model.k1 == 0.5);
  CHECK(c.grid.n == 512);
  CHECK(c.conformal_constant(make_ground_state(RadialGrid(30.0, 1024))) == 2.0);
  CHECK(config_violations(c).empty());
  CHECK(parse_config("").grid.n == 512);
}

TEST_CASE("physically invalid models are rejected") {
  CHECK(violations_of(R"({"model": {"hessian": [[0.3, 0], [0, -1]]}})").find("hessian not negative definite") !=
        std::string::npos);
  CHECK(violations_of(R"({"model": {"k1": 1.5}})").find("model: k1") != std::string::npos);
  CHECK(violations_of(R"({"model": {"hessian": [[-1, 0.2], [0.1, -1]]}})").find("not symmetric") !=
        std::string::npos);
}

TEST_CASE("every violation is reported with its path") {
  const std::string msg = violations_of(R"({"grid": {"n": "big"}, "simulate": {"order": 3.5}, "colour": 1,
                                          "analyze": {"A": 20, "extra": true}})");
  CHECK(msg.find("grid.n: expected an integer") != std::string::npos);
  CHECK(msg.find("simulate.order: expected an integer") != std::string::npos);
  CHECK(msg.find("colour: unknown key") != std::string::npos);
  CHECK(msg.find("analyze.extra: unknown key") != std::string::npos);

  const std::string phys = violations_of(R"({"model": {"k1": 1.5}, "grid": {"n": 500}, "C0": -1,
                                           "analyze": {"A": 5}, "simulate": {"initial": "gaussian"}})");
  for (const char* s : {"model: k1", "simulate: n must be a power of two", "C0: must be positive", "analyze.A",
                        "simulate.initial"})
    CHECK_MESSAGE(phys.find(s) != std::string::npos, s);
  CHECK(std::count(phys.begin(), phys.end(), '\n') >= 4);

  CHECK(violations_of("{\"grid\": ").find("malformed JSON") != std::string::npos);
  CHECK(violations_of(R"({"E0": 0.1, "C0": 2})").find("E0: give either") != std::string::npos);
  // E0 far below -int H(y,y)Q^4/8 leaves no blow-up element
  CHECK(violations_of(R"({"E0": -100})").find("E0:") != std::string::npos);
}

TEST_CASE("serialization round-trips") {
  const auto a = parse_config(R"({"seed": 17, "output": "runs/a", "E0": 1.0,
    "model": {"hessian": [[-0.7, 0.1], [0.1, -0.4]], "third": [0.1, 0, -0.05, 0.02], "k1": 0.3},
    "grid": {"n": 1024, "L": 5.5}, "appendix_b": {"varsigma": [0.2, 0.7]},
    "simulate": {"order": 4, "c_dt": 0.003, "lambda_stop": 0.05, "dealias": false},
    "analyze": {"snapshots": "elsewhere", "fit_window": 0.25}})");
  const std::string s = serialize_config(a);
  const auto b = parse_config(s);
  CHECK(a == b);
  CHECK(serialize_config(b) == s);
  CHECK(b.E0.value() == 1.0);
  CHECK(!b.C0);
  CHECK(b.model.third()[3] == 0.02);
  CHECK(parse_config(serialize_config(parse_config("{}"))) == parse_config("{}"));
}

TEST_CASE("overrides and output root") {
  const auto c = parse_config(apply_overrides(R"({"grid": {"n": 512}})",
                                              {"grid.n=256", "simulate.initial=pseudo_conformal", "seed=9"}));
  CHECK(c.grid.n == 256);
  CHECK(c.simulate.initial == "pseudo_conformal");
  CHECK(c.seed == 9);
  CHECK_THROWS_AS(apply_overrides("{}", {"novalue"}), ConfigError);

  RunConfig r;
  r.output = "rel";
  ::setenv("NLSLAB_OUT", "/tmp/root_here", 1);
  CHECK(resolve_output(r, "") == fs::path("/tmp/root_here/rel"));
  CHECK(resolve_output(r, "/abs/x") == fs::path("/abs/x"));
  ::unsetenv("NLSLAB_OUT");
  CHECK(resolve_output(r, "") == fs::path("rel"));
}

TEST_CASE("sha256") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("verify passes and the manifest hashes what was written") {
  const auto dir = scratch_dir("verify");
  std::ostringstream log, err;
  CHECK(run_command("verify", "{}", {}, dir.string(), log, err) == kOk);
  const auto report = json::parse(slurp(dir / "verify.json"));
  CHECK(report["pass"] == true);
  CHECK(report["identities"].size() >= 7);
  const auto m = json::parse(slurp(dir / "manifest.json"));
  CHECK(m["subcommand"] == "verify");
  CHECK(m["exit_code"] == 0);
  bool seen = false;
  for (const auto& f : m["files"]) {
    CHECK(f["sha256"] == sha256_file(dir / f["path"].get<std::string>()));
    seen = seen || f["path"] == "verify.json";
  }
  CHECK(seen);
  CHECK(!fs::exists(dir / "error.json"));
}

TEST_CASE("simulate then analyze covers the run window, deterministically") {
  const auto dir = scratch_dir("sim");
  std::ostringstream log, err;
  REQUIRE(run_command("simulate", kExactRun, {}, dir.string(), log, err) == kOk);
  const auto sim = json::parse(slurp(dir / "simulate.json"));
  CHECK(sim["valid"] == true);
  CHECK(sim["snapshots"] == 10);
  REQUIRE(run_command("analyze", kExactRun, {}, dir.string(), log, err) == kOk);

  std::istringstream csv(slurp(dir / "parameters.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "t,b,lambda,alpha1,alpha2,beta1,beta2,gamma,eps_L2,eps_H1,b_over_lambda,I_value,virial_boundary");
  std::vector<double> t;
  while (std::getline(csv, line)) {
    t.push_back(std::stod(line.substr(0, line.find(','))));
    // S(t) has lambda = b = |t|
    std::vector<double> v;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) v.push_back(std::stod(cell));
    CHECK(v[2] == doctest::Approx(-v[0]).epsilon(1e-6));
    CHECK(v[10] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(v[8] <= 1e-5);
  }
  REQUIRE(t.size() == 10);
  CHECK(t.front() == doctest::Approx(-0.49));
  CHECK(t.back() == doctest::Approx(-0.4));
  const auto rep = json::parse(slurp(dir / "analyze.json"));
  CHECK(rep["fit"]["C0_est"].get<double>() == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(rep["fit"]["T_est"].get<double>() == doctest::Approx(0.0).scale(1).epsilon(1e-5));
  CHECK(rep["gaps"].empty());

  // same seed and config: identical CSV bytes
  const auto again = scratch_dir("sim2");
  REQUIRE(run_command("simulate", kExactRun, {}, again.string(), log, err) == kOk);
  REQUIRE(run_command("analyze", kExactRun, {}, again.string(), log, err) == kOk);
  for (const char* f : {"series.csv", "parameters.csv"}) CHECK(slurp(dir / f) == slurp(again / f));
}

TEST_CASE("failures give nonzero exit codes and an error record") {
  const auto dir = scratch_dir("fail");
  std::ostringstream log, err;
  CHECK(run_command("verify", R"({"model": {"k1": 1.5}})", {}, dir.string(), log, err) == kConfigInvalid);
  auto rec = json::parse(slurp(dir / "error.json"));
  CHECK(rec["kind"] == "ConfigError");
  CHECK(rec["exit_code"] == kConfigInvalid);
  CHECK(rec["message"].get<std::string>().find("k1") != std::string::npos);

  CHECK(run_command("bogus", "{}", {}, dir.string(), log, err) == kConfigInvalid);

  const auto empty = scratch_dir("nosnap");
  CHECK(run_command("analyze", "{}", {}, empty.string(), log, err) == kRuntimeError);
  rec = json::parse(slurp(empty / "error.json"));
  CHECK(rec["kind"] == "IoError");
  // one machine-readable line per failure on the error stream
  std::istringstream lines(err.str());
  int n = 0;
  for (std::string l; std::getline(lines, l); ++n) CHECK(json::parse(l).contains("kind"));
  CHECK(n == 3);
}
