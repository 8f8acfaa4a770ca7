// nlslab: command-line front end; see README.md for the subcommands.
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "nlslab/orchestrate.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Critical NLS blow-up laboratory"};
  app.require_subcommand(1);
  std::string config_path, out;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  bool quiet = false;

  const std::map<std::string, std::string> about = {
      {"ground-state", "solve for the ground state and write its moments"},
      {"verify", "operator identities and constant cross-checks"},
      {"profile", "profile constants, elliptic solves and residual scaling"},
      {"ode", "integrate the modulation equations from the construction data"},
      {"appendix-b", "closed-form linear system: basis check and bound ratio"},
      {"simulate", "evolve the NLS and record conserved quantities and snapshots"},
      {"analyze", "decompose snapshots and fit the blow-up law"},
  };
  for (const auto& name : nlslab::subcommands()) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out", out, "output directory (relative paths resolve under $NLSLAB_OUT)");
    sub->add_option("--seed", seed, "seed for randomized checks");
    sub->add_option("--set", sets, "override a config key: key.path=value")->take_all();
    sub->add_flag("-q,--quiet", quiet, "no progress log");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();

  std::string text;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "{\"subcommand\":\"" << name << "\",\"exit_code\":2,\"kind\":\"ConfigError\",\"message\":"
                << "\"cannot read config file\"}\n";
      return nlslab::kConfigInvalid;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  if (app.get_subcommands().front()->count("--seed")) sets.push_back("seed=" + std::to_string(seed));

  std::ostringstream sink;
  std::ostream& log = quiet ? static_cast<std::ostream&>(sink) : std::cout;
  return nlslab::run_command(name, text, sets, out, log, std::cerr);
}
