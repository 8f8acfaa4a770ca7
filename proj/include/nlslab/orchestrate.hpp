#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "nlslab/config.hpp"

namespace nlslab {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& p);

const std::vector<std::string>& subcommands();

// Output directory: flag value if given, else the config's; relative paths resolve
// against $NLSLAB_OUT when it is set.
std::filesystem::path resolve_output(const RunConfig& cfg, const std::string& flag_out);

enum ExitCode : int { kOk = 0, kChecksFailed = 1, kConfigInvalid = 2, kRuntimeError = 3 };

// Runs one subcommand into dir and writes manifest.json listing every emitted file with
// its SHA-256. Returns kOk or kChecksFailed; module errors propagate.
int orchestrate(const std::string& subcommand, const RunConfig& cfg, const std::filesystem::path& dir,
                std::ostream& log);

// Parses config text (with overrides), runs the subcommand and converts every failure into
// an exit code plus an error.json record in the output directory (and one JSON line on err).
int run_command(const std::string& subcommand, const std::string& config_text,
                const std::vector<std::string>& overrides, const std::string& flag_out, std::ostream& log,
                std::ostream& err);

}  // namespace nlslab
