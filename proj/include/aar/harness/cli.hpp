#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aar::harness {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_usage = 2, exit_validation = 3, exit_divergence = 4 };

// Environment variable naming the directory that holds run directories (default "runs").
inline constexpr const char * kRunRootEnv = "AAR_RUN_ROOT";

// Parses a guidance sweep: "2:18:2" (inclusive range), "1,2,4" or a single value.
std::vector<double> parse_cfg_sweep(const std::string & spec);

// Entry point of the aar command-line tool; returns the process exit code.
int run_cli(const std::vector<std::string> & args, std::ostream & out, std::ostream & err);
int run_cli(int argc, char ** argv);

} // namespace aar::harness
