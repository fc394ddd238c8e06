#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cml {

/// Process exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitInvalid = 1, kExitFailure = 2 };

/// Runs one subcommand (gen-collocation, train, eval-path, compare, bench,
/// timestep-study, fe-demo, appendix-b, data-baseline). `args` excludes the
/// program name. Results go to `out`, diagnostics to `err`.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace cml
