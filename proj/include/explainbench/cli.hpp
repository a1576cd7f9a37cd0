#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace explainbench {

enum ExitStatus : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitInternal = 3,
};

// Entry point behind the `explainbench` executable. args[0] is the program
// name. Results go to `out`, diagnostics to `err`.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace explainbench
