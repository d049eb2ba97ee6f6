#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace threen1 {

// Exit codes of the threen1 tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitMismatch = 1,
    kExitUsage = 2,
    kExitEnvironment = 3,
};

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace threen1
