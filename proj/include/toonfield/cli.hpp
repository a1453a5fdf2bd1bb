#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace toonfield {

// Entry point shared by the executable and in-process tests. `args` excludes
// the program name. Returns the process exit code: 0 ok, 2 usage, 3 data or
// integrity, 4 runtime.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace toonfield
