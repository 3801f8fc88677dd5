#pragma once

#include <string>
#include <vector>

namespace emoattr {

// Command-line entry point; `args` excludes the program name. Returns the
// process exit status: 0 on success, 1 on runtime errors, 2 on usage errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace emoattr
