#pragma once

#include <string>
#include <vector>

namespace sfofr::cli {

enum ExitCode : int { kOk = 0, kDataError = 1, kNumericalError = 2 };

/// Entry point of the `sfofr` tool. args[0] is the program name.
int run(const std::vector<std::string>& args);

}  // namespace sfofr::cli
