#pragma once

#include <string>
#include <vector>

namespace cffe::cli {

/// Entry point of the `cffe` tool. Returns 0 on success, 1 on data or model
/// errors and 2 on usage errors.
int run(int argc, char** argv);
int run(std::vector<std::string> args);

} // namespace cffe::cli
