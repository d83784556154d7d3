#pragma once

#include <string>
#include <vector>

namespace manas::cli {

// Exit codes: 0 success, 1 runtime failure, 2 config/usage error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args exclude argv[0]

}  // namespace manas::cli
