#ifndef UWLOC_CLI_HPP
#define UWLOC_CLI_HPP

#include <string>
#include <vector>

namespace uwloc::cli {

// Exit codes: 0 success, 2 configuration error, 3 missing artifact,
// 4 numerical divergence, 1 anything else.
int run(int argc, const char* const* argv);
int run(std::vector<std::string> args);  // args without the program name

}  // namespace uwloc::cli

#endif  // UWLOC_CLI_HPP
