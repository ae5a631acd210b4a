#pragma once
// `milg` command-line entry points.

#include <string>
#include <vector>

namespace milg::cli {

/// Parses and runs one subcommand. `args` excludes the program name.
/// Returns 0 on success, 1 on a usage or user error, 2 on an internal error.
int dispatch(const std::vector<std::string>& args);

int main(int argc, char** argv);

}  // namespace milg::cli
