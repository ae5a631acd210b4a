#pragma once
// Progress messages go to stderr; results only ever go to files.

#include <string>

namespace milg::log {

void set_quiet(bool quiet);
void info(const std::string& msg);
void warn(const std::string& msg);

}  // namespace milg::log
