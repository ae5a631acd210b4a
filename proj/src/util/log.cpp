#include "milg/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace milg::log {

namespace {
std::atomic<bool> g_quiet{false};
std::mutex g_mu;
}  // namespace

void set_quiet(bool quiet) { g_quiet = quiet; }

void info(const std::string& msg) {
  if (g_quiet) return;
  std::lock_guard lock(g_mu);
  std::cerr << "[milg] " << msg << '\n';
}

void warn(const std::string& msg) {
  std::lock_guard lock(g_mu);
  std::cerr << "[milg] warning: " << msg << '\n';
}

}  // namespace milg::log
