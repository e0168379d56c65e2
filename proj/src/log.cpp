#include "failprob/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace failprob {

namespace {
std::mutex sink_mutex;
std::atomic<bool> quiet{false};
}  // namespace

void warn(std::string_view msg) {
  if (quiet.load()) return;
  std::lock_guard lock(sink_mutex);
  std::cerr << "warning: " << msg << '\n';
}

void set_quiet(bool q) { quiet.store(q); }

}  // namespace failprob
