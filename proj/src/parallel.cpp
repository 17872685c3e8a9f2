#include "percreach/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>

namespace percreach {

namespace {

int default_workers() {
  if (const char* env = std::getenv("PERCREACH_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int>& workers() {
  static std::atomic<int> n{default_workers()};
  return n;
}

}  // namespace

int worker_count() { return workers().load(); }

void set_worker_count(int n) { workers().store(n > 0 ? n : default_workers()); }

}  // namespace percreach
