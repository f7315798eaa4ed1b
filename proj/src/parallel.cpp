#include "opinet/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace opinet {

namespace {

int threads_from_env() {
  if (const char* env = std::getenv("OPINET_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (...) {
    }
  }
  return omp_get_max_threads();
}

std::atomic<int>& thread_setting() {
  static std::atomic<int> setting{threads_from_env()};
  return setting;
}

}  // namespace

int num_threads() { return thread_setting().load(std::memory_order_relaxed); }

void set_num_threads(int n) { thread_setting().store(n < 1 ? 1 : n, std::memory_order_relaxed); }

}  // namespace opinet
