#include "core/parallel.hpp"

#include <omp.h>

#include <atomic>

namespace lungtex {

namespace {
std::atomic<int> g_threads{0};
}

void set_num_threads(int n) { g_threads.store(n > 0 ? n : 0); }

int num_threads() {
  const int n = g_threads.load();
  return n > 0 ? n : omp_get_max_threads();
}

int thread_index() { return omp_get_thread_num(); }

}  // namespace lungtex
