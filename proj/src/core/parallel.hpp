#pragma once

#include <cstdint>
#include <exception>
#include <mutex>

namespace lungtex {

// Worker threads used by every parallel loop in the library (0 = runtime default).
void set_num_threads(int n);
int num_threads();
int thread_index();

// Static-schedule loop over [0, n).  Results never depend on the thread count
// as long as iterations write disjoint outputs.  The first exception thrown by
// any iteration is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  std::exception_ptr error;
  std::mutex error_mutex;
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace lungtex
