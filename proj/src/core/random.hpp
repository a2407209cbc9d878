#pragma once

// Counter-based random numbers.
//
// Every random stream in the library is Philox4x32-10 (Salmon et al., SC'11)
// keyed by a 64-bit seed.  The 128-bit counter is laid out as
//   word0,word1 = block index (low, high)
//   word2,word3 = stream id   (low, high)
// and the key as (low32(seed), high32(seed)).  A stream hands out the four
// 32-bit output words of each block in order; next_u64() joins two
// consecutive words as (low | high << 32).
//
// Seeds are fanned out by purpose with derive_seed(), which is
//   splitmix64(seed ^ splitmix64(fnv1a64(purpose)))
// so that any implementation can reproduce the exact streams.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace lungtex {

using PhiloxBlock = std::array<std::uint32_t, 4>;

PhiloxBlock philox4x32_10(PhiloxBlock counter, std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Stateless draw: uniform double in [0,1) addressed by (seed, stream, index).
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // 53-bit uniform in [0,1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  PhiloxBlock buffer_{};
  int pos_ = 4;
};

}  // namespace lungtex
