#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "core/parallel.hpp"
#include "core/random.hpp"

using namespace lungtex;

TEST_CASE("philox4x32-10 known answers") {
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxBlock{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        PhiloxBlock{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        PhiloxBlock{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("fnv1a64 and splitmix64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafull);
}

TEST_CASE("derived seeds separate purposes and indices") {
  std::set<std::uint64_t> seen;
  for (const char* p : {"sample", "init", "augment", "mc", "split", "shuffle"}) seen.insert(derive_seed(42, p));
  for (std::uint64_t i = 0; i < 100; ++i) seen.insert(derive_seed(42, i));
  CHECK(seen.size() == 106);
  CHECK(derive_seed(1, "sample") == derive_seed(1, "sample"));
  CHECK(derive_seed(1, "sample") != derive_seed(2, "sample"));
}

TEST_CASE("counter rng is reproducible and stream separated") {
  CounterRng a(7, 3), b(7, 3), c(7, 4);
  bool differs = false;
  for (int i = 0; i < 64; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("uniform draws lie in [0,1) with the right mean") {
  CounterRng rng(123);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.005);
}

TEST_CASE("below() is unbiased over a small range") {
  CounterRng rng(9);
  std::map<std::uint64_t, int> counts;
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[rng.below(6)];
  CHECK(counts.size() == 6);
  for (const auto& [v, c] : counts) CHECK(std::abs(c - n / 6) < 600);
}

TEST_CASE("shuffle yields a permutation") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  CounterRng rng(5);
  rng.shuffle(std::span<int>(v));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(!std::is_sorted(v.begin(), v.end()));
}

TEST_CASE("counter_uniform is addressable and independent of thread count") {
  std::vector<double> a(1000), b(1000);
  set_num_threads(1);
  parallel_for(1000, [&](std::int64_t i) { a[i] = counter_uniform(11, 2, static_cast<std::uint64_t>(i)); });
  set_num_threads(4);
  parallel_for(1000, [&](std::int64_t i) { b[i] = counter_uniform(11, 2, static_cast<std::uint64_t>(i)); });
  set_num_threads(0);
  CHECK(a == b);
  CHECK(counter_uniform(11, 2, 5) != counter_uniform(11, 3, 5));
}
