#pragma once

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "core/atlas.hpp"
#include "core/network.hpp"
#include "core/phantom.hpp"
#include "core/random.hpp"

namespace testutil {

// Scan whose label mask is a union of random axis-aligned boxes of random
// classes (later boxes overwrite earlier ones) over random HU.
inline lungtex::ScanInput random_scan(const std::string& id, std::uint64_t seed, lungtex::Grid grid, int boxes = 14) {
  using namespace lungtex;
  CounterRng rng(seed);
  ScanInput in{id, Volume(grid), LabelMask(grid, 0)};
  for (auto& v : in.volume.data()) v = static_cast<std::int16_t>(-1000 + static_cast<int>(rng.below(1100)));
  const auto& d = grid.dims;
  for (int b = 0; b < boxes; ++b) {
    const std::uint8_t code = static_cast<std::uint8_t>(1 + (b % kNumClasses));
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      const int len = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, d[a] / 2))));
      lo[a] = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, d[a] - len + 1))));
      hi[a] = std::min(d[a], lo[a] + len);
    }
    for (int k = lo[2]; k < hi[2]; ++k)
      for (int j = lo[1]; j < hi[1]; ++j)
        for (int i = lo[0]; i < hi[0]; ++i) in.labels(i, j, k) = code;
  }
  return in;
}

inline lungtex::Atlas random_atlas(std::uint64_t seed, int scans, lungtex::Grid grid) {
  std::vector<lungtex::ScanInput> in;
  for (int s = 0; s < scans; ++s)
    in.push_back(random_scan("scan" + std::to_string(s), lungtex::derive_seed(seed, static_cast<std::uint64_t>(s)), grid));
  return lungtex::build_atlas(std::move(in));
}

// Union of a few random ellipsoids kept away from the volume border.
inline lungtex::LungMask random_lung(std::uint64_t seed, lungtex::Grid grid, int blobs = 3) {
  using namespace lungtex;
  CounterRng rng(seed);
  LungMask lung(grid, 0);
  const auto& d = grid.dims;
  for (int b = 0; b < blobs; ++b) {
    double c[3], r[3];
    for (int a = 0; a < 3; ++a) {
      r[a] = 1.5 + rng.uniform() * d[a] / 4.0;
      c[a] = 1 + rng.uniform() * (d[a] - 2);
    }
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          const double x = (i - c[0]) / r[0], y = (j - c[1]) / r[1], z = (k - c[2]) / r[2];
          if (x * x + y * y + z * z <= 1.0) lung(i, j, k) = 1;
        }
  }
  if (count_nonzero(lung) == 0) lung(d[0] / 2, d[1] / 2, d[2] / 2) = 1;
  return lung;
}

inline lungtex::Volume random_volume(std::uint64_t seed, lungtex::Grid grid) {
  lungtex::CounterRng rng(seed);
  lungtex::Volume v(grid);
  for (auto& x : v.data()) x = static_cast<std::int16_t>(-1024 + static_cast<int>(rng.below(1800)));
  return v;
}

// Random grid with random (including extreme) int16 values.
inline lungtex::Volume random_rvol(std::uint64_t seed) {
  lungtex::CounterRng rng(seed);
  lungtex::Grid g{{1 + static_cast<int>(rng.below(17)), 1 + static_cast<int>(rng.below(13)), 1 + static_cast<int>(rng.below(9))},
                  {rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0), rng.uniform(0.2, 5.0)}};
  lungtex::Volume v(g);
  for (auto& x : v.data()) x = static_cast<std::int16_t>(rng.next_u32() & 0xffffu);
  return v;
}

// Small random architecture whose tensors hold arbitrary float bit patterns
// (NaN payloads, infinities, signed zeros, subnormals).
inline lungtex::Model random_model(std::uint64_t seed) {
  using namespace lungtex;
  CounterRng rng(seed);
  ModelConfig c;
  c.dimensionality = static_cast<Dimensionality>(rng.below(3));
  c.input_size_px = 4 + static_cast<int>(rng.below(6));
  c.block_layers.assign(1 + rng.below(3), 0);
  for (auto& l : c.block_layers) l = 1 + static_cast<int>(rng.below(2));
  c.initial_filters = 1 + static_cast<int>(rng.below(4));
  c.growth_rate = 1 + static_cast<int>(rng.below(3));
  c.stem_stride = 1 + static_cast<int>(rng.below(2));
  c.hu_window = {-1000.0 - rng.below(100), 400.0 + rng.uniform()};
  Model m(c);
  for (auto& t : m.tensors())
    for (auto& v : t.values) v = std::bit_cast<float>(rng.next_u32());
  return m;
}

inline bool bit_identical(const lungtex::Model& a, const lungtex::Model& b) {
  if (!(a.config() == b.config()) || a.tensors().size() != b.tensors().size()) return false;
  for (std::size_t t = 0; t < a.tensors().size(); ++t) {
    const auto& x = a.tensors()[t];
    const auto& y = b.tensors()[t];
    if (x.name != y.name || x.shape != y.shape || x.trainable != y.trainable || x.values.size() != y.values.size())
      return false;
    if (std::memcmp(x.values.data(), y.values.data(), x.values.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace testutil
