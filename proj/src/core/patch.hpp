#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "core/texture.hpp"
#include "core/volume.hpp"

namespace lungtex {

enum class Dimensionality : std::uint8_t { k2D = 0, k2_5D = 1, k3D = 2 };

std::string_view name_of(Dimensionality d);
std::optional<Dimensionality> dimensionality_from_name(std::string_view name);

// Patch sampling hyperparameters.  Defaults are the optimum reported for the
// original search: 2.5D, 64 px, 3 mm exclusion radius, fill 0.625, and the
// largest patch budget of the grid.
struct PatchSpec {
  int size_px = 64;
  Dimensionality dimensionality = Dimensionality::k2_5D;
  double selection_radius_mm = 3.0;
  double min_fill_factor = 0.625;
  int patches_per_class = 10000;
  std::uint64_t rng_seed = 0;

  void validate() const;
  friend bool operator==(const PatchSpec&, const PatchSpec&) = default;
};

// Tensor layout of one patch, depth-major: [depth][height][width].
//   2D   -> 1 x N x N   axial plane (rows y, cols x)
//   2.5D -> 3 x N x N   axial (y,x), coronal (z,x), sagittal (z,y)
//   3D   -> N x N x N   (z,y,x)
struct PatchShape {
  int depth = 1, height = 1, width = 1;
  std::int64_t elements() const { return static_cast<std::int64_t>(depth) * height * width; }
  friend bool operator==(const PatchShape&, const PatchShape&) = default;
};

PatchShape patch_shape(int size_px, Dimensionality dim);
inline PatchShape patch_shape(const PatchSpec& spec) { return patch_shape(spec.size_px, spec.dimensionality); }

// Footprint of a patch centred on `center` (centre at index floor(N/2) per axis).
bool footprint_in_bounds(const Grid& grid, const Voxel& center, int size_px, Dimensionality dim);
// Number of distinct voxels in the footprint (3N^2 - 3N + 1 for 2.5D).
std::int64_t footprint_voxels(int size_px, Dimensionality dim);

// Copies HU values of the footprint into `out` (patch_shape elements).
void extract_patch_into(const Volume& volume, const Voxel& center, int size_px, Dimensionality dim, std::span<float> out);
std::vector<float> extract_patch(const Volume& volume, const Voxel& center, const PatchSpec& spec);

// Fraction of footprint voxels whose code equals `label`, by direct enumeration.
double fill_factor(const LabelMask& mask, const Voxel& center, const PatchSpec& spec, TextureLabel label);

// Summed-volume table of one label's indicator, for O(1) box counts.
class LabelIntegral {
 public:
  LabelIntegral(const LabelMask& mask, TextureLabel label);
  // Count over the inclusive box [lo, hi].
  std::int64_t box(int i0, int j0, int k0, int i1, int j1, int k1) const;
  // Same quantity as fill_factor(); footprint must be in bounds.
  double fill(const Voxel& center, int size_px, Dimensionality dim) const;

 private:
  std::int64_t at(int i, int j, int k) const {
    return table_[static_cast<std::size_t>((static_cast<std::int64_t>(k) * (ny_ + 1) + j) * (nx_ + 1) + i)];
  }
  int nx_, ny_, nz_;
  std::vector<std::int32_t> table_;
};

}  // namespace lungtex
