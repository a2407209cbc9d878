#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "core/error.hpp"

namespace lungtex {

struct Voxel {
  int i = 0, j = 0, k = 0;
  friend bool operator==(const Voxel&, const Voxel&) = default;
};

// Voxel lattice geometry: dims in voxels, spacing in mm, x-fastest ordering.
struct Grid {
  std::array<int, 3> dims{1, 1, 1};
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};

  std::int64_t voxel_count() const {
    return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
  }
  std::int64_t index(int i, int j, int k) const {
    return (static_cast<std::int64_t>(k) * dims[1] + j) * dims[0] + i;
  }
  std::int64_t index(const Voxel& v) const { return index(v.i, v.j, v.k); }
  Voxel voxel(std::int64_t idx) const {
    const int i = static_cast<int>(idx % dims[0]);
    const std::int64_t rest = idx / dims[0];
    return {i, static_cast<int>(rest % dims[1]), static_cast<int>(rest / dims[1])};
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }
  double voxel_volume_ml() const { return spacing_mm[0] * spacing_mm[1] * spacing_mm[2] / 1000.0; }

  // Throws InvalidArgument unless dims >= 1 and spacing > 0 (finite).
  void validate() const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

// Throws InvalidArgument when two grids differ in dims or spacing.
void require_congruent(const Grid& a, const Grid& b, std::string_view what);

// Dense scalar image on a Grid.  The Tag keeps volumes and the different mask
// kinds from being mixed up at compile time.
template <typename T, typename Tag>
class VoxelImage {
 public:
  using value_type = T;

  VoxelImage() = default;
  explicit VoxelImage(Grid grid, T fill = T{}) : grid_(grid) {
    grid_.validate();
    data_.assign(static_cast<std::size_t>(grid_.voxel_count()), fill);
  }
  VoxelImage(Grid grid, std::vector<T> data) : grid_(grid), data_(std::move(data)) {
    grid_.validate();
    if (static_cast<std::int64_t>(data_.size()) != grid_.voxel_count())
      throw InvalidArgument("voxel data length does not match grid dims");
  }

  const Grid& grid() const { return grid_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  T operator()(int i, int j, int k) const { return data_[static_cast<std::size_t>(grid_.index(i, j, k))]; }
  T& operator()(int i, int j, int k) { return data_[static_cast<std::size_t>(grid_.index(i, j, k))]; }
  T operator[](std::int64_t idx) const { return data_[static_cast<std::size_t>(idx)]; }
  T& operator[](std::int64_t idx) { return data_[static_cast<std::size_t>(idx)]; }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }

  friend bool operator==(const VoxelImage&, const VoxelImage&) = default;

 private:
  Grid grid_;
  std::vector<T> data_;
};

struct VolumeTag;
struct LabelTag;
struct LungTag;
struct ClassMapTag;

// CT intensities in Hounsfield units.
using Volume = VoxelImage<std::int16_t, VolumeTag>;
// 0 = unlabeled, 1..5 = TextureLabel code.
using LabelMask = VoxelImage<std::uint8_t, LabelTag>;
// 0/1 lung membership.
using LungMask = VoxelImage<std::uint8_t, LungTag>;
// Reconstructed per-voxel class: 0 outside the lung, 1..5 inside.
using ClassificationMap = VoxelImage<std::uint8_t, ClassMapTag>;

void validate_codes(const LabelMask& mask);
void validate_codes(const LungMask& mask);
void validate_codes(const ClassificationMap& map);

std::int64_t count_nonzero(const LungMask& mask);

// Per-axis radius in voxels of a sphere of radius_mm: radius_mm / spacing.
std::array<double, 3> mm_to_voxel_radius(const std::array<double, 3>& spacing_mm, double radius_mm);

struct LungThreshold {
  int hu_threshold = -320;
  std::int64_t min_component_voxels = 10000;
};

// Fallback lung segmentation: 6-connected components of voxels below the HU
// threshold that do not touch the volume border and are large enough.
LungMask threshold_lung_mask(const Volume& volume, const LungThreshold& params = {});

}  // namespace lungtex
