#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "core/texture.hpp"
#include "core/volume.hpp"

namespace lungtex {

// Procedural texture of one class.  `feature_*` describe the wall/septum
// network for the classes that have one (GGR, honeycombing, emphysema).
struct TextureParams {
  double base_hu = -850.0;
  double noise_hu = 20.0;
  double scale_vox = 6.0;
  double feature_hu = 0.0;
  double feature_width_vox = 0.0;
  friend bool operator==(const TextureParams&, const TextureParams&) = default;
};

std::array<TextureParams, kNumClasses> default_textures();

struct Compartment {
  TextureLabel label = TextureLabel::kNormal;
  double fraction = 0.0;
};

struct PhantomSpec {
  Grid grid{{96, 96, 96}, {1.0, 1.0, 1.0}};
  // Fractions of lung volume; the remainder is NORMAL.
  std::vector<Compartment> compartments;
  std::array<TextureParams, kNumClasses> textures = default_textures();
  // Per-scan random offset of every class' base HU, uniform in +-hu_jitter.
  double hu_jitter = 0.0;
  // Angle (degrees, about z) where the first compartment starts; seeded when empty.
  std::optional<double> start_angle_deg;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct PhantomCensus {
  std::int64_t lung_voxels = 0;
  std::array<std::int64_t, kNumClasses> counts{};
  double fraction(TextureLabel l) const {
    return lung_voxels ? static_cast<double>(counts[index_of(l)]) / static_cast<double>(lung_voxels) : 0.0;
  }
};

struct Phantom {
  Volume volume;
  LabelMask labels;
  LungMask lung;
  PhantomCensus census;
};

// Torso-like cylinder of soft tissue around an ellipsoidal lung.  The lung is
// cut into angular wedges about the z axis, one per compartment, whose voxel
// counts match the requested fractions to the nearest voxel.
Phantom generate_phantom(const PhantomSpec& spec);

// Direct voxel census of a label mask (lung voxels = nonzero codes).
PhantomCensus census_of(const LabelMask& labels);

}  // namespace lungtex
