#pragma once

#include <array>
#include <span>

#include "core/patch.hpp"
#include "core/random.hpp"

namespace lungtex {

struct AugmentConfig {
  bool enabled = true;
  std::array<double, 2> rotation_deg_range = {-15.0, 15.0};
  std::array<double, 2> zoom_range = {0.9, 1.1};
  double flip_probability = 0.5;

  void validate() const;
  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

// One draw of the augmentation.  flip = {x (width), y (height), z (depth)}.
struct AugmentParams {
  double rotation_deg = 0.0;
  double zoom = 1.0;
  std::array<bool, 3> flip{false, false, false};
};

// Rotation and zoom are always drawn; each flip independently with
// flip_probability.  The depth flip is drawn only for 3D patches.
AugmentParams draw_augment(const AugmentConfig& cfg, Dimensionality dim, CounterRng& rng);

// Applies params to one patch (layout of patch_shape()).  Every depth slice
// is rotated and zoomed in-plane about its centre with bilinear sampling and
// edge replication, then flips are applied.  For 2.5D the three planes get
// the same in-plane transform; the depth flip only applies to 3D.
void apply_augment(std::span<const float> in, const PatchShape& shape, Dimensionality dim, const AugmentParams& params,
                   std::span<float> out);

}  // namespace lungtex
