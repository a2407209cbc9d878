#include "core/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "core/error.hpp"

namespace lungtex {

void AugmentConfig::validate() const {
  if (!(rotation_deg_range[0] <= rotation_deg_range[1])) throw InvalidArgument("augment rotation range is reversed");
  if (!(zoom_range[0] > 0.0 && zoom_range[0] <= zoom_range[1])) throw InvalidArgument("augment zoom range is invalid");
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0))
    throw InvalidArgument("augment flip_probability must lie in [0,1]");
}

AugmentParams draw_augment(const AugmentConfig& cfg, Dimensionality dim, CounterRng& rng) {
  AugmentParams p;
  p.rotation_deg = rng.uniform(cfg.rotation_deg_range[0], cfg.rotation_deg_range[1]);
  p.zoom = rng.uniform(cfg.zoom_range[0], cfg.zoom_range[1]);
  p.flip[0] = rng.bernoulli(cfg.flip_probability);
  p.flip[1] = rng.bernoulli(cfg.flip_probability);
  p.flip[2] = dim == Dimensionality::k3D && rng.bernoulli(cfg.flip_probability);
  return p;
}

void apply_augment(std::span<const float> in, const PatchShape& shape, Dimensionality dim, const AugmentParams& params,
                   std::span<float> out) {
  if (in.size() != static_cast<std::size_t>(shape.elements()) || out.size() != in.size())
    throw InvalidArgument("augment: tensor size does not match patch shape");
  const int d = shape.depth, h = shape.height, w = shape.width;
  const double theta = params.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const bool flip_z = dim == Dimensionality::k3D && params.flip[2];
  for (int z = 0; z < d; ++z) {
    const float* src = in.data() + static_cast<std::ptrdiff_t>(z) * h * w;
    const int oz = flip_z ? d - 1 - z : z;
    float* dst = out.data() + static_cast<std::ptrdiff_t>(oz) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // Inverse map: output pixel -> source position.
        const double dx = (x - cx) / params.zoom, dy = (y - cy) / params.zoom;
        const double u = std::clamp(c * dx + s * dy + cx, 0.0, static_cast<double>(w - 1));
        const double v = std::clamp(-s * dx + c * dy + cy, 0.0, static_cast<double>(h - 1));
        const int x0 = std::min(static_cast<int>(u), w - 1), y0 = std::min(static_cast<int>(v), h - 1);
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double fx = u - x0, fy = v - y0;
        const double top = src[y0 * w + x0] * (1 - fx) + src[y0 * w + x1] * fx;
        const double bottom = src[y1 * w + x0] * (1 - fx) + src[y1 * w + x1] * fx;
        const int ox = params.flip[0] ? w - 1 - x : x;
        const int oy = params.flip[1] ? h - 1 - y : y;
        dst[oy * w + ox] = static_cast<float>(top * (1 - fy) + bottom * fy);
      }
  }
}

}  // namespace lungtex
