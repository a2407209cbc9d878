#include "core/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "core/error.hpp"
#include "core/parallel.hpp"
#include "core/random.hpp"

namespace lungtex {

std::array<TextureParams, kNumClasses> default_textures() {
  std::array<TextureParams, kNumClasses> t;
  t[index_of(TextureLabel::kNormal)] = {-850.0, 20.0, 6.0, 0.0, 0.0};
  t[index_of(TextureLabel::kGroundGlass)] = {-650.0, 45.0, 5.0, 0.0, 0.0};
  t[index_of(TextureLabel::kGroundGlassReticulation)] = {-650.0, 45.0, 5.0, -350.0, 0.9};
  t[index_of(TextureLabel::kHoneycombing)] = {-900.0, 15.0, 8.0, -300.0, 2.0};
  t[index_of(TextureLabel::kEmphysema)] = {-950.0, 15.0, 12.0, -800.0, 0.7};
  return t;
}

void PhantomSpec::validate() const {
  grid.validate();
  double total = 0.0;
  std::set<TextureLabel> seen;
  for (const auto& c : compartments) {
    if (!(c.fraction >= 0.0)) throw InvalidArgument("phantom compartment fraction must be >= 0");
    if (!seen.insert(c.label).second) throw InvalidArgument("phantom compartment labels must be unique");
    total += c.fraction;
  }
  if (total > 1.0 + 1e-9) throw InvalidArgument("phantom compartment fractions sum to more than 1");
  if (hu_jitter < 0.0) throw InvalidArgument("phantom hu_jitter must be >= 0");
  for (const auto& t : textures)
    if (!(t.scale_vox > 0.0)) throw InvalidArgument("phantom texture scale_vox must be > 0");
}

namespace {

constexpr double kBodyHu = 40.0;
constexpr double kAirHu = -1000.0;

// Deterministic noise fields addressed by voxel position.
class NoiseField {
 public:
  explicit NoiseField(std::uint64_t seed) : seed_(seed) {}

  double white(std::int64_t idx, std::uint64_t channel) const {
    return 2.0 * counter_uniform(seed_, channel, static_cast<std::uint64_t>(idx)) - 1.0;
  }

  // Smooth value noise in [-1, 1] with lattice spacing `scale`.
  double smooth(double x, double y, double z, double scale, std::uint64_t channel) const {
    const double fx = x / scale, fy = y / scale, fz = z / scale;
    const auto ix = static_cast<std::int64_t>(std::floor(fx)), iy = static_cast<std::int64_t>(std::floor(fy)),
               iz = static_cast<std::int64_t>(std::floor(fz));
    const double tx = fade(fx - static_cast<double>(ix)), ty = fade(fy - static_cast<double>(iy)),
                 tz = fade(fz - static_cast<double>(iz));
    double acc = 0.0;
    for (int c = 0; c < 8; ++c) {
      const int ox = c & 1, oy = (c >> 1) & 1, oz = (c >> 2) & 1;
      const double w = (ox ? tx : 1 - tx) * (oy ? ty : 1 - ty) * (oz ? tz : 1 - tz);
      acc += w * (2.0 * counter_uniform(seed_, channel, lattice(ix + ox, iy + oy, iz + oz)) - 1.0);
    }
    return acc;
  }

  // Distance gap F2 - F1 to the two nearest jittered cell points (Worley);
  // small values trace the walls between cells.
  double cell_gap(double x, double y, double z, double cell, std::uint64_t channel) const {
    const auto cx = static_cast<std::int64_t>(std::floor(x / cell)), cy = static_cast<std::int64_t>(std::floor(y / cell)),
               cz = static_cast<std::int64_t>(std::floor(z / cell));
    double f1 = 1e300, f2 = 1e300;
    for (std::int64_t dz = -1; dz <= 1; ++dz)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          const std::uint64_t id = lattice(cx + dx, cy + dy, cz + dz);
          const double px = (static_cast<double>(cx + dx) + counter_uniform(seed_, 3 * channel + 0, id)) * cell;
          const double py = (static_cast<double>(cy + dy) + counter_uniform(seed_, 3 * channel + 1, id)) * cell;
          const double pz = (static_cast<double>(cz + dz) + counter_uniform(seed_, 3 * channel + 2, id)) * cell;
          const double d = std::sqrt((px - x) * (px - x) + (py - y) * (py - y) + (pz - z) * (pz - z));
          if (d < f1) {
            f2 = f1;
            f1 = d;
          } else if (d < f2) {
            f2 = d;
          }
        }
    return f2 - f1;
  }

 private:
  static double fade(double t) { return t * t * (3.0 - 2.0 * t); }
  static std::uint64_t lattice(std::int64_t x, std::int64_t y, std::int64_t z) {
    constexpr std::int64_t kSpan = 1 << 20;
    return static_cast<std::uint64_t>(((z + 8) * kSpan + (y + 8)) * kSpan + (x + 8));
  }
  std::uint64_t seed_;
};

double texture_hu(TextureLabel label, const TextureParams& p, const NoiseField& noise, std::int64_t idx, double x,
                  double y, double z) {
  const auto ch = static_cast<std::uint64_t>(10 * code_of(label));
  switch (label) {
    case TextureLabel::kNormal:
      return p.base_hu + p.noise_hu * noise.white(idx, ch) + p.noise_hu * noise.smooth(x, y, z, p.scale_vox, ch + 1);
    case TextureLabel::kGroundGlass:
      return p.base_hu + 0.25 * p.noise_hu * noise.white(idx, ch) + p.noise_hu * noise.smooth(x, y, z, p.scale_vox, ch + 1);
    case TextureLabel::kGroundGlassReticulation: {
      const double base =
          p.base_hu + 0.25 * p.noise_hu * noise.white(idx, ch) + p.noise_hu * noise.smooth(x, y, z, p.scale_vox, ch + 1);
      return noise.cell_gap(x, y, z, p.scale_vox, ch + 2) < p.feature_width_vox ? p.feature_hu + 0.5 * (base - p.base_hu)
                                                                                : base;
    }
    case TextureLabel::kHoneycombing:
    case TextureLabel::kEmphysema: {
      const double wall = noise.cell_gap(x, y, z, p.scale_vox, ch + 2) < p.feature_width_vox;
      return (wall ? p.feature_hu : p.base_hu) + p.noise_hu * noise.white(idx, ch);
    }
  }
  return p.base_hu;
}

std::int16_t to_hu(double v) { return static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L)); }

}  // namespace

PhantomCensus census_of(const LabelMask& labels) {
  PhantomCensus c;
  for (const std::uint8_t code : labels.data())
    if (code != 0) {
      ++c.lung_voxels;
      ++c.counts[code - 1];
    }
  return c;
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Grid& g = spec.grid;
  const double cx = (g.dims[0] - 1) / 2.0, cy = (g.dims[1] - 1) / 2.0, cz = (g.dims[2] - 1) / 2.0;
  const double body_a = 0.47 * g.dims[0], body_b = 0.44 * g.dims[1];
  const double lung_a = 0.36 * g.dims[0], lung_b = 0.32 * g.dims[1], lung_c = 0.42 * g.dims[2];

  Phantom ph{Volume(g, 0), LabelMask(g, 0), LungMask(g, 0), {}};

  // Lung voxels ordered by angle about the z axis, starting at the seeded angle.
  CounterRng rng(derive_seed(spec.rng_seed, "phantom-layout"));
  const double start = spec.start_angle_deg ? *spec.start_angle_deg * std::numbers::pi / 180.0
                                            : rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::array<double, kNumClasses> offsets{};
  for (double& o : offsets) o = rng.uniform(-spec.hu_jitter, spec.hu_jitter);

  std::vector<std::pair<double, std::int64_t>> lung;
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const double u = (i - cx) / lung_a, v = (j - cy) / lung_b, w = (k - cz) / lung_c;
        if (u * u + v * v + w * w > 1.0) continue;
        double angle = std::atan2(j - cy, i - cx) - start;
        angle = std::fmod(angle + 4.0 * std::numbers::pi, 2.0 * std::numbers::pi);
        lung.emplace_back(angle, g.index(i, j, k));
      }
  std::sort(lung.begin(), lung.end());

  const auto n = static_cast<std::int64_t>(lung.size());
  std::int64_t pos = 0;
  for (const auto& comp : spec.compartments) {
    const std::int64_t count = std::min<std::int64_t>(n - pos, std::llround(comp.fraction * static_cast<double>(n)));
    for (std::int64_t t = 0; t < count; ++t) ph.labels[lung[static_cast<std::size_t>(pos + t)].second] = code_of(comp.label);
    pos += count;
  }
  for (; pos < n; ++pos) ph.labels[lung[static_cast<std::size_t>(pos)].second] = code_of(TextureLabel::kNormal);
  for (const auto& [angle, idx] : lung) ph.lung[idx] = 1;

  const NoiseField noise(derive_seed(spec.rng_seed, "phantom-texture"));
  parallel_for(g.dims[2], [&](std::int64_t kk) {
    const int k = static_cast<int>(kk);
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const std::int64_t idx = g.index(i, j, k);
        double hu;
        if (const std::uint8_t code = ph.labels[idx]; code != 0) {
          const TextureLabel label = static_cast<TextureLabel>(code);
          hu = texture_hu(label, spec.textures[code - 1], noise, idx, i, j, k) + offsets[code - 1];
        } else {
          const double u = (i - cx) / body_a, v = (j - cy) / body_b;
          hu = u * u + v * v <= 1.0 ? kBodyHu + 10.0 * noise.white(idx, 1) : kAirHu + 5.0 * noise.white(idx, 2);
        }
        ph.volume[idx] = to_hu(hu);
      }
  });

  ph.census = census_of(ph.labels);
  return ph;
}

}  // namespace lungtex
