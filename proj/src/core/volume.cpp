#include "core/volume.hpp"

#include <cmath>
#include <string>

namespace lungtex {

void Grid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw InvalidArgument("grid dims must all be >= 1");
    if (!(spacing_mm[a] > 0.0) || !std::isfinite(spacing_mm[a]))
      throw InvalidArgument("grid spacing must be positive and finite");
  }
}

void require_congruent(const Grid& a, const Grid& b, std::string_view what) {
  if (a.dims != b.dims) throw InvalidArgument(std::string(what) + ": grid dims differ");
  for (int ax = 0; ax < 3; ++ax)
    if (std::abs(a.spacing_mm[ax] - b.spacing_mm[ax]) > 1e-9)
      throw InvalidArgument(std::string(what) + ": grid spacing differs");
}

void validate_codes(const LabelMask& mask) {
  for (const std::uint8_t c : mask.data())
    if (c > 5) throw InvalidArgument("label mask code outside 0..5");
}

void validate_codes(const LungMask& mask) {
  for (const std::uint8_t c : mask.data())
    if (c > 1) throw InvalidArgument("lung mask value outside {0,1}");
}

void validate_codes(const ClassificationMap& map) {
  for (const std::uint8_t c : map.data())
    if (c > 5) throw InvalidArgument("classification map code outside 0..5");
}

std::int64_t count_nonzero(const LungMask& mask) {
  std::int64_t n = 0;
  for (const std::uint8_t c : mask.data()) n += c != 0;
  return n;
}

std::array<double, 3> mm_to_voxel_radius(const std::array<double, 3>& spacing_mm, double radius_mm) {
  if (!(radius_mm > 0.0)) throw InvalidArgument("selection radius must be > 0 mm");
  return {radius_mm / spacing_mm[0], radius_mm / spacing_mm[1], radius_mm / spacing_mm[2]};
}

LungMask threshold_lung_mask(const Volume& volume, const LungThreshold& params) {
  const Grid& g = volume.grid();
  const std::int64_t n = g.voxel_count();
  LungMask out(g, 0);

  std::vector<std::int32_t> component(static_cast<std::size_t>(n), -1);
  std::vector<std::int64_t> stack;
  std::vector<std::int64_t> members;
  std::int32_t next_id = 0;

  for (std::int64_t seed = 0; seed < n; ++seed) {
    if (volume[seed] >= params.hu_threshold || component[seed] >= 0) continue;
    const std::int32_t id = next_id++;
    bool touches_border = false;
    members.clear();
    stack.assign(1, seed);
    component[seed] = id;
    while (!stack.empty()) {
      const std::int64_t cur = stack.back();
      stack.pop_back();
      members.push_back(cur);
      const Voxel v = g.voxel(cur);
      if (v.i == 0 || v.j == 0 || v.k == 0 || v.i == g.dims[0] - 1 || v.j == g.dims[1] - 1 ||
          v.k == g.dims[2] - 1)
        touches_border = true;
      static constexpr int kSteps[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
      for (const auto& s : kSteps) {
        const int i = v.i + s[0], j = v.j + s[1], k = v.k + s[2];
        if (!g.contains(i, j, k)) continue;
        const std::int64_t nb = g.index(i, j, k);
        if (component[nb] >= 0 || volume[nb] >= params.hu_threshold) continue;
        component[nb] = id;
        stack.push_back(nb);
      }
    }
    if (!touches_border && static_cast<std::int64_t>(members.size()) >= params.min_component_voxels)
      for (const std::int64_t m : members) out[m] = 1;
  }
  return out;
}

}  // namespace lungtex
