#include "core/patch.hpp"

#include <string>

#include "core/error.hpp"

namespace lungtex {

std::string_view name_of(Dimensionality d) {
  switch (d) {
    case Dimensionality::k2D: return "2D";
    case Dimensionality::k2_5D: return "2.5D";
    case Dimensionality::k3D: return "3D";
  }
  return "?";
}

std::optional<Dimensionality> dimensionality_from_name(std::string_view name) {
  for (const auto d : {Dimensionality::k2D, Dimensionality::k2_5D, Dimensionality::k3D})
    if (name_of(d) == name) return d;
  return std::nullopt;
}

void PatchSpec::validate() const {
  if (size_px < 1) throw InvalidArgument("patch size_px must be >= 1");
  if (!(selection_radius_mm > 0.0)) throw InvalidArgument("selection_radius_mm must be > 0");
  if (!(min_fill_factor > 0.0) || min_fill_factor > 1.0) throw InvalidArgument("min_fill_factor must be in (0, 1]");
  if (patches_per_class < 1) throw InvalidArgument("patches_per_class must be >= 1");
}

PatchShape patch_shape(int n, Dimensionality dim) {
  switch (dim) {
    case Dimensionality::k2D: return {1, n, n};
    case Dimensionality::k2_5D: return {3, n, n};
    case Dimensionality::k3D: return {n, n, n};
  }
  return {};
}

namespace {

struct Extent {
  int lo, hi;  // inclusive offsets from the centre
};

Extent extent(int n) { return {-(n / 2), n - 1 - n / 2}; }

}  // namespace

bool footprint_in_bounds(const Grid& grid, const Voxel& c, int n, Dimensionality dim) {
  const Extent e = extent(n);
  if (!grid.contains(c.i, c.j, c.k)) return false;
  auto axis_ok = [&](int center, int size) { return center + e.lo >= 0 && center + e.hi < size; };
  if (!axis_ok(c.i, grid.dims[0]) || !axis_ok(c.j, grid.dims[1])) return false;
  return dim == Dimensionality::k2D || axis_ok(c.k, grid.dims[2]);
}

std::int64_t footprint_voxels(int n, Dimensionality dim) {
  const std::int64_t nn = n;
  switch (dim) {
    case Dimensionality::k2D: return nn * nn;
    case Dimensionality::k2_5D: return 3 * nn * nn - 3 * nn + 1;
    case Dimensionality::k3D: return nn * nn * nn;
  }
  return 0;
}

void extract_patch_into(const Volume& v, const Voxel& c, int n, Dimensionality dim, std::span<float> out) {
  if (!footprint_in_bounds(v.grid(), c, n, dim)) throw InvalidArgument("patch footprint leaves the volume");
  const PatchShape shape = patch_shape(n, dim);
  if (static_cast<std::int64_t>(out.size()) != shape.elements()) throw InvalidArgument("patch buffer has wrong size");
  const int h = n / 2;
  float* dst = out.data();
  switch (dim) {
    case Dimensionality::k2D:
      for (int r = 0; r < n; ++r)
        for (int q = 0; q < n; ++q) *dst++ = v(c.i - h + q, c.j - h + r, c.k);
      break;
    case Dimensionality::k2_5D:
      for (int r = 0; r < n; ++r)  // axial: rows y, cols x
        for (int q = 0; q < n; ++q) *dst++ = v(c.i - h + q, c.j - h + r, c.k);
      for (int r = 0; r < n; ++r)  // coronal: rows z, cols x
        for (int q = 0; q < n; ++q) *dst++ = v(c.i - h + q, c.j, c.k - h + r);
      for (int r = 0; r < n; ++r)  // sagittal: rows z, cols y
        for (int q = 0; q < n; ++q) *dst++ = v(c.i, c.j - h + q, c.k - h + r);
      break;
    case Dimensionality::k3D:
      for (int z = 0; z < n; ++z)
        for (int r = 0; r < n; ++r)
          for (int q = 0; q < n; ++q) *dst++ = v(c.i - h + q, c.j - h + r, c.k - h + z);
      break;
  }
}

std::vector<float> extract_patch(const Volume& v, const Voxel& c, const PatchSpec& spec) {
  std::vector<float> out(static_cast<std::size_t>(patch_shape(spec).elements()));
  extract_patch_into(v, c, spec.size_px, spec.dimensionality, out);
  return out;
}

double fill_factor(const LabelMask& mask, const Voxel& c, const PatchSpec& spec, TextureLabel label) {
  const int n = spec.size_px;
  if (!footprint_in_bounds(mask.grid(), c, n, spec.dimensionality))
    throw InvalidArgument("fill factor footprint leaves the volume");
  const Extent e = extent(n);
  const std::uint8_t code = code_of(label);
  std::int64_t hits = 0;
  switch (spec.dimensionality) {
    case Dimensionality::k2D:
      for (int dj = e.lo; dj <= e.hi; ++dj)
        for (int di = e.lo; di <= e.hi; ++di) hits += mask(c.i + di, c.j + dj, c.k) == code;
      break;
    case Dimensionality::k2_5D:
      // Union of the three planes: each voxel counted once.
      for (int dj = e.lo; dj <= e.hi; ++dj)
        for (int di = e.lo; di <= e.hi; ++di) hits += mask(c.i + di, c.j + dj, c.k) == code;
      for (int dk = e.lo; dk <= e.hi; ++dk) {
        if (dk == 0) continue;
        for (int di = e.lo; di <= e.hi; ++di) hits += mask(c.i + di, c.j, c.k + dk) == code;
        for (int dj = e.lo; dj <= e.hi; ++dj)
          if (dj != 0) hits += mask(c.i, c.j + dj, c.k + dk) == code;
      }
      break;
    case Dimensionality::k3D:
      for (int dk = e.lo; dk <= e.hi; ++dk)
        for (int dj = e.lo; dj <= e.hi; ++dj)
          for (int di = e.lo; di <= e.hi; ++di) hits += mask(c.i + di, c.j + dj, c.k + dk) == code;
      break;
  }
  return static_cast<double>(hits) / static_cast<double>(footprint_voxels(n, spec.dimensionality));
}

LabelIntegral::LabelIntegral(const LabelMask& mask, TextureLabel label)
    : nx_(mask.grid().dims[0]), ny_(mask.grid().dims[1]), nz_(mask.grid().dims[2]) {
  table_.assign(static_cast<std::size_t>(nx_ + 1) * (ny_ + 1) * (nz_ + 1), 0);
  const std::uint8_t code = code_of(label);
  auto idx = [&](int i, int j, int k) {
    return static_cast<std::size_t>((static_cast<std::int64_t>(k) * (ny_ + 1) + j) * (nx_ + 1) + i);
  };
  for (int k = 1; k <= nz_; ++k)
    for (int j = 1; j <= ny_; ++j)
      for (int i = 1; i <= nx_; ++i) {
        const std::int32_t here = mask(i - 1, j - 1, k - 1) == code;
        table_[idx(i, j, k)] = here + table_[idx(i - 1, j, k)] + table_[idx(i, j - 1, k)] + table_[idx(i, j, k - 1)] -
                               table_[idx(i - 1, j - 1, k)] - table_[idx(i - 1, j, k - 1)] -
                               table_[idx(i, j - 1, k - 1)] + table_[idx(i - 1, j - 1, k - 1)];
      }
}

std::int64_t LabelIntegral::box(int i0, int j0, int k0, int i1, int j1, int k1) const {
  ++i1, ++j1, ++k1;
  return at(i1, j1, k1) - at(i0, j1, k1) - at(i1, j0, k1) - at(i1, j1, k0) + at(i0, j0, k1) + at(i0, j1, k0) +
         at(i1, j0, k0) - at(i0, j0, k0);
}

double LabelIntegral::fill(const Voxel& c, int n, Dimensionality dim) const {
  const Extent e = extent(n);
  const int i0 = c.i + e.lo, i1 = c.i + e.hi, j0 = c.j + e.lo, j1 = c.j + e.hi, k0 = c.k + e.lo, k1 = c.k + e.hi;
  std::int64_t hits = 0;
  switch (dim) {
    case Dimensionality::k2D: hits = box(i0, j0, c.k, i1, j1, c.k); break;
    case Dimensionality::k3D: hits = box(i0, j0, k0, i1, j1, k1); break;
    case Dimensionality::k2_5D:
      // Inclusion-exclusion over axial, coronal and sagittal planes.
      hits = box(i0, j0, c.k, i1, j1, c.k) + box(i0, c.j, k0, i1, c.j, k1) + box(c.i, j0, k0, c.i, j1, k1) -
             box(i0, c.j, c.k, i1, c.j, c.k) - box(c.i, j0, c.k, c.i, j1, c.k) - box(c.i, c.j, k0, c.i, c.j, k1) +
             box(c.i, c.j, c.k, c.i, c.j, c.k);
      break;
  }
  return static_cast<double>(hits) / static_cast<double>(footprint_voxels(n, dim));
}

}  // namespace lungtex
