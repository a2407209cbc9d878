#include "core/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "core/error.hpp"
#include "core/parallel.hpp"
#include "core/random.hpp"

namespace lungtex {

std::int64_t Atlas::candidate_count(TextureLabel label) const {
  std::int64_t n = 0;
  for (const auto& s : scans) n += static_cast<std::int64_t>(s.candidates[index_of(label)].size());
  return n;
}

const AtlasScan* Atlas::find(const std::string& scan_id) const {
  for (const auto& s : scans)
    if (s.scan_id == scan_id) return &s;
  return nullptr;
}

Atlas Atlas::subset(std::span<const std::string> ids) const {
  const std::set<std::string> wanted(ids.begin(), ids.end());
  Atlas out;
  for (const auto& s : scans)
    if (wanted.count(s.scan_id)) out.scans.push_back(s);
  return out;
}

Atlas build_atlas(std::vector<ScanInput> scans) {
  Atlas atlas;
  std::set<std::string> seen;
  for (auto& in : scans) {
    if (!seen.insert(in.scan_id).second) throw InvalidArgument("duplicate scan_id '" + in.scan_id + "' in atlas");
    require_congruent(in.volume.grid(), in.labels.grid(), "atlas scan '" + in.scan_id + "'");
    validate_codes(in.labels);
    AtlasScan s;
    s.scan_id = in.scan_id;
    for (std::int64_t idx = 0; idx < in.labels.size(); ++idx)
      if (const std::uint8_t code = in.labels[idx]; code != 0) s.candidates[code - 1].push_back(idx);
    s.volume = std::make_shared<const Volume>(std::move(in.volume));
    s.labels = std::make_shared<const LabelMask>(std::move(in.labels));
    atlas.scans.push_back(std::move(s));
  }
  return atlas;
}

std::span<const float> PatchSet::tensor(std::size_t i) const {
  const auto n = static_cast<std::size_t>(shape().elements());
  return std::span<const float>(tensors).subspan(i * n, n);
}

std::array<std::int64_t, kNumClasses> PatchSet::class_counts() const {
  std::array<std::int64_t, kNumClasses> c{};
  for (const auto& r : records) ++c[index_of(r.label)];
  return c;
}

std::vector<std::string> PatchSet::scan_ids() const {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.scan_id).second) ids.push_back(r.scan_id);
  return ids;
}

namespace {

// Accepted centres of one class in one scan, bucketed for the exclusion test.
class ExclusionIndex {
 public:
  ExclusionIndex(const Grid& grid, double radius_mm) : grid_(grid), radius_mm_(radius_mm) {
    const auto r = mm_to_voxel_radius(grid.spacing_mm, radius_mm);
    for (int a = 0; a < 3; ++a) {
      cell_[a] = std::max(1, static_cast<int>(std::ceil(r[a])));
      cells_[a] = grid.dims[a] / cell_[a] + 1;
    }
  }

  // True when no accepted centre is within the radius (physical distance <= radius).
  bool is_free(const Voxel& v) const {
    const int ci = v.i / cell_[0], cj = v.j / cell_[1], ck = v.k / cell_[2];
    const double r2 = radius_mm_ * radius_mm_;
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const auto it = buckets_.find(key(ci + di, cj + dj, ck + dk));
          if (it == buckets_.end()) continue;
          for (const Voxel& o : it->second) {
            const double dx = (o.i - v.i) * grid_.spacing_mm[0];
            const double dy = (o.j - v.j) * grid_.spacing_mm[1];
            const double dz = (o.k - v.k) * grid_.spacing_mm[2];
            if (dx * dx + dy * dy + dz * dz <= r2) return false;
          }
        }
    return true;
  }

  void add(const Voxel& v) { buckets_[key(v.i / cell_[0], v.j / cell_[1], v.k / cell_[2])].push_back(v); }

 private:
  std::int64_t key(int ci, int cj, int ck) const {
    return (static_cast<std::int64_t>(ck + 1) * (cells_[1] + 2) + (cj + 1)) * (cells_[0] + 2) + (ci + 1);
  }
  Grid grid_;
  double radius_mm_;
  std::array<int, 3> cell_{}, cells_{};
  std::unordered_map<std::int64_t, std::vector<Voxel>> buckets_;
};

struct Accepted {
  Voxel center;
  double fill;
};

}  // namespace

PatchSet sample_patches(const Atlas& atlas, const PatchSpec& spec, std::optional<int> per_class_override,
                        const std::string& split_tag) {
  spec.validate();
  if (atlas.scans.empty()) throw InvalidArgument("sample_patches: atlas is empty");
  const int requested = per_class_override.value_or(spec.patches_per_class);
  if (requested < 1) throw InvalidArgument("sample_patches: per-class count must be >= 1");

  // accepted[scan][class], filled independently per scan.
  std::vector<std::array<std::vector<Accepted>, kNumClasses>> accepted(atlas.scans.size());
  parallel_for(static_cast<std::int64_t>(atlas.scans.size()), [&](std::int64_t s) {
    const AtlasScan& scan = atlas.scans[static_cast<std::size_t>(s)];
    const Grid& grid = scan.labels->grid();
    const std::uint64_t scan_seed = derive_seed(spec.rng_seed, fnv1a64(scan.scan_id));
    for (int c = 0; c < kNumClasses; ++c) {
      const auto& cands = scan.candidates[c];
      if (cands.empty()) continue;
      const LabelIntegral integral(*scan.labels, label_from_index(c));
      std::vector<std::int64_t> order(cands.begin(), cands.end());
      CounterRng rng(scan_seed, static_cast<std::uint64_t>(c));
      rng.shuffle(std::span<std::int64_t>(order));
      ExclusionIndex exclusion(grid, spec.selection_radius_mm);
      auto& out = accepted[static_cast<std::size_t>(s)][c];
      for (const std::int64_t idx : order) {
        const Voxel v = grid.voxel(idx);
        if (!footprint_in_bounds(grid, v, spec.size_px, spec.dimensionality)) continue;
        if (!exclusion.is_free(v)) continue;
        const double fill = integral.fill(v, spec.size_px, spec.dimensionality);
        if (fill < spec.min_fill_factor) continue;
        exclusion.add(v);
        out.push_back({v, fill});
      }
    }
  });

  std::array<std::int64_t, kNumClasses> feasible{};
  for (const auto& per_scan : accepted)
    for (int c = 0; c < kNumClasses; ++c) feasible[c] += static_cast<std::int64_t>(per_scan[c].size());
  for (int c = 0; c < kNumClasses; ++c)
    if (feasible[c] == 0)
      throw InfeasibleError("no feasible " + std::string(name_of(label_from_index(c))) +
                            " patches for the requested spec");
  const std::int64_t count = std::min<std::int64_t>(requested, *std::min_element(feasible.begin(), feasible.end()));

  PatchSet set;
  set.spec = spec;
  set.split_tag = split_tag;
  const PatchShape shape = patch_shape(spec);
  const std::uint64_t select_seed = derive_seed(spec.rng_seed, "select");

  struct Pick {
    std::size_t scan, order;
  };
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<Pick> pool;
    for (std::size_t s = 0; s < accepted.size(); ++s)
      for (std::size_t o = 0; o < accepted[s][c].size(); ++o) pool.push_back({s, o});
    CounterRng rng(select_seed, static_cast<std::uint64_t>(c));
    rng.shuffle(std::span<Pick>(pool));
    pool.resize(static_cast<std::size_t>(count));
    std::sort(pool.begin(), pool.end(),
              [](const Pick& a, const Pick& b) { return a.scan != b.scan ? a.scan < b.scan : a.order < b.order; });
    for (const Pick& p : pool) {
      const Accepted& a = accepted[p.scan][c][p.order];
      set.records.push_back({label_from_index(c), a.center, atlas.scans[p.scan].scan_id, a.fill});
    }
  }

  set.tensors.resize(set.records.size() * static_cast<std::size_t>(shape.elements()));
  parallel_for(static_cast<std::int64_t>(set.records.size()), [&](std::int64_t r) {
    const PatchRecord& rec = set.records[static_cast<std::size_t>(r)];
    const AtlasScan& scan = *atlas.find(rec.scan_id);
    extract_patch_into(*scan.volume, rec.origin, spec.size_px, spec.dimensionality,
                       std::span<float>(set.tensors).subspan(static_cast<std::size_t>(r) * shape.elements(),
                                                             static_cast<std::size_t>(shape.elements())));
  });
  return set;
}

std::vector<std::vector<std::string>> split_scans(std::vector<std::string> ids, std::span<const double> fractions,
                                                  std::uint64_t seed) {
  if (fractions.empty()) throw InvalidArgument("split: no fractions given");
  double total = 0.0;
  for (const double f : fractions) {
    if (!(f >= 0.0)) throw InvalidArgument("split: fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("split: fractions must sum to 1");
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const std::size_t n = ids.size(), k = fractions.size();
  if (n < k) throw InvalidArgument("split: fewer scans (" + std::to_string(n) + ") than splits (" + std::to_string(k) + ")");

  // Largest-remainder apportionment, then make sure no split is empty.
  std::vector<std::size_t> sizes(k);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += sizes[i];
    remainders.emplace_back(exact - static_cast<double>(sizes[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++sizes[remainders[r % k].second];
  for (std::size_t i = 0; i < k; ++i)
    if (sizes[i] == 0) {
      const auto donor = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      --sizes[donor];
      sizes[i] = 1;
    }

  CounterRng rng(derive_seed(seed, "split"));
  rng.shuffle(std::span<std::string>(ids));
  std::vector<std::vector<std::string>> out(k);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < k; ++i) {
    out[i].assign(ids.begin() + static_cast<std::ptrdiff_t>(pos), ids.begin() + static_cast<std::ptrdiff_t>(pos + sizes[i]));
    std::sort(out[i].begin(), out[i].end());
    pos += sizes[i];
  }
  return out;
}

PatchSet select_records(const PatchSet& set, std::span<const std::size_t> indices) {
  PatchSet out;
  out.spec = set.spec;
  out.split_tag = set.split_tag;
  const auto n = static_cast<std::size_t>(set.shape().elements());
  out.records.reserve(indices.size());
  out.tensors.reserve(indices.size() * n);
  for (const std::size_t i : indices) {
    out.records.push_back(set.records.at(i));
    const auto t = set.tensor(i);
    out.tensors.insert(out.tensors.end(), t.begin(), t.end());
  }
  return out;
}

std::vector<PatchSet> split_patchset(const PatchSet& set, std::span<const double> fractions, std::uint64_t seed) {
  const auto groups = split_scans(set.scan_ids(), fractions, seed);
  std::vector<PatchSet> out;
  for (const auto& ids : groups) {
    const std::set<std::string> wanted(ids.begin(), ids.end());
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < set.records.size(); ++i)
      if (wanted.count(set.records[i].scan_id)) idx.push_back(i);
    out.push_back(select_records(set, idx));
  }
  return out;
}

}  // namespace lungtex
