#include <doctest.h>

#include <algorithm>
#include <set>

#include "common/fixtures.hpp"
#include "common/sampling_check.hpp"
#include "core/atlas.hpp"
#include "core/error.hpp"
#include "core/phantom.hpp"

using namespace lungtex;

namespace {

ScanInput blank_scan(const std::string& id, Grid g) { return {id, Volume(g, -800), LabelMask(g, 0)}; }

}  // namespace

TEST_CASE("atlas candidate lists") {
  const Grid g{{8, 8, 8}, {1, 1, 1}};
  SUBCASE("ten labelled voxels") {
    ScanInput s = blank_scan("a", g);
    for (int i = 0; i < 10; ++i) s.labels[i * 3] = code_of(TextureLabel::kGroundGlass);
    const Atlas atlas = build_atlas({s});
    CHECK(atlas.candidate_count(TextureLabel::kGroundGlass) == 10);
    CHECK(atlas.candidate_count(TextureLabel::kNormal) == 0);
    const auto& c = atlas.scans[0].candidates[index_of(TextureLabel::kGroundGlass)];
    CHECK(std::is_sorted(c.begin(), c.end()));
  }
  SUBCASE("empty mask") {
    const Atlas atlas = build_atlas({blank_scan("a", g)});
    for (TextureLabel l : kAllLabels) CHECK(atlas.candidate_count(l) == 0);
  }
  SUBCASE("duplicate ids and mismatched grids are rejected") {
    CHECK_THROWS_AS(build_atlas({blank_scan("a", g), blank_scan("a", g)}), InvalidArgument);
    ScanInput bad{"b", Volume(g), LabelMask(Grid{{8, 8, 7}, {1, 1, 1}})};
    CHECK_THROWS_AS(build_atlas({bad}), InvalidArgument);
  }
}

TEST_CASE("phantom atlas counts match the generator census") {
  PhantomSpec spec;
  spec.grid = Grid{{40, 40, 24}, {1, 1, 1}};
  spec.compartments = {{TextureLabel::kEmphysema, 0.25}, {TextureLabel::kHoneycombing, 0.1}};
  spec.rng_seed = 8;
  Phantom ph = generate_phantom(spec);
  const auto census = ph.census;
  const Atlas atlas = build_atlas({{"p", std::move(ph.volume), std::move(ph.labels)}});
  for (TextureLabel l : kAllLabels) CHECK(atlas.candidate_count(l) == census.counts[index_of(l)]);
}

TEST_CASE("sampled patch sets satisfy every sampling contract") {
  const Atlas atlas = testutil::random_atlas(3, 3, Grid{{24, 20, 16}, {0.8, 0.9, 1.5}});
  for (auto dim : {Dimensionality::k2D, Dimensionality::k2_5D, Dimensionality::k3D}) {
    const PatchSpec spec{5, dim, 2.5, 0.6, 40, 99};
    const PatchSet set = sample_patches(atlas, spec);
    CHECK(set.size() > 0);
    CHECK(testutil::verify_patchset(set, atlas).total() == 0);
  }
}

TEST_CASE("sampling is deterministic and seed dependent") {
  const Atlas atlas = testutil::random_atlas(4, 2, Grid{{20, 20, 12}, {1, 1, 1}});
  const PatchSpec spec{4, Dimensionality::k2_5D, 2.0, 0.5, 30, 5};
  const PatchSet a = sample_patches(atlas, spec), b = sample_patches(atlas, spec);
  CHECK(a.tensors == b.tensors);
  CHECK(a.records.size() == b.records.size());
  PatchSpec other = spec;
  other.rng_seed = 6;
  const PatchSet c = sample_patches(atlas, other);
  bool differs = c.records.size() != a.records.size();
  for (std::size_t i = 0; !differs && i < a.records.size(); ++i) differs = !(a.records[i].origin == c.records[i].origin);
  CHECK(differs);
}

TEST_CASE("an exclusion radius beyond the scan diagonal keeps one patch per class and scan") {
  const Atlas atlas = testutil::random_atlas(5, 3, Grid{{16, 16, 10}, {1, 1, 1}});
  const PatchSpec spec{3, Dimensionality::k2D, 100.0, 0.3, 1000, 1};
  const PatchSet set = sample_patches(atlas, spec);
  std::set<std::pair<std::string, int>> seen;
  for (const auto& r : set.records) CHECK(seen.insert({r.scan_id, index_of(r.label)}).second);
}

TEST_CASE("full fill over a single cube leaves only its centre") {
  const Grid g{{32, 16, 16}, {1, 1, 1}};
  ScanInput s = blank_scan("a", g);
  const int n = 5;
  for (int k = 2; k < 2 + n; ++k)
    for (int j = 6; j < 6 + n; ++j)
      for (int i = 3; i < 3 + n; ++i) s.labels(i, j, k) = code_of(TextureLabel::kEmphysema);
  for (int k = 9; k < 16; ++k)
    for (int j = 0; j < 16; ++j)
      for (int i = 0; i < 32; ++i) s.labels(i, j, k) = static_cast<std::uint8_t>(1 + i / 8);
  const Atlas atlas = build_atlas({s});
  const PatchSpec spec{n, Dimensionality::k3D, 0.01, 1.0, 1000, 3};
  std::vector<Voxel> feasible;
  for (auto idx : atlas.scans[0].candidates[index_of(TextureLabel::kEmphysema)]) {
    const Voxel v = g.voxel(idx);
    if (footprint_in_bounds(g, v, n, spec.dimensionality) &&
        fill_factor(*atlas.scans[0].labels, v, spec, TextureLabel::kEmphysema) >= 1.0)
      feasible.push_back(v);
  }
  REQUIRE(feasible.size() == 1);
  CHECK(feasible[0] == Voxel{3 + n / 2, 6 + n / 2, 2 + n / 2});
  const PatchSet set = sample_patches(atlas, spec);
  REQUIRE(set.size() == kNumClasses);
  for (const auto& r : set.records)
    if (r.label == TextureLabel::kEmphysema) CHECK(r.origin == feasible[0]);
  s.labels(3 + n / 2, 6 + n / 2, 2 + n / 2) = 0;
  CHECK_THROWS_AS(sample_patches(build_atlas({s}), spec), InfeasibleError);
}

TEST_CASE("balanced count is the smallest per-class feasible total") {
  const Atlas atlas = testutil::random_atlas(11, 2, Grid{{18, 18, 14}, {1, 1, 1}});
  const PatchSpec spec{4, Dimensionality::k2_5D, 0.01, 0.55, 1000000, 2};
  // Reference greedy with an exclusion radius below the voxel spacing: every in-bounds candidate with enough fill.
  std::array<std::int64_t, kNumClasses> feasible{};
  for (const auto& scan : atlas.scans)
    for (int c = 0; c < kNumClasses; ++c)
      for (auto idx : scan.candidates[c]) {
        const Voxel v = scan.labels->grid().voxel(idx);
        if (footprint_in_bounds(scan.labels->grid(), v, spec.size_px, spec.dimensionality) &&
            fill_factor(*scan.labels, v, spec, label_from_index(c)) >= spec.min_fill_factor)
          ++feasible[c];
      }
  const std::int64_t expected = *std::min_element(feasible.begin(), feasible.end());
  REQUIRE(expected > 0);
  const PatchSet set = sample_patches(atlas, spec);
  for (auto c : set.class_counts()) CHECK(c == expected);
  const PatchSet capped = sample_patches(atlas, spec, 7);
  for (auto c : capped.class_counts()) CHECK(c == std::min<std::int64_t>(7, expected));
}

TEST_CASE("scan splits") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("s" + std::to_string(i));
  const double f82[] = {0.8, 0.2};
  const auto parts = split_scans(ids, f82, 1);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].size() == 8);
  CHECK(parts[1].size() == 2);
  CHECK(split_scans(ids, f82, 1) == parts);
  std::set<std::string> all(parts[0].begin(), parts[0].end());
  all.insert(parts[1].begin(), parts[1].end());
  CHECK(all.size() == 10);
  CHECK_THROWS_AS(split_scans({"only"}, f82, 1), InvalidArgument);
  const double bad[] = {0.5, 0.4};
  CHECK_THROWS_AS(split_scans(ids, bad, 1), InvalidArgument);
}

TEST_CASE("patch sets split by scan, never by patch") {
  const Atlas atlas = testutil::random_atlas(12, 5, Grid{{16, 16, 10}, {1, 1, 1}});
  const PatchSet set = sample_patches(atlas, PatchSpec{3, Dimensionality::k2D, 1.0, 0.5, 50, 4});
  const double f[] = {0.6, 0.4};
  const auto parts = split_patchset(set, f, 9);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].size() + parts[1].size() == set.size());
  std::set<std::string> a, b;
  for (const auto& r : parts[0].records) a.insert(r.scan_id);
  for (const auto& r : parts[1].records) b.insert(r.scan_id);
  for (const auto& id : a) CHECK(b.count(id) == 0);
  CHECK(a.size() + b.size() == 5);
}
