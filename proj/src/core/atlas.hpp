#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/patch.hpp"

namespace lungtex {

struct ScanInput {
  std::string scan_id;
  Volume volume;
  LabelMask labels;
};

struct AtlasScan {
  std::string scan_id;
  std::shared_ptr<const Volume> volume;
  std::shared_ptr<const LabelMask> labels;
  // Linear voxel indices carrying each class code, ascending (x fastest).
  std::array<std::vector<std::int64_t>, kNumClasses> candidates;
};

// Labeled texture regions of several scans, with per-class candidate centres.
struct Atlas {
  std::vector<AtlasScan> scans;

  std::int64_t candidate_count(TextureLabel label) const;
  const AtlasScan* find(const std::string& scan_id) const;
  // Scans whose ids appear in `ids`, in the atlas' own order.
  Atlas subset(std::span<const std::string> ids) const;
};

Atlas build_atlas(std::vector<ScanInput> scans);

struct PatchRecord {
  TextureLabel label = TextureLabel::kNormal;
  Voxel origin;
  std::string scan_id;
  double fill = 0.0;
};

struct PatchSet {
  PatchSpec spec;
  std::string split_tag = "train";
  std::vector<PatchRecord> records;
  // records.size() * patch_shape(spec).elements() HU values, record-major.
  std::vector<float> tensors;

  PatchShape shape() const { return patch_shape(spec); }
  std::size_t size() const { return records.size(); }
  std::span<const float> tensor(std::size_t i) const;
  std::array<std::int64_t, kNumClasses> class_counts() const;
  // Distinct scan ids in first-appearance order.
  std::vector<std::string> scan_ids() const;
};

// Balanced, seeded, exclusion-sphere patch sampling.
//
// Per scan and class the candidates are visited in a shuffled order and
// accepted greedily when the footprint is inside the volume, the fill factor
// reaches spec.min_fill_factor, and no already accepted centre of the same
// class in the same scan lies within selection_radius_mm.  Every class then
// keeps min(requested, smallest accepted total) patches, chosen by a seeded
// shuffle.  Throws InfeasibleError when a class accepts nothing.
PatchSet sample_patches(const Atlas& atlas, const PatchSpec& spec, std::optional<int> per_class_override = std::nullopt,
                        const std::string& split_tag = "train");

// Assigns whole scans to splits.  fractions must sum to 1; each split gets at
// least one scan.
std::vector<std::vector<std::string>> split_scans(std::vector<std::string> scan_ids, std::span<const double> fractions,
                                                  std::uint64_t seed);

// Splits a patch set by scan provenance, never by patch.
std::vector<PatchSet> split_patchset(const PatchSet& set, std::span<const double> fractions, std::uint64_t seed);

// Copy of `set` restricted to the given records.
PatchSet select_records(const PatchSet& set, std::span<const std::size_t> indices);

}  // namespace lungtex
