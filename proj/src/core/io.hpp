#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/atlas.hpp"
#include "core/clinical.hpp"
#include "core/config.hpp"
#include "core/evaluate.hpp"
#include "core/hypersearch.hpp"
#include "core/network.hpp"
#include "core/phantom.hpp"
#include "core/reconstruct.hpp"

namespace lungtex {

// ---- Weight file ----
//
//   "TQWT" | u32 version | u32 n | n bytes of JSON ModelConfig | u32 tensors
//   per tensor: u32 name length | name | u32 rank | rank x u32 dims | float32 values
//   u32 CRC-32 of every preceding byte
//
// All integers and floats little-endian.
inline constexpr std::uint32_t kWeightFileVersion = 1;

std::string serialize_model(const Model& model);
Model deserialize_model(const std::string& bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// ---- Patch set archive ----
//
// <base>.json          header (spec, split, shape, counts, provenance)
// <base>.f32           record-major float32 little-endian tensors
// <base>.records.csv   label,i,j,k,scan_id,fill
void save_patchset(const PatchSet& set, const std::filesystem::path& base);
PatchSet load_patchset(const std::filesystem::path& base);

// ---- Scan manifest ----
//
// {"scans":[{"scan_id","volume","labels","lung"}], "splits":{"train":[...],...}}
// Paths are relative to the manifest's directory; "lung" is optional.
struct ManifestEntry {
  std::string scan_id;
  std::filesystem::path volume;
  std::filesystem::path labels;
  std::optional<std::filesystem::path> lung;
};

struct Manifest {
  std::vector<ManifestEntry> scans;
  std::vector<std::pair<std::string, std::vector<std::string>>> splits;

  const ManifestEntry& entry(const std::string& scan_id) const;
  const std::vector<std::string>& split(const std::string& name) const;
};

// Loaded manifests hold absolute paths.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// ---- Report JSON ----
Json to_json(const PhantomCensus& census);
Json to_json(const QuantReport& report);
Json to_json(const SplitEvaluation& eval);
Json to_json(const SearchResult& result);
Json to_json(const SeveritySummary& summary);
Json to_json(const TestResult& result);
Json to_json(const ClinicalCorrelation& result);
// Without the per-epoch history.
Json to_json(const TrainResult& result);

void write_json(const Json& j, const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace lungtex
