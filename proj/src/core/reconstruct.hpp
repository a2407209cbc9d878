#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/network.hpp"
#include "core/stats.hpp"
#include "core/volume.hpp"

namespace lungtex {

// Anything that maps HU patches to class probabilities.
class PatchClassifier {
 public:
  virtual ~PatchClassifier() = default;
  virtual int size_px() const = 0;
  virtual Dimensionality dimensionality() const = 0;
  // count patches (layout of patch_shape) -> count x kNumClasses probabilities.
  virtual std::vector<double> predict(std::span<const float> hu_patches, std::size_t count) = 0;
};

class NetworkClassifier : public PatchClassifier {
 public:
  explicit NetworkClassifier(Model& model) : model_(model) {}
  int size_px() const override { return model_.config().input_size_px; }
  Dimensionality dimensionality() const override { return model_.config().dimensionality; }
  std::vector<double> predict(std::span<const float> hu_patches, std::size_t count) override;

 private:
  Model& model_;
};

// Always predicts one class.
class ConstantClassifier : public PatchClassifier {
 public:
  ConstantClassifier(TextureLabel label, int size_px, Dimensionality dim) : label_(label), size_(size_px), dim_(dim) {}
  int size_px() const override { return size_; }
  Dimensionality dimensionality() const override { return dim_; }
  std::vector<double> predict(std::span<const float> hu_patches, std::size_t count) override;

 private:
  TextureLabel label_;
  int size_;
  Dimensionality dim_;
};

struct ReconstructionConfig {
  std::array<int, 3> stride = {8, 8, 1};
  // Patches classified per inference call.
  int batch_patches = 256;

  void validate() const;
  friend bool operator==(const ReconstructionConfig&, const ReconstructionConfig&) = default;
};

// Sliding-window reconstruction.
//
// Write-back blocks of stride voxels tile the lung bounding box starting at
// its minimum corner; blocks that contain no lung voxel are skipped.  The
// patch origin of a block is block_min + floor(stride / 2) per axis, and its
// footprint is shifted inward (edge clamp) when it would leave the volume.
// The predicted class is written to the block's lung voxels only, so every
// lung voxel gets exactly one class.
ClassificationMap classify_volume(PatchClassifier& classifier, const Volume& volume, const LungMask& lung,
                                  const ReconstructionConfig& cfg);

// Patch origins classify_volume visits, in visiting order.
std::vector<Voxel> reconstruction_origins(const LungMask& lung, const ReconstructionConfig& cfg);

struct ClassQuant {
  std::int64_t voxels = 0;
  double volume_ml = 0.0;
  double pct = 0.0;
};

struct QuantReport {
  std::string scan_id;
  std::int64_t lung_voxels = 0;
  double total_lung_ml = 0.0;
  std::array<ClassQuant, kNumClasses> classes{};
  double fibrosis_pct = 0.0;

  const ClassQuant& of(TextureLabel l) const { return classes[index_of(l)]; }
};

// Requires the map to be nonzero exactly on the lung.
QuantReport quantify(const ClassificationMap& map, const LungMask& lung, const std::string& scan_id);

// Column order of the QuantReport CSV.
const std::vector<std::string>& quant_csv_columns();
void write_quant_csv_header(std::ostream& out);
void write_quant_csv_row(const QuantReport& report, std::ostream& out);
// Reads rows written by write_quant_csv_row (with header).  Only scan_id,
// total_ml and percentages are recovered.
std::vector<QuantReport> read_quant_csv(std::istream& in);

// Quantified features a severity summary can be computed for.
enum class QuantFeature : std::uint8_t { kNormal, kGroundGlass, kGroundGlassReticulation, kHoneycombing, kEmphysema, kFibrosis };
inline constexpr std::array<QuantFeature, 6> kAllFeatures = {
    QuantFeature::kNormal,       QuantFeature::kGroundGlass, QuantFeature::kGroundGlassReticulation,
    QuantFeature::kHoneycombing, QuantFeature::kEmphysema,   QuantFeature::kFibrosis};
std::string feature_name(QuantFeature f);  // e.g. "emphysema_pct"
double feature_value(const QuantReport& r, QuantFeature f);

enum class SeverityGrade : std::uint8_t { kNone = 0, kMild = 1, kModerate = 2, kSevere = 3 };
inline constexpr std::array<SeverityGrade, 4> kAllGrades = {SeverityGrade::kNone, SeverityGrade::kMild,
                                                            SeverityGrade::kModerate, SeverityGrade::kSevere};
std::string_view name_of(SeverityGrade g);
std::optional<SeverityGrade> severity_from_name(std::string_view name);

struct GradeStats {
  SeverityGrade grade = SeverityGrade::kNone;
  std::size_t n = 0;
  double median = 0.0, q1 = 0.0, q3 = 0.0;
};

struct FeatureSeverity {
  QuantFeature feature = QuantFeature::kEmphysema;
  std::vector<GradeStats> grades;  // non-empty grades, in grade order
  // Across the non-empty grades; NaN when fewer than two are present.
  TestResult kruskal_wallis;
};

struct SeveritySummary {
  std::vector<FeatureSeverity> features;
  std::vector<std::string> warnings;
};

// Median (quartiles) of each feature per grade and a Kruskal-Wallis test
// across grades.  Empty grade groups are skipped with a warning.
SeveritySummary severity_bucket_summary(std::span<const QuantReport> reports,
                                        const std::map<std::string, SeverityGrade>& grades,
                                        std::span<const QuantFeature> features = kAllFeatures);

}  // namespace lungtex
