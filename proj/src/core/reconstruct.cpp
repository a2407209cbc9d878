#include "core/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/parallel.hpp"
#include "core/patch.hpp"
#include "core/train.hpp"

namespace lungtex {

std::vector<double> NetworkClassifier::predict(std::span<const float> hu_patches, std::size_t count) {
  return predict_proba(model_, hu_patches, count);
}

std::vector<double> ConstantClassifier::predict(std::span<const float>, std::size_t count) {
  std::vector<double> out(count * kNumClasses, 0.0);
  for (std::size_t i = 0; i < count; ++i) out[i * kNumClasses + index_of(label_)] = 1.0;
  return out;
}

void ReconstructionConfig::validate() const {
  for (int s : stride)
    if (s < 1) throw InvalidArgument("reconstruction stride components must be >= 1");
  if (batch_patches < 1) throw InvalidArgument("reconstruction batch_patches must be >= 1");
}

namespace {

struct Box {
  std::array<int, 3> lo{}, hi{};  // inclusive
};

Box lung_bounds(const LungMask& lung) {
  const auto& dims = lung.grid().dims;
  Box box;
  box.lo = dims;
  box.hi = {-1, -1, -1};
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i)
        if (lung(i, j, k)) {
          box.lo = {std::min(box.lo[0], i), std::min(box.lo[1], j), std::min(box.lo[2], k)};
          box.hi = {std::max(box.hi[0], i), std::max(box.hi[1], j), std::max(box.hi[2], k)};
        }
  if (box.hi[0] < 0) throw InvalidArgument("lung mask is empty");
  return box;
}

bool block_has_lung(const LungMask& lung, const std::array<int, 3>& lo, const std::array<int, 3>& hi) {
  for (int k = lo[2]; k <= hi[2]; ++k)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int i = lo[0]; i <= hi[0]; ++i)
        if (lung(i, j, k)) return true;
  return false;
}

std::array<int, 3> block_lo(const Voxel& origin, const ReconstructionConfig& cfg) {
  return {origin.i - cfg.stride[0] / 2, origin.j - cfg.stride[1] / 2, origin.k - cfg.stride[2] / 2};
}

// The grid origin when it is a lung voxel, otherwise the block's lung voxel
// nearest to it (first in x-fastest order on ties).
Voxel extraction_center(const LungMask& lung, const Voxel& origin, const ReconstructionConfig& cfg) {
  const auto& dims = lung.grid().dims;
  if (lung.grid().contains(origin.i, origin.j, origin.k) && lung(origin.i, origin.j, origin.k)) return origin;
  const auto lo = block_lo(origin, cfg);
  Voxel best = origin;
  std::int64_t best_d = -1;
  for (int k = lo[2]; k < std::min(lo[2] + cfg.stride[2], dims[2]); ++k)
    for (int j = lo[1]; j < std::min(lo[1] + cfg.stride[1], dims[1]); ++j)
      for (int i = lo[0]; i < std::min(lo[0] + cfg.stride[0], dims[0]); ++i) {
        if (!lung(i, j, k)) continue;
        const std::int64_t di = i - origin.i, dj = j - origin.j, dk = k - origin.k;
        const std::int64_t d = di * di + dj * dj + dk * dk;
        if (best_d < 0 || d < best_d) {
          best_d = d;
          best = Voxel{i, j, k};
        }
      }
  return best;
}

}  // namespace

std::vector<Voxel> reconstruction_origins(const LungMask& lung, const ReconstructionConfig& cfg) {
  cfg.validate();
  const Box box = lung_bounds(lung);
  const auto& dims = lung.grid().dims;
  std::vector<Voxel> out;
  for (int k = box.lo[2]; k <= box.hi[2]; k += cfg.stride[2])
    for (int j = box.lo[1]; j <= box.hi[1]; j += cfg.stride[1])
      for (int i = box.lo[0]; i <= box.hi[0]; i += cfg.stride[0]) {
        const std::array<int, 3> lo{i, j, k};
        const std::array<int, 3> hi{std::min(i + cfg.stride[0], dims[0]) - 1, std::min(j + cfg.stride[1], dims[1]) - 1,
                                    std::min(k + cfg.stride[2], dims[2]) - 1};
        if (block_has_lung(lung, lo, hi))
          out.push_back(Voxel{i + cfg.stride[0] / 2, j + cfg.stride[1] / 2, k + cfg.stride[2] / 2});
      }
  return out;
}

ClassificationMap classify_volume(PatchClassifier& classifier, const Volume& volume, const LungMask& lung,
                                  const ReconstructionConfig& cfg) {
  cfg.validate();
  require_congruent(volume.grid(), lung.grid(), "classify_volume: volume and lung mask");
  const int n = classifier.size_px();
  const Dimensionality dim = classifier.dimensionality();
  const auto& dims = volume.grid().dims;
  const bool spans_z = dim != Dimensionality::k2D;
  if (n > dims[0] || n > dims[1] || (spans_z && n > dims[2]))
    throw InvalidArgument("classify_volume: model patch size exceeds the volume");

  const std::vector<Voxel> origins = reconstruction_origins(lung, cfg);
  const std::int64_t elems = patch_shape(n, dim).elements();
  const int half = n / 2;
  auto clamp_axis = [&](int c, int axis) { return std::clamp(c, half, dims[axis] - n + half); };

  ClassificationMap map(volume.grid(), 0);
  std::vector<float> buffer;
  for (std::size_t start = 0; start < origins.size(); start += static_cast<std::size_t>(cfg.batch_patches)) {
    const std::size_t count = std::min(static_cast<std::size_t>(cfg.batch_patches), origins.size() - start);
    buffer.resize(count * static_cast<std::size_t>(elems));
    parallel_for(static_cast<std::int64_t>(count), [&](std::int64_t p) {
      const Voxel o = extraction_center(lung, origins[start + p], cfg);
      const Voxel c{clamp_axis(o.i, 0), clamp_axis(o.j, 1), spans_z ? clamp_axis(o.k, 2) : std::min(o.k, dims[2] - 1)};
      extract_patch_into(volume, c, n, dim, std::span<float>(buffer.data() + p * elems, static_cast<std::size_t>(elems)));
    });
    const std::vector<double> probs = classifier.predict(buffer, count);
    if (probs.size() != count * kNumClasses) throw InvalidArgument("classifier returned the wrong number of outputs");
    parallel_for(static_cast<std::int64_t>(count), [&](std::int64_t p) {
      const double* row = probs.data() + p * kNumClasses;
      const int cls = static_cast<int>(std::max_element(row, row + kNumClasses) - row);
      const std::uint8_t code = code_of(label_from_index(cls));
      const auto lo = block_lo(origins[start + p], cfg);
      for (int k = lo[2]; k < std::min(lo[2] + cfg.stride[2], dims[2]); ++k)
        for (int j = lo[1]; j < std::min(lo[1] + cfg.stride[1], dims[1]); ++j)
          for (int i = lo[0]; i < std::min(lo[0] + cfg.stride[0], dims[0]); ++i)
            if (lung(i, j, k)) map(i, j, k) = code;
    });
  }
  return map;
}

QuantReport quantify(const ClassificationMap& map, const LungMask& lung, const std::string& scan_id) {
  require_congruent(map.grid(), lung.grid(), "quantify: map and lung mask");
  validate_codes(map);
  QuantReport r;
  r.scan_id = scan_id;
  std::array<std::int64_t, kNumClasses> counts{};
  for (std::int64_t i = 0; i < map.size(); ++i) {
    const bool in_lung = lung[i] != 0;
    const std::uint8_t code = map[i];
    if (in_lung != (code != 0))
      throw InvalidArgument(in_lung ? "quantify: lung voxel without a class" : "quantify: class assigned outside the lung");
    if (in_lung) {
      ++r.lung_voxels;
      ++counts[code - 1];
    }
  }
  if (r.lung_voxels == 0) throw InvalidArgument("quantify: lung mask is empty");
  const double voxel_ml = map.grid().voxel_volume_ml();
  r.total_lung_ml = static_cast<double>(r.lung_voxels) * voxel_ml;
  for (int c = 0; c < kNumClasses; ++c) {
    r.classes[c].voxels = counts[c];
    r.classes[c].volume_ml = static_cast<double>(counts[c]) * voxel_ml;
    r.classes[c].pct = 100.0 * static_cast<double>(counts[c]) / static_cast<double>(r.lung_voxels);
  }
  r.fibrosis_pct = r.of(TextureLabel::kGroundGlassReticulation).pct + r.of(TextureLabel::kHoneycombing).pct;
  return r;
}

const std::vector<std::string>& quant_csv_columns() {
  static const std::vector<std::string> cols = {"scan_id",          "total_ml",      "normal_pct",  "gg_pct", "ggr_pct",
                                                "honeycombing_pct", "emphysema_pct", "fibrosis_pct"};
  return cols;
}

void write_quant_csv_header(std::ostream& out) {
  const auto& cols = quant_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
}

void write_quant_csv_row(const QuantReport& r, std::ostream& out) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << r.scan_id << "," << num(r.total_lung_ml);
  for (const auto& c : r.classes) out << "," << num(c.pct);
  out << "," << num(r.fibrosis_pct) << "\n";
}

std::vector<QuantReport> read_quant_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  const auto& cols = quant_csv_columns();
  std::vector<std::size_t> pos;
  for (const auto& c : cols) pos.push_back(table.column(c));
  std::vector<QuantReport> out;
  for (const auto& row : table.rows) {
    QuantReport r;
    r.scan_id = row[pos[0]];
    if (r.scan_id.empty()) throw FormatError("quant csv: empty scan_id");
    r.total_lung_ml = parse_double(row[pos[1]], cols[1]);
    for (int c = 0; c < kNumClasses; ++c) r.classes[c].pct = parse_double(row[pos[2 + c]], cols[2 + c]);
    r.fibrosis_pct = parse_double(row[pos[7]], cols[7]);
    out.push_back(r);
  }
  return out;
}

std::string feature_name(QuantFeature f) {
  switch (f) {
    case QuantFeature::kNormal: return "normal_pct";
    case QuantFeature::kGroundGlass: return "gg_pct";
    case QuantFeature::kGroundGlassReticulation: return "ggr_pct";
    case QuantFeature::kHoneycombing: return "honeycombing_pct";
    case QuantFeature::kEmphysema: return "emphysema_pct";
    case QuantFeature::kFibrosis: return "fibrosis_pct";
  }
  return "unknown";
}

double feature_value(const QuantReport& r, QuantFeature f) {
  if (f == QuantFeature::kFibrosis) return r.fibrosis_pct;
  return r.classes[static_cast<int>(f)].pct;
}

std::string_view name_of(SeverityGrade g) {
  switch (g) {
    case SeverityGrade::kNone: return "none";
    case SeverityGrade::kMild: return "mild";
    case SeverityGrade::kModerate: return "moderate";
    case SeverityGrade::kSevere: return "severe";
  }
  return "none";
}

std::optional<SeverityGrade> severity_from_name(std::string_view name) {
  for (SeverityGrade g : kAllGrades)
    if (name_of(g) == name) return g;
  return std::nullopt;
}

SeveritySummary severity_bucket_summary(std::span<const QuantReport> reports,
                                        const std::map<std::string, SeverityGrade>& grades,
                                        std::span<const QuantFeature> features) {
  SeveritySummary out;
  std::array<std::vector<const QuantReport*>, kAllGrades.size()> groups;
  for (const auto& r : reports) {
    const auto it = grades.find(r.scan_id);
    if (it == grades.end()) throw InvalidArgument("severity summary: no grade for scan '" + r.scan_id + "'");
    groups[static_cast<int>(it->second)].push_back(&r);
  }
  for (SeverityGrade g : kAllGrades)
    if (groups[static_cast<int>(g)].empty())
      out.warnings.push_back("grade '" + std::string(name_of(g)) + "' has no scans; skipped");

  for (QuantFeature f : features) {
    FeatureSeverity fs;
    fs.feature = f;
    std::vector<std::vector<double>> values;
    for (SeverityGrade g : kAllGrades) {
      const auto& members = groups[static_cast<int>(g)];
      if (members.empty()) continue;
      std::vector<double> v;
      for (const QuantReport* r : members) v.push_back(feature_value(*r, f));
      fs.grades.push_back(GradeStats{g, v.size(), median(v), quantile(v, 0.25), quantile(v, 0.75)});
      values.push_back(std::move(v));
    }
    if (values.size() >= 2) {
      fs.kruskal_wallis = kruskal_wallis(values);
    } else {
      fs.kruskal_wallis.statistic = std::nan("");
      fs.kruskal_wallis.p_value = std::nan("");
      fs.kruskal_wallis.method = "kruskal-wallis (not computed: fewer than two grades)";
    }
    out.features.push_back(std::move(fs));
  }
  return out;
}

}  // namespace lungtex
