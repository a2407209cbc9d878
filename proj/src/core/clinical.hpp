#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "core/reconstruct.hpp"
#include "core/stats.hpp"

namespace lungtex {

// One row of the clinical table: scan_id,dlco_pct,emphysema_grade,fibrosis_grade
struct ClinicalRecord {
  std::string scan_id;
  double dlco_pct = 0.0;
  SeverityGrade emphysema_grade = SeverityGrade::kNone;
  SeverityGrade fibrosis_grade = SeverityGrade::kNone;
};

const std::vector<std::string>& clinical_csv_columns();
std::vector<ClinicalRecord> read_clinical_csv(std::istream& in);
void write_clinical_csv(std::span<const ClinicalRecord> records, std::ostream& out);

struct FeatureCorrelation {
  QuantFeature feature = QuantFeature::kNormal;
  Correlation spearman;  // NaN when undefined (n < 3 or constant ranks)
  std::string note;
};

struct ClinicalCorrelation {
  std::size_t n = 0;
  std::vector<FeatureCorrelation> dlco;  // one per feature, kAllFeatures order
  SeveritySummary by_emphysema_grade;    // emphysema_pct across emphysema grades
  SeveritySummary by_fibrosis_grade;     // fibrosis_pct across fibrosis grades
};

// Joins on scan_id.  Every report needs a clinical row; a missing one throws
// InvalidArgument naming the scan.  Clinical rows without a report are ignored.
ClinicalCorrelation correlate_clinical(std::span<const QuantReport> reports, std::span<const ClinicalRecord> clinical);

}  // namespace lungtex
