#include "core/clinical.hpp"

#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>

#include "core/csv.hpp"
#include "core/error.hpp"

namespace lungtex {

namespace {

SeverityGrade parse_grade(const std::string& text, const std::string& column) {
  if (auto g = severity_from_name(text)) return *g;
  throw FormatError(column + " value '" + text + "' is not one of none, mild, moderate, severe");
}

}  // namespace

const std::vector<std::string>& clinical_csv_columns() {
  static const std::vector<std::string> cols{"scan_id", "dlco_pct", "emphysema_grade", "fibrosis_grade"};
  return cols;
}

namespace {

std::vector<ClinicalRecord> read_clinical_rows(std::istream& in) {
  const CsvTable t = read_csv(in);
  const std::size_t c_id = t.column("scan_id"), c_dlco = t.column("dlco_pct"), c_em = t.column("emphysema_grade"),
                    c_fib = t.column("fibrosis_grade");
  std::vector<ClinicalRecord> out;
  std::map<std::string, int> seen;
  for (const auto& row : t.rows) {
    ClinicalRecord r;
    r.scan_id = row[c_id];
    if (seen[r.scan_id]++) throw FormatError("scan_id '" + r.scan_id + "' listed twice");
    r.dlco_pct = parse_double(row[c_dlco], "dlco_pct");
    r.emphysema_grade = parse_grade(row[c_em], "emphysema_grade");
    r.fibrosis_grade = parse_grade(row[c_fib], "fibrosis_grade");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

std::vector<ClinicalRecord> read_clinical_csv(std::istream& in) {
  try {
    return read_clinical_rows(in);
  } catch (const FormatError& e) {
    throw InvalidArgument(std::string("clinical table: ") + e.what());
  }
}

void write_clinical_csv(std::span<const ClinicalRecord> records, std::ostream& out) {
  out << "scan_id,dlco_pct,emphysema_grade,fibrosis_grade\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.dlco_pct);
    out << r.scan_id << ',' << buf << ',' << name_of(r.emphysema_grade) << ',' << name_of(r.fibrosis_grade) << '\n';
  }
}

ClinicalCorrelation correlate_clinical(std::span<const QuantReport> reports, std::span<const ClinicalRecord> clinical) {
  std::map<std::string, const ClinicalRecord*> by_id;
  for (const auto& c : clinical) by_id[c.scan_id] = &c;
  std::vector<const ClinicalRecord*> joined;
  for (const auto& r : reports) {
    auto it = by_id.find(r.scan_id);
    if (it == by_id.end()) throw InvalidArgument("clinical table has no row for scan_id '" + r.scan_id + "'");
    joined.push_back(it->second);
  }

  ClinicalCorrelation out;
  out.n = reports.size();
  std::vector<double> dlco;
  for (const auto* c : joined) dlco.push_back(c->dlco_pct);
  for (QuantFeature f : kAllFeatures) {
    std::vector<double> x;
    for (const auto& r : reports) x.push_back(feature_value(r, f));
    FeatureCorrelation fc;
    fc.feature = f;
    try {
      fc.spearman = spearman(x, dlco);
    } catch (const InvalidArgument& e) {
      fc.spearman = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), x.size()};
      fc.note = e.what();
    }
    out.dlco.push_back(std::move(fc));
  }

  std::map<std::string, SeverityGrade> em, fib;
  for (std::size_t i = 0; i < joined.size(); ++i) {
    em[reports[i].scan_id] = joined[i]->emphysema_grade;
    fib[reports[i].scan_id] = joined[i]->fibrosis_grade;
  }
  const QuantFeature em_f[] = {QuantFeature::kEmphysema};
  const QuantFeature fib_f[] = {QuantFeature::kFibrosis};
  out.by_emphysema_grade = severity_bucket_summary(reports, em, em_f);
  out.by_fibrosis_grade = severity_bucket_summary(reports, fib, fib_f);
  return out;
}

}  // namespace lungtex
