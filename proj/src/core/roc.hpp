#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "core/stats.hpp"

namespace lungtex {

struct RocPoint {
  double threshold = 0.0;  // +inf for the (0,0) start point
  double fpr = 0.0;
  double tpr = 0.0;
};

// Threshold sweep over distinct scores, descending; starts at (0,0), ends at (1,1).
std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const std::uint8_t> labels);
double trapezoid_area(std::span<const RocPoint> points);

struct RocCurve {
  std::string name;  // class name or "micro"
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// One-vs-rest curve per present class plus the pooled micro-average curve.
std::vector<RocCurve> multiclass_roc(std::span<const ScoredSample> samples);

// CSV columns: class,threshold,fpr,tpr
void write_roc_csv(std::ostream& out, std::span<const RocCurve> curves);
void write_roc_svg(std::ostream& out, std::span<const RocCurve> curves, const std::string& title);

}  // namespace lungtex
