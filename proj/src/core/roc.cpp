#include "core/roc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "core/error.hpp"

namespace lungtex {

std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("roc: scores and labels differ in length");
  const auto pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; }));
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw InvalidArgument("roc: need at least one positive and one negative");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> pts;
  pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) {
      (labels[order[i]] ? tp : fp) += 1.0;
      ++i;
    }
    pts.push_back({thr, fp / neg, tp / pos});
  }
  return pts;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  return area;
}

std::vector<RocCurve> multiclass_roc(std::span<const ScoredSample> samples) {
  std::vector<RocCurve> curves;
  std::vector<double> scores(samples.size());
  std::vector<std::uint8_t> labels(samples.size());
  for (int c = 0; c < kNumClasses; ++c) {
    std::size_t positives = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      scores[i] = samples[i].probabilities[c];
      labels[i] = index_of(samples[i].true_label) == c;
      positives += labels[i];
    }
    if (positives == 0 || positives == samples.size()) continue;
    RocCurve curve{std::string(name_of(label_from_index(c))), roc_points(scores, labels), 0.0};
    curve.auc = auc_binary(scores, labels);
    curves.push_back(std::move(curve));
  }
  scores.clear();
  labels.clear();
  for (const auto& s : samples)
    for (int c = 0; c < kNumClasses; ++c) {
      scores.push_back(s.probabilities[c]);
      labels.push_back(index_of(s.true_label) == c);
    }
  RocCurve micro{"micro", roc_points(scores, labels), 0.0};
  micro.auc = auc_binary(scores, labels);
  curves.push_back(std::move(micro));
  return curves;
}

namespace {
std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

void write_roc_csv(std::ostream& out, std::span<const RocCurve> curves) {
  out << "class,threshold,fpr,tpr\n";
  for (const auto& c : curves)
    for (const auto& p : c.points) out << c.name << ',' << num(p.threshold) << ',' << num(p.fpr) << ',' << num(p.tpr) << '\n';
}

void write_roc_svg(std::ostream& out, std::span<const RocCurve> curves, const std::string& title) {
  static constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#000000"};
  constexpr double kSize = 400.0, kMargin = 50.0;
  auto px = [&](double fpr) { return kMargin + fpr * kSize; };
  auto py = [&](double tpr) { return kMargin + (1.0 - tpr) * kSize; };
  char buf[160];

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize + 2 * kMargin + 160 << "\" height=\""
      << kSize + 2 * kMargin << "\">\n";
  out << "<text x=\"" << kMargin << "\" y=\"30\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
      << "\" stroke=\"#ccc\" stroke-dasharray=\"4\"/>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = curves[c].name == "micro" ? kColors[5] : kColors[c % 5];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : curves[c].points) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(p.fpr), py(p.tpr));
      out << buf;
    }
    out << "\"/>\n";
    std::snprintf(buf, sizeof buf, "%s (AUC %.3f)", curves[c].name.c_str(), curves[c].auc);
    out << "<text x=\"" << kMargin + kSize + 10 << "\" y=\"" << kMargin + 20 + 18 * static_cast<double>(c)
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color << "\">" << buf << "</text>\n";
  }
  out << "<text x=\"" << kMargin + kSize / 2 - 60 << "\" y=\"" << kMargin + kSize + 35
      << "\" font-family=\"sans-serif\" font-size=\"12\">False positive rate</text>\n";
  out << "<text x=\"12\" y=\"" << kMargin + kSize / 2 << "\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 12 "
      << kMargin + kSize / 2 << ")\">True positive rate</text>\n";
  out << "</svg>\n";
}

}  // namespace lungtex
