#include "core/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/train.hpp"

namespace lungtex {

namespace {

const std::array<const char*, kNumClasses> kProbColumns = {"p_normal", "p_gg", "p_ggr", "p_honeycombing",
                                                           "p_emphysema"};

}  // namespace

std::vector<ScoredSample> score_patchset(Model& model, const PatchSet& set) {
  const std::vector<double> probs = predict_proba(model, set);
  std::vector<ScoredSample> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::copy_n(probs.begin() + static_cast<std::ptrdiff_t>(i * kNumClasses), kNumClasses, out[i].probabilities.begin());
    out[i].true_label = set.records[i].label;
  }
  return out;
}

SplitEvaluation evaluate_split(const std::string& split, std::span<const ScoredSample> samples) {
  SplitEvaluation e;
  e.split = split;
  e.n = samples.size();
  std::size_t correct = 0;
  for (const auto& s : samples) {
    ++e.class_counts[index_of(s.true_label)];
    const auto best = std::max_element(s.probabilities.begin(), s.probabilities.end()) - s.probabilities.begin();
    if (best == index_of(s.true_label)) ++correct;
  }
  e.accuracy = samples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(samples.size());
  e.auc = multiclass_auc(samples);
  return e;
}

void write_scores_csv(std::span<const ScoredSplit> splits, std::ostream& out) {
  out << "split,true_label";
  for (const char* c : kProbColumns) out << "," << c;
  out << "\n";
  char buf[64];
  for (const auto& sp : splits)
    for (const auto& s : sp.samples) {
      out << sp.split << "," << name_of(s.true_label);
      for (double p : s.probabilities) {
        std::snprintf(buf, sizeof buf, "%.17g", p);
        out << "," << buf;
      }
      out << "\n";
    }
}

std::vector<ScoredSplit> read_scores_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  const std::size_t split_col = table.column("split"), label_col = table.column("true_label");
  std::array<std::size_t, kNumClasses> prob_cols{};
  for (int c = 0; c < kNumClasses; ++c) prob_cols[c] = table.column(kProbColumns[c]);
  std::vector<ScoredSplit> out;
  for (const auto& row : table.rows) {
    ScoredSample s;
    const auto label = label_from_name(row[label_col]);
    if (!label) throw FormatError("scores csv: unknown true_label '" + row[label_col] + "'");
    s.true_label = *label;
    for (int c = 0; c < kNumClasses; ++c) s.probabilities[c] = parse_double(row[prob_cols[c]], kProbColumns[c]);
    auto it = std::find_if(out.begin(), out.end(), [&](const ScoredSplit& sp) { return sp.split == row[split_col]; });
    if (it == out.end()) {
      out.push_back(ScoredSplit{row[split_col], {}});
      it = out.end() - 1;
    }
    it->samples.push_back(s);
  }
  return out;
}

}  // namespace lungtex
