#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "core/atlas.hpp"
#include "core/network.hpp"
#include "core/stats.hpp"

namespace lungtex {

// Model probabilities paired with the true labels of a patch set.
std::vector<ScoredSample> score_patchset(Model& model, const PatchSet& set);

struct SplitEvaluation {
  std::string split;
  std::size_t n = 0;
  std::array<std::size_t, kNumClasses> class_counts{};
  double accuracy = 0.0;
  MulticlassAuc auc;
};

SplitEvaluation evaluate_split(const std::string& split, std::span<const ScoredSample> samples);

// Scores CSV: split,true_label,p_normal,p_gg,p_ggr,p_honeycombing,p_emphysema
struct ScoredSplit {
  std::string split;
  std::vector<ScoredSample> samples;
};
void write_scores_csv(std::span<const ScoredSplit> splits, std::ostream& out);
// Splits in first-appearance order.
std::vector<ScoredSplit> read_scores_csv(std::istream& in);

}  // namespace lungtex
