#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/texture.hpp"

namespace lungtex {

struct ScoredSample {
  std::array<double, kNumClasses> probabilities{};
  TextureLabel true_label = TextureLabel::kNormal;
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::string method;
  std::vector<std::size_t> n;
  // Degrees of freedom where the reference distribution has them; NaN otherwise.
  double df = std::numeric_limits<double>::quiet_NaN();
};

struct Correlation {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> midranks(std::span<const double> values);

// Linear-interpolation quantile (R type 7); values need not be sorted.
double quantile(std::span<const double> values, double q);
double median(std::span<const double> values);

// Mann-Whitney form of the ROC area: (concordant + ties/2) / (pos * neg).
// labels are 0/1.  Throws InvalidArgument unless both classes are present.
double auc_binary(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct MulticlassAuc {
  // One-vs-rest area per class; empty when the class (or its complement) is absent.
  std::array<std::optional<double>, kNumClasses> per_class{};
  // Unweighted mean over defined per-class areas.
  double macro = 0.0;
  // Area over the pooled (sample, class) binarization.
  double micro = 0.0;
};

MulticlassAuc multiclass_auc(std::span<const ScoredSample> samples);

Correlation spearman(std::span<const double> x, std::span<const double> y);

enum class KruskalMethod { kAuto, kExact, kChiSquare };
// Statistic H is tie-corrected.  kAuto takes the exact permutation null
// (every assignment of the pooled midranks to groups of the observed sizes)
// when there are at most kKruskalExactLimit assignments, the chi-square
// approximation with k-1 degrees of freedom otherwise.
inline constexpr double kKruskalExactLimit = 2.0e6;
TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups, KruskalMethod method = KruskalMethod::kAuto);

enum class RankSumMethod { kAuto, kExact, kNormal };

// Two-sided Wilcoxon rank-sum / Mann-Whitney test; statistic is U of `a`.
// kAuto uses the exact null distribution of the (mid)rank sum when both
// samples have fewer than 50 values, the tie-corrected normal approximation
// otherwise.
TestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                             RankSumMethod method = RankSumMethod::kAuto);

TestResult welch_t(std::span<const double> a, std::span<const double> b);

using ContingencyTable = std::vector<std::vector<std::int64_t>>;

// Pearson chi-square test of independence, no continuity correction.
TestResult pearson_chi2(const ContingencyTable& table);

// Two-sided Fisher exact test: exact enumeration for 2x2, Monte Carlo with
// fixed margins (seeded) for larger tables.
TestResult fisher_exact(const ContingencyTable& table, std::uint64_t seed = 0, std::int64_t draws = 100000);

}  // namespace lungtex
