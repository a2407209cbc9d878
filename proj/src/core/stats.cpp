#include "core/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>

#include "core/error.hpp"
#include "core/random.hpp"

namespace lungtex {

namespace {

double chi2_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), x));
}

double normal_two_sided(double z) {
  const double p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), std::abs(z)));
  return std::min(1.0, p);
}

double t_two_sided(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  const double p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(df), std::abs(t)));
  return std::clamp(p, 0.0, 1.0);
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sample_variance(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Sum of (t^3 - t) over tie groups in `values`.
double tie_term(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double term = 0.0;
  for (std::size_t i = 0; i < values.size();) {
    std::size_t j = i;
    while (j < values.size() && values[j] == values[i]) ++j;
    const double t = static_cast<double>(j - i);
    term += t * t * t - t;
    i = j;
  }
  return term;
}

double log_factorial(std::int64_t n) { return std::lgamma(static_cast<double>(n) + 1.0); }

}  // namespace

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of positions i+1..j
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
    i = j;
  }
  return ranks;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::span<const double> values) { return quantile(values, 0.5); }

double auc_binary(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("auc: scores and labels differ in length");
  double pos = 0.0, rank_sum = 0.0;
  const std::vector<double> ranks = midranks(scores);
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i]) {
      pos += 1.0;
      rank_sum += ranks[i];
    }
  const double neg = static_cast<double>(scores.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw InvalidArgument("auc: need at least one positive and one negative");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

MulticlassAuc multiclass_auc(std::span<const ScoredSample> samples) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& s : samples) ++counts[index_of(s.true_label)];
  const auto present = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  if (present < 2) throw InvalidArgument("multiclass auc: need at least two distinct labels");

  MulticlassAuc out;
  std::vector<double> scores(samples.size());
  std::vector<std::uint8_t> labels(samples.size());
  double macro_sum = 0.0;
  int macro_n = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (counts[c] == 0 || counts[c] == samples.size()) continue;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      scores[i] = samples[i].probabilities[c];
      labels[i] = index_of(samples[i].true_label) == c;
    }
    out.per_class[c] = auc_binary(scores, labels);
    macro_sum += *out.per_class[c];
    ++macro_n;
  }
  out.macro = macro_sum / macro_n;

  scores.resize(samples.size() * kNumClasses);
  labels.resize(samples.size() * kNumClasses);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (int c = 0; c < kNumClasses; ++c) {
      scores[i * kNumClasses + c] = samples[i].probabilities[c];
      labels[i * kNumClasses + c] = index_of(samples[i].true_label) == c;
    }
  out.micro = auc_binary(scores, labels);
  return out;
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: x and y differ in length");
  if (x.size() < 3) throw InvalidArgument("spearman: need n >= 3");
  const std::vector<double> rx = midranks(x), ry = midranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw InvalidArgument("spearman: zero variance in ranks");
  Correlation c;
  c.n = x.size();
  c.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(c.n) - 2.0;
  c.p_value = std::abs(c.rho) >= 1.0 ? 0.0 : t_two_sided(c.rho * std::sqrt(df / (1.0 - c.rho * c.rho)), df);
  return c;
}

namespace {

double multinomial_count(const std::vector<std::size_t>& sizes) {
  double logc = 0.0;
  std::size_t n = 0;
  for (auto m : sizes) {
    n += m;
    logc -= std::lgamma(static_cast<double>(m) + 1.0);
  }
  return std::exp(logc + std::lgamma(static_cast<double>(n) + 1.0));
}

// Fraction of group assignments whose sum of (rank sum)^2 / size reaches `observed`.
double kruskal_exact_p(const std::vector<double>& ranks, const std::vector<std::size_t>& sizes, double observed) {
  const std::size_t k = sizes.size();
  std::vector<std::size_t> left = sizes;
  std::vector<double> sums(k, 0.0);
  const double threshold = observed - 1e-9 * std::max(1.0, std::abs(observed));
  std::int64_t total = 0, extreme = 0;
  auto rec = [&](auto&& self, std::size_t pos) -> void {
    if (pos == ranks.size()) {
      double between = 0.0;
      for (std::size_t g = 0; g < k; ++g) between += sums[g] * sums[g] / static_cast<double>(sizes[g]);
      ++total;
      extreme += between >= threshold;
      return;
    }
    for (std::size_t g = 0; g < k; ++g) {
      if (left[g] == 0) continue;
      --left[g];
      sums[g] += ranks[pos];
      self(self, pos + 1);
      sums[g] -= ranks[pos];
      ++left[g];
    }
  };
  rec(rec, 0);
  return static_cast<double>(extreme) / static_cast<double>(total);
}

}  // namespace

TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups, KruskalMethod method) {
  if (groups.size() < 2) throw InvalidArgument("kruskal-wallis: need at least two groups");
  std::vector<double> pooled;
  TestResult r;
  for (const auto& g : groups) {
    if (g.empty()) throw InvalidArgument("kruskal-wallis: empty group");
    pooled.insert(pooled.end(), g.begin(), g.end());
    r.n.push_back(g.size());
  }
  const bool exact = method == KruskalMethod::kExact ||
                     (method == KruskalMethod::kAuto && multinomial_count(r.n) <= kKruskalExactLimit);
  if (exact && multinomial_count(r.n) > kKruskalExactLimit)
    throw InvalidArgument("kruskal-wallis: too many group assignments for the exact test");
  r.method = exact ? "Kruskal-Wallis rank sum test (exact permutation)" : "Kruskal-Wallis rank sum test";
  const auto n = static_cast<double>(pooled.size());
  r.df = static_cast<double>(groups.size() - 1);
  const double correction = 1.0 - tie_term(pooled) / (n * n * n - n);
  if (correction <= 0.0) {  // every value identical
    r.statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  const std::vector<double> ranks = midranks(pooled);
  double between = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) sum += ranks[offset + i];
    offset += g.size();
    between += sum * sum / static_cast<double>(g.size());
  }
  const double h = (12.0 / (n * (n + 1.0)) * between - 3.0 * (n + 1.0)) / correction;
  r.statistic = std::max(0.0, h);
  r.p_value = exact ? kruskal_exact_p(ranks, r.n, between) : chi2_sf(r.statistic, r.df);
  return r;
}

TestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, RankSumMethod method) {
  if (a.empty() || b.empty()) throw InvalidArgument("wilcoxon: both samples must be non-empty");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> ranks = midranks(pooled);
  const auto n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const double n = n1 + n2;
  double r1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r1 += ranks[i];

  TestResult r;
  r.n = {a.size(), b.size()};
  r.statistic = r1 - n1 * (n1 + 1.0) / 2.0;
  const double ties = tie_term(pooled);

  const bool exact = method == RankSumMethod::kExact ||
                     (method == RankSumMethod::kAuto && a.size() < 50 && b.size() < 50);
  if (exact) {
    // Doubled midranks are integers, so rank sums of every size-n1 subset can be
    // tabulated exactly.  ways[k][s]: subsets of size k with doubled rank sum s.
    const std::size_t k1 = a.size(), total = pooled.size();
    std::vector<std::size_t> twice(total);
    for (std::size_t i = 0; i < total; ++i) twice[i] = static_cast<std::size_t>(std::llround(2.0 * ranks[i]));
    std::sort(twice.begin(), twice.end());
    const std::size_t smax = std::accumulate(twice.end() - static_cast<std::ptrdiff_t>(k1), twice.end(), std::size_t{0});
    std::vector<std::vector<double>> ways(k1 + 1, std::vector<double>(smax + 1, 0.0));
    ways[0][0] = 1.0;
    for (std::size_t i = 0; i < total; ++i)
      for (std::size_t k = std::min(k1, i + 1); k >= 1; --k)
        for (std::size_t s = smax + 1; s-- > twice[i];) ways[k][s] += ways[k - 1][s - twice[i]];
    const auto& dist = ways[k1];
    const double all = std::accumulate(dist.begin(), dist.end(), 0.0);
    // Null mean of the doubled rank sum is n1 (n + 1); the distribution is symmetric about it.
    const double mean = n1 * (n + 1.0);
    const double obs = std::abs(2.0 * r1 - mean);
    double extreme = 0.0;
    for (std::size_t s = 0; s <= smax; ++s)
      if (std::abs(static_cast<double>(s) - mean) >= obs - 1e-9) extreme += dist[s];
    r.p_value = std::min(1.0, extreme / all);
    r.method = "Wilcoxon rank sum exact test";
    return r;
  }

  const double mu = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  r.method = "Wilcoxon rank sum test with continuity correction";
  if (var <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double d = r.statistic - mu;
  const double corrected = d == 0.0 ? 0.0 : d - 0.5 * (d > 0 ? 1.0 : -1.0);
  r.p_value = normal_two_sided(corrected / std::sqrt(var));
  return r;
}

TestResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InvalidArgument("welch t: each sample needs at least two values");
  const double va = sample_variance(a) / static_cast<double>(a.size());
  const double vb = sample_variance(b) / static_cast<double>(b.size());
  if (va + vb == 0.0) throw InvalidArgument("welch t: both samples have zero variance");
  TestResult r;
  r.method = "Welch two-sample t-test";
  r.n = {a.size(), b.size()};
  r.statistic = (mean_of(a) - mean_of(b)) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  r.p_value = t_two_sided(r.statistic, r.df);
  return r;
}

namespace {

struct Margins {
  std::vector<std::int64_t> rows, cols;
  std::int64_t total = 0;
};

Margins checked_margins(const ContingencyTable& table) {
  if (table.empty() || table.front().empty()) throw InvalidArgument("contingency table is empty");
  Margins m;
  m.rows.assign(table.size(), 0);
  m.cols.assign(table.front().size(), 0);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].size() != m.cols.size()) throw InvalidArgument("contingency table rows differ in length");
    for (std::size_t j = 0; j < table[i].size(); ++j) {
      if (table[i][j] < 0) throw InvalidArgument("contingency table has a negative count");
      m.rows[i] += table[i][j];
      m.cols[j] += table[i][j];
    }
  }
  for (const auto* margin : {&m.rows, &m.cols})
    for (const std::int64_t v : *margin)
      if (v == 0) throw InvalidArgument("contingency table has an all-zero row or column");
  m.total = std::accumulate(m.rows.begin(), m.rows.end(), std::int64_t{0});
  return m;
}

}  // namespace

TestResult pearson_chi2(const ContingencyTable& table) {
  const Margins m = checked_margins(table);
  TestResult r;
  r.method = "Pearson's chi-squared test";
  r.n = {static_cast<std::size_t>(m.total)};
  double x2 = 0.0;
  for (std::size_t i = 0; i < m.rows.size(); ++i)
    for (std::size_t j = 0; j < m.cols.size(); ++j) {
      const double e = static_cast<double>(m.rows[i]) * static_cast<double>(m.cols[j]) / static_cast<double>(m.total);
      const double d = static_cast<double>(table[i][j]) - e;
      x2 += d * d / e;
    }
  r.statistic = x2;
  r.df = static_cast<double>((m.rows.size() - 1) * (m.cols.size() - 1));
  r.p_value = r.df > 0 ? chi2_sf(x2, r.df) : 1.0;
  return r;
}

TestResult fisher_exact(const ContingencyTable& table, std::uint64_t seed, std::int64_t draws) {
  const Margins m = checked_margins(table);
  TestResult r;
  r.n = {static_cast<std::size_t>(m.total)};
  constexpr double kRelTol = 1.0 + 1e-7;

  if (m.rows.size() == 2 && m.cols.size() == 2) {
    // Hypergeometric over the top-left cell with all margins fixed.
    const std::int64_t r1 = m.rows[0], c1 = m.cols[0], n = m.total;
    auto log_p = [&](std::int64_t a) {
      return log_factorial(r1) + log_factorial(n - r1) + log_factorial(c1) + log_factorial(n - c1) - log_factorial(n) -
             log_factorial(a) - log_factorial(r1 - a) - log_factorial(c1 - a) - log_factorial(n - r1 - c1 + a);
    };
    const double observed = std::exp(log_p(table[0][0]));
    double p = 0.0;
    for (std::int64_t a = std::max<std::int64_t>(0, r1 + c1 - n); a <= std::min(r1, c1); ++a) {
      const double pa = std::exp(log_p(a));
      if (pa <= observed * kRelTol) p += pa;
    }
    r.statistic = static_cast<double>(table[0][0]);
    r.p_value = std::min(1.0, p);
    r.method = "Fisher's exact test";
    return r;
  }

  if (draws < 1) throw InvalidArgument("fisher exact: Monte Carlo needs at least one draw");
  // -sum log(n_ij!) is the table-dependent part of log P(table | margins).
  auto table_score = [](const std::vector<std::int64_t>& cells) {
    double s = 0.0;
    for (const std::int64_t c : cells) s -= log_factorial(c);
    return s;
  };
  const std::size_t nr = m.rows.size(), nc = m.cols.size();
  std::vector<std::int64_t> cells(nr * nc);
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) cells[i * nc + j] = table[i][j];
  const double observed = table_score(cells);

  std::vector<std::uint32_t> column_of;
  for (std::size_t j = 0; j < nc; ++j) column_of.insert(column_of.end(), static_cast<std::size_t>(m.cols[j]), static_cast<std::uint32_t>(j));
  CounterRng rng(derive_seed(seed, "fisher-mc"));
  std::int64_t as_extreme = 0;
  for (std::int64_t d = 0; d < draws; ++d) {
    rng.shuffle(std::span<std::uint32_t>(column_of));
    std::fill(cells.begin(), cells.end(), 0);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < nr; ++i)
      for (std::int64_t t = 0; t < m.rows[i]; ++t) ++cells[i * nc + column_of[pos++]];
    if (table_score(cells) <= observed + 1e-7 * std::abs(observed)) ++as_extreme;
  }
  r.statistic = observed;
  r.p_value = static_cast<double>(as_extreme + 1) / static_cast<double>(draws + 1);
  r.method = "Fisher's exact test (Monte Carlo, " + std::to_string(draws) + " draws)";
  return r;
}

}  // namespace lungtex
