#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

// Brute-force reference implementations of the rank statistics.
namespace oracle {

inline double auc_pairs(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / den;
}

// Rank by counting: #smaller + (#equal + 1) / 2.
inline std::vector<double> count_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, eq = 0;
    for (double w : v) {
      less += w < v[i];
      eq += w == v[i];
    }
    r[i] = less + (eq + 1) / 2;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(count_ranks(x), count_ranks(y));
}

// Two-sided Student t tail by the finite series for integer df.
inline double t_two_sided(double t, int df) {
  const double th = std::atan(std::abs(t) / std::sqrt(static_cast<double>(df)));
  const double c = std::cos(th), s = std::sin(th);
  double a;
  if (df % 2 == 1) {
    double sum = 0, term = c;
    if (df > 1) {
      sum = c;
      for (int k = 3; k <= df - 2; k += 2) {
        term *= c * c * (k - 1) / k;
        sum += term;
      }
    }
    a = 2 / std::numbers::pi * (th + s * sum);
  } else {
    double sum = 1, term = 1;
    for (int k = 2; k <= df - 2; k += 2) {
      term *= c * c * (k - 1) / k;
      sum += term;
    }
    a = s * sum;
  }
  return 1 - a;
}

// H as the ratio of between-group to total rank variance (tie-aware).
inline double kw_h(const std::vector<std::vector<double>>& groups) {
  std::vector<double> pooled;
  for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
  const auto r = count_ranks(pooled);
  const double n = static_cast<double>(pooled.size()), rbar = (n + 1) / 2;
  double total = 0, between = 0;
  for (double v : r) total += (v - rbar) * (v - rbar);
  std::size_t off = 0;
  for (const auto& g : groups) {
    double m = 0;
    for (std::size_t i = 0; i < g.size(); ++i) m += r[off + i];
    m /= g.size();
    between += g.size() * (m - rbar) * (m - rbar);
    off += g.size();
  }
  return (n - 1) * between / total;
}

// Permutation p of H over every ordering of the pooled values.
inline double kw_permutation_p(const std::vector<std::vector<double>>& groups) {
  std::vector<double> pooled;
  for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
  const double obs = kw_h(groups);
  std::vector<int> idx(pooled.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::int64_t total = 0, extreme = 0;
  do {
    std::vector<std::vector<double>> perm;
    std::size_t off = 0;
    for (const auto& g : groups) {
      perm.emplace_back();
      for (std::size_t i = 0; i < g.size(); ++i) perm.back().push_back(pooled[idx[off + i]]);
      off += g.size();
    }
    ++total;
    extreme += kw_h(perm) >= obs - 1e-9;
  } while (std::next_permutation(idx.begin(), idx.end()));
  return static_cast<double>(extreme) / total;
}

// Chi-square upper tail for df 1..4 in closed form.
inline double chi2_sf(double x, int df) {
  const double e = std::exp(-x / 2);
  switch (df) {
    case 1: return std::erfc(std::sqrt(x / 2));
    case 2: return e;
    case 3: return std::erfc(std::sqrt(x / 2)) + std::sqrt(2 * x / std::numbers::pi) * e;
    case 4: return e * (1 + x / 2);
  }
  return std::nan("");
}

// Exact two-sided rank-sum p over every assignment of ranks to sample a.
inline double wilcoxon_exhaustive(const std::vector<double>& a, const std::vector<double>& b, double* u_out = nullptr) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto r = count_ranks(pooled);
  const int n = static_cast<int>(pooled.size()), n1 = static_cast<int>(a.size());
  double u_obs = -n1 * (n1 + 1) / 2.0;
  for (int i = 0; i < n1; ++i) u_obs += r[i];
  if (u_out) *u_out = u_obs;
  const double mid = n1 * (n - n1) / 2.0;
  std::int64_t total = 0, extreme = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != n1) continue;
    double u = -n1 * (n1 + 1) / 2.0;
    for (int i = 0; i < n; ++i)
      if (mask >> i & 1u) u += r[i];
    ++total;
    extreme += std::abs(u - mid) >= std::abs(u_obs - mid) - 1e-9;
  }
  return static_cast<double>(extreme) / total;
}

inline double log_factorial(std::int64_t n) { return std::lgamma(static_cast<double>(n) + 1); }

// Fisher exact p for an r x c table: sum over every table with the same
// margins whose probability does not exceed the observed one.
inline double fisher_exhaustive(const std::vector<std::vector<std::int64_t>>& t) {
  const std::size_t R = t.size(), C = t[0].size();
  std::vector<std::int64_t> rows(R, 0), cols(C, 0);
  std::int64_t n = 0;
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      rows[i] += t[i][j];
      cols[j] += t[i][j];
      n += t[i][j];
    }
  double base = -log_factorial(n);
  for (auto v : rows) base += log_factorial(v);
  for (auto v : cols) base += log_factorial(v);
  auto logp = [&](const std::vector<std::vector<std::int64_t>>& x) {
    double s = base;
    for (const auto& row : x)
      for (auto v : row) s -= log_factorial(v);
    return s;
  };
  const double obs = logp(t);
  double p = 0;
  std::vector<std::vector<std::int64_t>> x(R, std::vector<std::int64_t>(C, 0));
  std::vector<std::int64_t> colleft = cols;
  // Fill cell by cell; the last row and column are implied by the margins.
  auto rec = [&](auto&& self, std::size_t i, std::size_t j, std::int64_t rowleft) -> void {
    if (i + 1 == R) {
      for (std::size_t c = 0; c < C; ++c) x[i][c] = colleft[c];
      const double lp = logp(x);
      if (lp <= obs + 1e-7) p += std::exp(lp);
      return;
    }
    if (j + 1 == C) {
      if (rowleft > colleft[j]) return;
      x[i][j] = rowleft;
      colleft[j] -= rowleft;
      self(self, i + 1, 0, i + 1 < R ? rows[i + 1] : 0);
      colleft[j] += rowleft;
      return;
    }
    for (std::int64_t v = 0; v <= std::min(rowleft, colleft[j]); ++v) {
      x[i][j] = v;
      colleft[j] -= v;
      self(self, i, j + 1, rowleft - v);
      colleft[j] += v;
    }
  };
  rec(rec, 0, 0, rows[0]);
  return std::min(1.0, p);
}

}  // namespace oracle
