#pragma once

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace npcnet {
namespace stats {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean: empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation (n-1 denominator).
inline double sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Linear-interpolation quantile on a sorted copy (the R type-7 rule).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }

// Adjusted Fisher-Pearson coefficient is overkill here; plain g1 skewness.
inline double skewness(const std::vector<double>& v) {
  if (v.size() < 3) return 0.0;
  const double m = mean(v);
  double m2 = 0.0, m3 = 0.0;
  for (double x : v) {
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= static_cast<double>(v.size());
  m3 /= static_cast<double>(v.size());
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Two-sided p-value from a standard-normal statistic.
inline double normal_two_sided_p(double z) {
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

struct MannWhitneyResult {
  double u = 0.0;        // U statistic of the first sample
  double z = 0.0;        // tie-corrected normal approximation
  double p_value = 1.0;  // two-sided
};

// Two-sided Mann-Whitney U with midranks and the tie-corrected normal
// approximation (no continuity correction, so that the type-I rate sits
// at the nominal level for the discrete scores this project feeds it).
inline MannWhitneyResult mann_whitney_u(const std::vector<double>& a,
                                        const std::vector<double>& b) {
  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();
  if (n1 == 0 || n2 == 0) {
    throw std::invalid_argument("mann_whitney_u: empty sample");
  }
  struct Entry {
    double value;
    int group;
  };
  std::vector<Entry> all;
  all.reserve(n1 + n2);
  for (double x : a) all.push_back({x, 0});
  for (double x : b) all.push_back({x, 1});
  std::sort(all.begin(), all.end(),
            [](const Entry& l, const Entry& r) { return l.value < r.value; });

  // Midranks plus the tie-correction accumulator sum(t^3 - t).
  const std::size_t n = all.size();
  std::vector<double> rank(n);
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && all[j + 1].value == all[i].value) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[k] = mid;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  double rank_sum_a = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (all[k].group == 0) rank_sum_a += rank[k];
  }
  const double fn1 = static_cast<double>(n1);
  const double fn2 = static_cast<double>(n2);
  const double fn = static_cast<double>(n);
  MannWhitneyResult res;
  res.u = rank_sum_a - fn1 * (fn1 + 1.0) / 2.0;

  const double mu = fn1 * fn2 / 2.0;
  const double var =
      fn1 * fn2 / 12.0 * ((fn + 1.0) - tie_term / (fn * (fn - 1.0)));
  if (var <= 0.0) {
    // all observations tied; no evidence either way
    res.z = 0.0;
    res.p_value = 1.0;
    return res;
  }
  res.z = (res.u - mu) / std::sqrt(var);
  res.p_value = normal_two_sided_p(res.z);
  return res;
}

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;
};

// Welch's two-sample t-test, two-sided.
inline TTestResult t_test(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("t_test: need at least 2 per group");
  }
  const double ma = mean(a), mb = mean(b);
  const double va = sd(a) * sd(a), vb = sd(b) * sd(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double se2 = va / na + vb / nb;
  TTestResult res;
  if (se2 <= 0.0) {
    res.t = ma == mb ? 0.0 : std::numeric_limits<double>::infinity();
    res.p_value = ma == mb ? 1.0 : 0.0;
    return res;
  }
  res.t = (ma - mb) / std::sqrt(se2);
  const double df = se2 * se2 /
                    (va * va / (na * na * (na - 1.0)) +
                     vb * vb / (nb * nb * (nb - 1.0)));
  boost::math::students_t dist(df);
  res.p_value = 2.0 * boost::math::cdf(dist, -std::abs(res.t));
  return res;
}

struct ChiSquareResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

// Pearson chi-square test of independence on an r x c count table.
inline ChiSquareResult chi_square_test(
    const std::vector<std::vector<double>>& counts) {
  const std::size_t r = counts.size();
  if (r == 0) throw std::invalid_argument("chi_square_test: empty table");
  const std::size_t c = counts.front().size();
  std::vector<double> row_tot(r, 0.0), col_tot(c, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      row_tot[i] += counts[i][j];
      col_tot[j] += counts[i][j];
      total += counts[i][j];
    }
  }
  ChiSquareResult res;
  res.df = static_cast<double>((r - 1) * (c - 1));
  if (total <= 0.0 || res.df <= 0.0) return res;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double expected = row_tot[i] * col_tot[j] / total;
      if (expected > 0.0) {
        const double d = counts[i][j] - expected;
        res.statistic += d * d / expected;
      }
    }
  }
  boost::math::chi_squared dist(res.df);
  res.p_value = boost::math::cdf(boost::math::complement(dist, res.statistic));
  return res;
}

struct GroupTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// One-way ANOVA F test across k groups.
inline GroupTestResult anova_oneway(const std::vector<std::vector<double>>& groups) {
  const std::size_t k = groups.size();
  if (k < 2) throw std::invalid_argument("anova_oneway: need at least 2 groups");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("anova_oneway: empty group");
    for (double x : g) total += x;
    n += g.size();
  }
  if (n <= k) throw std::invalid_argument("anova_oneway: no within-group freedom");
  const double grand = total / static_cast<double>(n);
  double ssb = 0.0, ssw = 0.0;
  for (const auto& g : groups) {
    const double m = mean(g);
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double x : g) ssw += (x - m) * (x - m);
  }
  GroupTestResult res;
  const double df1 = static_cast<double>(k - 1);
  const double df2 = static_cast<double>(n - k);
  if (ssw <= 0.0) {
    res.statistic = ssb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    res.p_value = ssb > 0.0 ? 0.0 : 1.0;
    return res;
  }
  res.statistic = (ssb / df1) / (ssw / df2);
  boost::math::fisher_f dist(df1, df2);
  res.p_value = boost::math::cdf(boost::math::complement(dist, res.statistic));
  return res;
}

// Kruskal-Wallis H test with midranks and tie correction.
inline GroupTestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  const std::size_t k = groups.size();
  if (k < 2) throw std::invalid_argument("kruskal_wallis: need at least 2 groups");
  struct Entry {
    double value;
    std::size_t group;
  };
  std::vector<Entry> all;
  for (std::size_t g = 0; g < k; ++g) {
    if (groups[g].empty()) throw std::invalid_argument("kruskal_wallis: empty group");
    for (double x : groups[g]) all.push_back({x, g});
  }
  const std::size_t n = all.size();
  std::sort(all.begin(), all.end(),
            [](const Entry& l, const Entry& r) { return l.value < r.value; });

  std::vector<double> rank_sum(k, 0.0);
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && all[j + 1].value == all[i].value) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) rank_sum[all[m].group] += mid;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  const double fn = static_cast<double>(n);
  double h = 0.0;
  for (std::size_t g = 0; g < k; ++g) {
    const double ng = static_cast<double>(groups[g].size());
    h += rank_sum[g] * rank_sum[g] / ng;
  }
  h = 12.0 / (fn * (fn + 1.0)) * h - 3.0 * (fn + 1.0);
  const double correction = 1.0 - tie_term / (fn * fn * fn - fn);
  GroupTestResult res;
  if (correction <= 0.0) return res;  // every observation tied
  res.statistic = h / correction;
  boost::math::chi_squared dist(static_cast<double>(k - 1));
  res.p_value = boost::math::cdf(boost::math::complement(dist, res.statistic));
  return res;
}

// Mean and sample SD over per-seed values, for the 10-seed protocol.
struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

inline MeanSd mean_sd(const std::vector<double>& values) {
  MeanSd out;
  out.n = values.size();
  if (values.empty()) return out;
  out.mean = mean(values);
  out.sd = sd(values);
  return out;
}

}  // namespace stats

using stats::anova_oneway;
using stats::chi_square_test;
using stats::kruskal_wallis;
using stats::mann_whitney_u;
using stats::mean;
using stats::mean_sd;
using stats::MeanSd;
using stats::median;
using stats::normal_cdf;
using stats::normal_two_sided_p;
using stats::quantile;
using stats::sd;
using stats::skewness;
using stats::t_test;

}  // namespace npcnet
