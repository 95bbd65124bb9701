#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "npcnet/cohort.hpp"
#include "npcnet/stats.hpp"
#include "npcnet/tensor.hpp"

namespace npcnet {

namespace detail {

inline double row_distance(const Tensor& points, std::size_t a, std::size_t b) {
  double d2 = 0.0;
  for (std::size_t c = 0; c < points.cols(); ++c) {
    const double diff = points(a, c) - points(b, c);
    d2 += diff * diff;
  }
  return std::sqrt(d2);
}

inline void check_labels(const Tensor& points, const std::vector<int>& labels, int k) {
  if (labels.size() != points.rows()) {
    throw std::invalid_argument("one label per embedding row required");
  }
  if (k < 2) throw std::invalid_argument("internal metrics need at least 2 clusters");
  std::vector<std::size_t> sizes(k, 0);
  for (int l : labels) {
    if (l < 0 || l >= k) throw std::out_of_range("label outside cluster range");
    ++sizes[l];
  }
  for (int j = 0; j < k; ++j) {
    if (sizes[j] == 0) throw std::invalid_argument("internal metrics need non-empty clusters");
  }
}

}  // namespace detail

// Mean over points of (b - a) / max(a, b); singleton points contribute 0.
// Undefined (nullopt) when every cluster is a singleton.
inline std::optional<double> silhouette(const Tensor& points, const std::vector<int>& labels,
                                        int k) {
  detail::check_labels(points, labels, k);
  const std::size_t n = points.rows();
  std::vector<std::size_t> sizes(k, 0);
  for (int l : labels) ++sizes[l];
  if (*std::max_element(sizes.begin(), sizes.end()) < 2) return std::nullopt;

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> dist_sum(k, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      dist_sum[labels[j]] += detail::row_distance(points, i, j);
    }
    const int own = labels[i];
    if (sizes[own] == 1) continue;  // convention: s(i) = 0
    const double a = dist_sum[own] / (sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      if (j == own) continue;
      b = std::min(b, dist_sum[j] / sizes[j]);
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / n;
}

// (between dispersion / (k-1)) / (within dispersion / (n-k)).
// Undefined when n == k or the within dispersion is zero.
inline std::optional<double> calinski_harabasz(const Tensor& points,
                                               const std::vector<int>& labels, int k) {
  detail::check_labels(points, labels, k);
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  if (n == static_cast<std::size_t>(k)) return std::nullopt;

  Tensor centroids = Tensor::matrix(k, d, 0.0);
  std::vector<double> sizes(k, 0.0);
  std::vector<double> overall(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    sizes[labels[i]] += 1.0;
    for (std::size_t c = 0; c < d; ++c) {
      centroids(labels[i], c) += points(i, c);
      overall[c] += points(i, c);
    }
  }
  for (int j = 0; j < k; ++j)
    for (std::size_t c = 0; c < d; ++c) centroids(j, c) /= sizes[j];
  for (std::size_t c = 0; c < d; ++c) overall[c] /= n;

  double between = 0.0, within = 0.0;
  for (int j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = centroids(j, c) - overall[c];
      between += sizes[j] * diff * diff;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = points(i, c) - centroids(labels[i], c);
      within += diff * diff;
    }
  }
  if (within <= 0.0) return std::nullopt;
  return (between / (k - 1)) / (within / (n - k));
}

// Mean over clusters of max_{j != i} (sigma_i + sigma_j) / d(c_i, c_j).
// Undefined when two centroids coincide.
inline std::optional<double> davies_bouldin(const Tensor& points,
                                            const std::vector<int>& labels, int k) {
  detail::check_labels(points, labels, k);
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();

  Tensor centroids = Tensor::matrix(k, d, 0.0);
  std::vector<double> sizes(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    sizes[labels[i]] += 1.0;
    for (std::size_t c = 0; c < d; ++c) centroids(labels[i], c) += points(i, c);
  }
  for (int j = 0; j < k; ++j)
    for (std::size_t c = 0; c < d; ++c) centroids(j, c) /= sizes[j];

  std::vector<double> sigma(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = points(i, c) - centroids(labels[i], c);
      d2 += diff * diff;
    }
    sigma[labels[i]] += std::sqrt(d2);
  }
  for (int j = 0; j < k; ++j) sigma[j] /= sizes[j];

  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    double worst = 0.0;
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      double c2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = centroids(i, c) - centroids(j, c);
        c2 += diff * diff;
      }
      const double dist = std::sqrt(c2);
      if (dist <= 0.0) return std::nullopt;
      worst = std::max(worst, (sigma[i] + sigma[j]) / dist);
    }
    total += worst;
  }
  return total / k;
}

// --- SOFA stratification and trajectory divergence ---------------------------

inline constexpr int kStrataCount = 6;
inline constexpr int kHourFirst = 7;
inline constexpr int kHourLast = 24;

inline int sofa_stratum(int score) {
  if (score <= 1) return 0;
  if (score <= 3) return 1;
  if (score <= 5) return 2;
  if (score <= 7) return 3;
  if (score <= 9) return 4;
  return 5;  // [10, 24]
}

inline std::string stratum_label(int stratum) {
  static const char* kLabels[kStrataCount] = {"0-1", "2-3", "4-5", "6-7", "8-9", "10-24"};
  return kLabels[stratum];
}

struct Strata {
  std::array<std::vector<std::size_t>, kStrataCount> groups;  // episode indices
  std::size_t excluded = 0;  // no hour-6 SOFA
};

inline Strata stratify_by_sofa6(const std::vector<Episode>& episodes) {
  Strata out;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (auto s = episodes[i].sofa_at(6)) {
      out.groups[sofa_stratum(*s)].push_back(i);
    } else {
      ++out.excluded;
    }
  }
  return out;
}

struct PairTest {
  int a = 0;
  int b = 0;
  double p = 1.0;
  bool testable = false;
};

inline constexpr std::size_t kMinTestGroup = 3;

// Two-sided Mann-Whitney U on the hour's SOFA scores for each phenotype pair.
inline std::vector<PairTest> pairwise_trajectory_test(
    const std::vector<Episode>& episodes, const std::vector<std::size_t>& stratum,
    const std::vector<int>& labels, int k, int hour) {
  if (hour < kHourFirst || hour > kHourLast) {
    throw std::invalid_argument("trajectory tests cover hours 7 through 24");
  }
  std::vector<std::vector<double>> scores(k);
  for (std::size_t idx : stratum) {
    if (auto s = episodes[idx].sofa_at(hour)) scores[labels[idx]].push_back(*s);
  }
  std::vector<PairTest> out;
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      PairTest t;
      t.a = a;
      t.b = b;
      if (scores[a].size() >= kMinTestGroup && scores[b].size() >= kMinTestGroup) {
        t.testable = true;
        t.p = mann_whitney_u(scores[a], scores[b]).p_value;
      }
      out.push_back(t);
    }
  }
  return out;
}

struct TrajectoryCell {
  int stratum = 0;
  int hour = 0;
  int a = 0;
  int b = 0;
  double p = 1.0;
  bool testable = false;
};

struct TrajectoryGrid {
  std::vector<TrajectoryCell> cells;
  int k = 0;
  std::size_t excluded_episodes = 0;
};

inline TrajectoryGrid build_trajectory_grid(const std::vector<Episode>& episodes,
                                            const std::vector<int>& labels, int k) {
  Strata strata = stratify_by_sofa6(episodes);
  TrajectoryGrid grid;
  grid.k = k;
  grid.excluded_episodes = strata.excluded;
  for (int s = 0; s < kStrataCount; ++s) {
    for (int hour = kHourFirst; hour <= kHourLast; ++hour) {
      for (const PairTest& t :
           pairwise_trajectory_test(episodes, strata.groups[s], labels, k, hour)) {
        grid.cells.push_back({s, hour, t.a, t.b, t.p, t.testable});
      }
    }
  }
  return grid;
}

// Fraction of testable comparisons that are significant at alpha.
inline std::optional<double> tdi(const TrajectoryGrid& grid, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  std::size_t testable = 0, significant = 0;
  for (const auto& c : grid.cells) {
    if (!c.testable) continue;
    ++testable;
    if (c.p < alpha) ++significant;
  }
  if (testable == 0) return std::nullopt;
  return static_cast<double>(significant) / static_cast<double>(testable);
}

// --- Kaplan-Meier ------------------------------------------------------------

struct KmPoint {
  double time = 0.0;
  double survival = 1.0;
  std::size_t at_risk = 0;
  std::size_t events = 0;
};

struct KmCurve {
  std::vector<KmPoint> points;  // one per distinct event time
  std::size_t n = 0;
};

namespace detail {

inline unsigned __int128 gcd128(unsigned __int128 a, unsigned __int128 b) {
  while (b != 0) {
    const unsigned __int128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

}  // namespace detail

// Product-limit estimator, right-censored at the horizon. The running product
// is kept as an exact rational while it fits so small fixtures are exact.
inline KmCurve kaplan_meier_curve(std::vector<std::pair<double, bool>> subjects,
                                  double horizon_days) {
  for (auto& [time, event] : subjects) {
    if (time > horizon_days) {
      time = horizon_days;
      event = false;
    }
  }
  std::sort(subjects.begin(), subjects.end());

  KmCurve curve;
  curve.n = subjects.size();
  unsigned __int128 num = 1, den = 1;
  bool exact = true;
  double survival = 1.0;
  std::size_t at_risk = subjects.size();
  std::size_t i = 0;
  while (i < subjects.size()) {
    const double t = subjects[i].first;
    std::size_t deaths = 0, leaving = 0;
    while (i < subjects.size() && subjects[i].first == t) {
      if (subjects[i].second) ++deaths;
      ++leaving;
      ++i;
    }
    if (deaths > 0) {
      if (exact) {
        constexpr unsigned __int128 kLimit = static_cast<unsigned __int128>(1) << 100;
        if (num > kLimit || den > kLimit) {
          survival = static_cast<double>(num) / static_cast<double>(den);
          exact = false;
        }
      }
      if (exact) {
        num *= static_cast<unsigned __int128>(at_risk - deaths);
        den *= static_cast<unsigned __int128>(at_risk);
        const unsigned __int128 g = detail::gcd128(num, den);
        if (g > 1) {
          num /= g;
          den /= g;
        }
        survival = static_cast<double>(num) / static_cast<double>(den);
      } else {
        survival *= static_cast<double>(at_risk - deaths) / static_cast<double>(at_risk);
      }
      curve.points.push_back({t, survival, at_risk, deaths});
    }
    at_risk -= leaving;
  }
  return curve;
}

inline std::vector<KmCurve> kaplan_meier(const std::vector<Episode>& episodes,
                                         const std::vector<int>& labels, int k,
                                         double horizon_days = 365.0) {
  std::vector<std::vector<std::pair<double, bool>>> groups(k);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    groups[labels[i]].emplace_back(episodes[i].survival.time_days,
                                   episodes[i].survival.event);
  }
  std::vector<KmCurve> curves;
  for (int j = 0; j < k; ++j) curves.push_back(kaplan_meier_curve(groups[j], horizon_days));
  return curves;
}

inline double survival_at(const KmCurve& curve, double t) {
  double s = 1.0;
  for (const auto& p : curve.points) {
    if (p.time > t) break;
    s = p.survival;
  }
  return s;
}

// --- characteristics table ---------------------------------------------------

struct CharacteristicRow {
  std::string label;
  bool categorical = false;
  bool median_iqr = false;
  std::vector<std::string> cells;  // one per phenotype
  double p_value = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

// Per-phenotype summaries: continuous variables as mean (SD), switching to
// median [IQR] when |skewness| > 1 pooled across the cohort; categoricals as
// count (%). Continuous p-values come from the k-group rank or variance test
// matching the presentation; categorical p-values from the chi-square test.
inline std::vector<CharacteristicRow> phenotype_characteristics(
    const std::vector<Episode>& episodes, const std::vector<int>& labels, int k,
    const CohortSchema& schema, double window_hours = 6.0) {
  std::vector<CharacteristicRow> rows;
  std::vector<std::size_t> sizes(k, 0);
  for (int l : labels) {
    if (l < 0 || l >= k) throw std::out_of_range("label outside cluster range");
    ++sizes[l];
  }

  CharacteristicRow header;
  header.label = "n";
  header.categorical = true;
  for (int j = 0; j < k; ++j) header.cells.push_back(std::to_string(sizes[j]));
  rows.push_back(std::move(header));

  // time-varying variables: per-episode in-window mean
  for (const auto& vr : schema.variables) {
    std::vector<std::vector<double>> groups(k);
    std::vector<double> pooled;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& m : episodes[i].events) {
        if (m.variable != vr.name || m.timestamp_hours > window_hours) continue;
        sum += m.value;
        ++count;
      }
      if (count == 0) continue;
      const double v = sum / count;
      groups[labels[i]].push_back(v);
      pooled.push_back(v);
    }
    CharacteristicRow row;
    row.label = vr.name;
    row.median_iqr = pooled.size() >= 3 && std::abs(skewness(pooled)) > 1.0;
    for (int j = 0; j < k; ++j) {
      auto& g = groups[j];
      if (g.empty()) {
        row.cells.push_back("-");
      } else if (row.median_iqr) {
        std::sort(g.begin(), g.end());
        row.cells.push_back(detail::fmt2(median(g)) + " [" +
                            detail::fmt2(quantile(g, 0.25)) + ", " +
                            detail::fmt2(quantile(g, 0.75)) + "]");
      } else {
        row.cells.push_back(detail::fmt2(mean(g)) + " (" +
                            detail::fmt2(g.size() > 1 ? sd(g) : 0.0) + ")");
      }
    }
    std::vector<std::vector<double>> testable;
    for (const auto& g : groups)
      if (g.size() >= 2) testable.push_back(g);
    if (testable.size() >= 2) {
      row.p_value = row.median_iqr ? kruskal_wallis(testable).p_value
                                   : anova_oneway(testable).p_value;
    }
    rows.push_back(std::move(row));
  }

  // static variables and discharge status: counts (%) with a chi-square test
  auto categorical_rows = [&](const std::string& var_label,
                              const std::vector<std::string>& categories,
                              auto category_of) {
    std::vector<std::vector<double>> table(k, std::vector<double>(categories.size(), 0.0));
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      table[labels[i]][category_of(episodes[i])] += 1.0;
    }
    double p = std::numeric_limits<double>::quiet_NaN();
    bool all_nonzero_margin = true;
    for (std::size_t c = 0; c < categories.size(); ++c) {
      double col = 0.0;
      for (int j = 0; j < k; ++j) col += table[j][c];
      if (col == 0.0) all_nonzero_margin = false;
    }
    if (all_nonzero_margin && categories.size() >= 2) p = chi_square_test(table).p_value;
    for (std::size_t c = 0; c < categories.size(); ++c) {
      CharacteristicRow row;
      row.label = var_label + ": " + categories[c];
      row.categorical = true;
      row.p_value = c == 0 ? p : std::numeric_limits<double>::quiet_NaN();
      for (int j = 0; j < k; ++j) {
        const double count = table[j][c];
        const double pct = sizes[j] > 0 ? 100.0 * count / sizes[j] : 0.0;
        row.cells.push_back(std::to_string(static_cast<long>(count)) + " (" +
                            detail::fmt2(pct) + "%)");
      }
      rows.push_back(std::move(row));
    }
  };

  for (std::size_t sv = 0; sv < schema.static_variables.size(); ++sv) {
    categorical_rows(schema.static_variables[sv].name,
                     schema.static_variables[sv].categories,
                     [sv](const Episode& ep) { return ep.statics[sv]; });
  }
  categorical_rows("discharge_status", schema.discharge_statuses,
                   [](const Episode& ep) { return ep.discharge_status; });
  return rows;
}

// --- partition agreement and outcome spread ----------------------------------

inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("partitions must align");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("need at least 2 points");
  const int ka = *std::max_element(a.begin(), a.end()) + 1;
  const int kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<std::vector<double>> table(ka, std::vector<double>(kb, 0.0));
  for (std::size_t i = 0; i < n; ++i) table[a[i]][b[i]] += 1.0;

  auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (int i = 0; i < ka; ++i) {
    double row = 0.0;
    for (int j = 0; j < kb; ++j) {
      sum_ij += choose2(table[i][j]);
      row += table[i][j];
    }
    sum_a += choose2(row);
  }
  for (int j = 0; j < kb; ++j) {
    double col = 0.0;
    for (int i = 0; i < ka; ++i) col += table[i][j];
    sum_b += choose2(col);
  }
  const double expected = sum_a * sum_b / choose2(static_cast<double>(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  if (denom == 0.0) return 1.0;  // both partitions trivial and identical in structure
  return (sum_ij - expected) / denom;
}

// Max minus min in-hospital mortality rate across non-empty clusters.
inline double mortality_spread(const std::vector<Episode>& episodes,
                               const std::vector<int>& labels, int k, int death_status) {
  std::vector<double> deaths(k, 0.0), totals(k, 0.0);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    totals[labels[i]] += 1.0;
    if (episodes[i].discharge_status == death_status) deaths[labels[i]] += 1.0;
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  int populated = 0;
  for (int j = 0; j < k; ++j) {
    if (totals[j] == 0.0) continue;
    ++populated;
    const double rate = deaths[j] / totals[j];
    lo = std::min(lo, rate);
    hi = std::max(hi, rate);
  }
  return populated >= 2 ? hi - lo : 0.0;
}

}  // namespace npcnet
