#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "npcnet/autodiff.hpp"
#include "npcnet/rng.hpp"
#include "npcnet/tensor.hpp"

namespace npcnet {

struct CentroidSet {
  Tensor centroids;            // k x d
  std::vector<double> counts;  // per-cluster update counters

  int k() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }
};

namespace detail {

inline double squared_distance_to_row(const Tensor& points, std::size_t i,
                                      const Tensor& centroids, std::size_t j) {
  double d2 = 0.0;
  for (std::size_t c = 0; c < centroids.cols(); ++c) {
    const double diff = points(i, c) - centroids(j, c);
    d2 += diff * diff;
  }
  return d2;
}

}  // namespace detail

// Nearest centroid by Euclidean distance; ties break to the lowest index.
inline int assign_cluster(const CentroidSet& cs, const Tensor& points, std::size_t row) {
  for (std::size_t c = 0; c < points.cols(); ++c) {
    if (!std::isfinite(points(row, c))) {
      throw std::invalid_argument("assign_cluster: non-finite embedding");
    }
  }
  int best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cs.k(); ++j) {
    const double d2 = detail::squared_distance_to_row(points, row, cs.centroids, j);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = j;
    }
  }
  return best;
}

inline std::vector<int> assign_all(const CentroidSet& cs, const Tensor& points) {
  std::vector<int> labels(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    labels[i] = assign_cluster(cs, points, i);
  }
  return labels;
}

// Sum over the batch of squared distances to the assigned centroids.
// Differentiable w.r.t. the embeddings; assignments and centroids are frozen.
inline Var clustering_loss(const Var& embeddings, const std::vector<int>& assignments,
                           const CentroidSet& cs) {
  const Tensor& e = embeddings.value();
  if (assignments.size() != e.rows()) {
    throw std::invalid_argument("clustering_loss: one assignment per embedding row");
  }
  Tensor targets = Tensor::matrix(e.rows(), e.cols(), 0.0);
  for (std::size_t i = 0; i < e.rows(); ++i) {
    const int j = assignments[i];
    if (j < 0 || j >= cs.k()) throw std::out_of_range("clustering_loss: bad cluster index");
    for (std::size_t c = 0; c < e.cols(); ++c) targets(i, c) = cs.centroids(j, c);
  }
  return sq_norm(sub(embeddings, make_constant(std::move(targets))));
}

// Count-scaled sequential update, one sample at a time in row order:
//   counts_j += 1;  M_j <- M_j - (1 / counts_j) (M_j - E_i)
inline void update_centroids(const Tensor& embeddings, const std::vector<int>& assignments,
                             CentroidSet& cs) {
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    const int j = assignments[i];
    cs.counts[j] += 1.0;
    const double step = 1.0 / cs.counts[j];
    for (std::size_t c = 0; c < embeddings.cols(); ++c) {
      cs.centroids(j, c) -= step * (cs.centroids(j, c) - embeddings(i, c));
    }
  }
}

// Full-batch alternative: each assigned cluster jumps to its sample mean.
inline void update_centroids_batch_mean(const Tensor& embeddings,
                                        const std::vector<int>& assignments,
                                        CentroidSet& cs) {
  std::vector<double> n(cs.k(), 0.0);
  Tensor sums = Tensor::matrix(cs.k(), cs.dim(), 0.0);
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    const int j = assignments[i];
    n[j] += 1.0;
    for (std::size_t c = 0; c < embeddings.cols(); ++c) sums(j, c) += embeddings(i, c);
  }
  for (int j = 0; j < cs.k(); ++j) {
    if (n[j] == 0.0) continue;
    cs.counts[j] += n[j];
    for (std::size_t c = 0; c < embeddings.cols(); ++c) {
      cs.centroids(j, c) = sums(j, c) / n[j];
    }
  }
}

namespace detail {

// One k-means++ seeding plus Lloyd iterations to convergence (tol 1e-6,
// max 300 iterations). Fills labels and returns the within-cluster sum of
// squared distances of the converged solution.
inline double kmeans_run(const Tensor& points, int k, Rng& rng, Tensor& centroids,
                         std::vector<int>& labels) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();

  // k-means++: first uniform, then proportional to squared distance
  std::vector<std::size_t> chosen;
  chosen.push_back(rng.uniform_index(n));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < static_cast<std::size_t>(k)) {
    const std::size_t last = chosen.back();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double dist = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = points(i, c) - points(last, c);
        dist += diff * diff;
      }
      d2[i] = std::min(d2[i], dist);
      total += d2[i];
    }
    std::size_t pick;
    if (total <= 0.0) {
      pick = rng.uniform_index(n);
    } else {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (r < cum) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
  }
  centroids = Tensor::matrix(k, d, 0.0);
  for (int j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < d; ++c) centroids(j, c) = points(chosen[j], c);
  }

  CentroidSet view;
  view.counts.assign(k, 1.0);
  labels.assign(n, -1);
  for (int iter = 0; iter < 300; ++iter) {
    view.centroids = centroids;
    for (std::size_t i = 0; i < n; ++i) labels[i] = assign_cluster(view, points, i);

    Tensor next = Tensor::matrix(k, d, 0.0);
    std::vector<double> sizes(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      sizes[labels[i]] += 1.0;
      for (std::size_t c = 0; c < d; ++c) next(labels[i], c) += points(i, c);
    }
    double shift = 0.0;
    for (int j = 0; j < k; ++j) {
      if (sizes[j] == 0.0) continue;  // empty cluster keeps its centroid
      for (std::size_t c = 0; c < d; ++c) {
        const double m = next(j, c) / sizes[j];
        shift = std::max(shift, std::abs(m - centroids(j, c)));
        centroids(j, c) = m;
      }
    }
    if (shift < 1e-6) break;
  }

  view.centroids = centroids;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = assign_cluster(view, points, i);
    sse += squared_distance_to_row(points, i, centroids,
                                   static_cast<std::size_t>(labels[i]));
  }
  return sse;
}

}  // namespace detail

// k-means++ seeding then Lloyd iterations to convergence, restarted from ten
// independent seedings; the run with the lowest within-cluster sum of squares
// wins. Counts start at the final cluster sizes (floored at 1) so sequential
// updates continue the mean.
inline CentroidSet init_centroids(const Tensor& points, int k, std::uint64_t seed) {
  const std::size_t n = points.rows();
  if (k < 1) throw std::invalid_argument("init_centroids: k must be positive");
  if (n < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("init_centroids: fewer points than clusters");
  }

  constexpr int kRestarts = 10;
  Tensor best_centroids;
  std::vector<int> best_labels;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int r = 0; r < kRestarts; ++r) {
    Rng rng(derive_seed(seed, "kmeans_init", static_cast<std::uint64_t>(r)));
    Tensor centroids;
    std::vector<int> labels;
    const double sse = detail::kmeans_run(points, k, rng, centroids, labels);
    if (sse < best_sse) {
      best_sse = sse;
      best_centroids = std::move(centroids);
      best_labels = std::move(labels);
    }
  }

  CentroidSet cs;
  cs.centroids = std::move(best_centroids);
  cs.counts.assign(k, 1.0);
  std::vector<double> sizes(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) sizes[best_labels[i]] += 1.0;
  for (int j = 0; j < k; ++j) cs.counts[j] = std::max(1.0, sizes[j]);
  return cs;
}

}  // namespace npcnet
