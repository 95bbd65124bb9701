#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "npcnet/autodiff.hpp"
#include "npcnet/nn.hpp"
#include "npcnet/rng.hpp"

namespace npcnet {

struct NavigatorHead {
  Var weight;  // d_E x c
  Var bias;    // 1 x c
  std::vector<double> class_weights;
  double gamma_f = 2.0;
  double margin = 1.0;
  double kappa1 = 1.0;
  double kappa2 = 1.0;

  int classes() const { return static_cast<int>(bias.value().cols()); }
  std::vector<Var> parameters() const { return {weight, bias}; }
};

inline NavigatorHead make_navigator_head(int embedding_dim, int classes, Rng& rng) {
  if (classes < 2) throw std::invalid_argument("navigator needs at least 2 statuses");
  NavigatorHead head;
  Tensor w = Tensor::matrix(embedding_dim, classes, 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(embedding_dim));
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
  head.weight = make_parameter(std::move(w), "nav.weight");
  head.bias = make_parameter(Tensor::matrix(1, classes, 0.0), "nav.bias");
  head.class_weights.assign(classes, 1.0);
  return head;
}

// Inverse class frequency, normalized so observed classes average 1.
// Classes absent from the training set get weight 0.
inline std::vector<double> class_weights_from(const std::vector<int>& statuses, int classes) {
  std::vector<double> counts(classes, 0.0);
  for (int s : statuses) {
    if (s < 0 || s >= classes) throw std::out_of_range("status outside class range");
    counts[s] += 1.0;
  }
  std::vector<double> w(classes, 0.0);
  double sum = 0.0;
  int present = 0;
  for (int i = 0; i < classes; ++i) {
    if (counts[i] > 0.0) {
      w[i] = 1.0 / counts[i];
      sum += w[i];
      ++present;
    }
  }
  if (present == 0) return w;
  const double mean = sum / present;
  for (double& x : w) x /= mean;
  return w;
}

inline Var predict_status(const Var& embeddings, const NavigatorHead& head) {
  return softmax_rows(add_row(matmul(embeddings, head.weight), head.bias));
}

inline constexpr double kProbEpsilon = 1e-7;

// Focal loss over all classes with target-transformed probabilities:
// p_t = p_i when y = i, else 1 - p_i; mean over the batch, sum over classes.
inline Var prob_loss(const Var& probs, const std::vector<int>& targets,
                     const std::vector<double>& class_weights, double gamma_f) {
  const Tensor& p = probs.value();
  const std::size_t n = p.rows();
  const std::size_t c = p.cols();
  if (targets.size() != n) throw std::invalid_argument("prob_loss: one target per row");
  if (class_weights.size() != c) throw std::invalid_argument("prob_loss: weight per class");

  Tensor signs = Tensor::matrix(n, c, -1.0);
  Tensor offsets = Tensor::matrix(n, c, 1.0);
  Tensor weights = Tensor::matrix(n, c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = targets[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::out_of_range("prob_loss: target outside class range");
    }
    signs(i, y) = 1.0;
    offsets(i, y) = 0.0;
    for (std::size_t j = 0; j < c; ++j) weights(i, j) = class_weights[j];
  }

  Var pt = add_tensor(mul_tensor(probs, signs), offsets);
  Var clamped = clamp(pt, kProbEpsilon, 1.0 - kProbEpsilon);
  Var focal = pow_const(add_tensor(scale(clamped, -1.0), Tensor::matrix(n, c, 1.0)), gamma_f);
  Var contrib = mul_tensor(mul(focal, vlog(clamped)), weights);
  return scale(sum_all(contrib), -1.0 / static_cast<double>(n));
}

struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
};

struct TripletSample {
  std::vector<Triplet> triplets;
  std::size_t skipped = 0;
};

// One triplet per anchor: a positive with the same status, a negative with a
// different one, both uniform over the training set. Anchors without an
// eligible partner are skipped and counted.
inline TripletSample sample_triplets(const std::vector<int>& statuses,
                                     const std::vector<int>& anchors, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "triplets"));
  TripletSample out;
  for (int a : anchors) {
    if (a < 0 || static_cast<std::size_t>(a) >= statuses.size()) {
      throw std::out_of_range("sample_triplets: anchor outside training set");
    }
    std::vector<int> positives, negatives;
    for (std::size_t i = 0; i < statuses.size(); ++i) {
      if (static_cast<int>(i) == a) continue;
      if (statuses[i] == statuses[a]) {
        positives.push_back(static_cast<int>(i));
      } else {
        negatives.push_back(static_cast<int>(i));
      }
    }
    if (positives.empty() || negatives.empty()) {
      ++out.skipped;
      continue;
    }
    Triplet t;
    t.anchor = a;
    t.positive = positives[rng.uniform_index(positives.size())];
    t.negative = negatives[rng.uniform_index(negatives.size())];
    out.triplets.push_back(t);
  }
  return out;
}

// max(d(a,p) - d(a,n) + margin, 0) with plain Euclidean distances.
inline Var dist_loss(const Var& anchor, const Var& positive, const Var& negative,
                     double margin) {
  if (margin <= 0.0) throw std::invalid_argument("dist_loss: margin must be positive");
  Var d_ap = vsqrt(sq_norm(sub(anchor, positive)));
  Var d_an = vsqrt(sq_norm(sub(anchor, negative)));
  return vrelu(add_const(sub(d_ap, d_an), margin));
}

// Mean triplet loss over the sampled triplets; zero when none were sampled.
inline Var dist_loss_batch(const Var& embeddings, const std::vector<Triplet>& triplets,
                           double margin) {
  if (triplets.empty()) return make_constant(Tensor::scalar(0.0));
  Var total;
  for (std::size_t t = 0; t < triplets.size(); ++t) {
    Var a = gather_rows(embeddings, {static_cast<std::size_t>(triplets[t].anchor)});
    Var p = gather_rows(embeddings, {static_cast<std::size_t>(triplets[t].positive)});
    Var n = gather_rows(embeddings, {static_cast<std::size_t>(triplets[t].negative)});
    Var one = dist_loss(a, p, n, margin);
    total = (t == 0) ? one : add(total, one);
  }
  return scale(total, 1.0 / static_cast<double>(triplets.size()));
}

inline Var navigator_loss(const Var& l_prob, const Var& l_dist, double kappa1,
                          double kappa2) {
  return add(scale(l_prob, kappa1), scale(l_dist, kappa2));
}

}  // namespace npcnet
