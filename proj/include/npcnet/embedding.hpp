#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "npcnet/autodiff.hpp"
#include "npcnet/cohort.hpp"
#include "npcnet/pseudotext.hpp"
#include "npcnet/rng.hpp"

namespace npcnet {

// Sinusoidal order encoding; positions are 0-based, dim must be even.
inline Tensor order_encoding(int position, int dim) {
  if (position < 0) throw std::invalid_argument("order encoding: position must be >= 0");
  if (dim <= 0 || dim % 2 != 0) {
    throw std::invalid_argument("order encoding: dim must be positive and even");
  }
  Tensor out = Tensor::matrix(1, dim, 0.0);
  for (int i = 0; i < dim / 2; ++i) {
    const double rate = std::pow(10000.0, 2.0 * i / dim);
    out(0, 2 * i) = std::sin(position / rate);
    out(0, 2 * i + 1) = std::cos(position / rate);
  }
  return out;
}

inline Tensor order_encoding_matrix(int length, int dim) {
  Tensor out = Tensor::matrix(std::max(length, 1), dim, 0.0);
  for (int p = 0; p < length; ++p) {
    Tensor row = order_encoding(p, dim);
    for (int j = 0; j < dim; ++j) out(p, j) = row(0, j);
  }
  return out;
}

// Mean of the first `length` order encodings; zero vector when length is 0.
inline Tensor mean_order_encoding(int length, int dim) {
  Tensor out = Tensor::matrix(1, dim, 0.0);
  for (int p = 0; p < length; ++p) {
    Tensor row = order_encoding(p, dim);
    for (int j = 0; j < dim; ++j) out(0, j) += row(0, j) / length;
  }
  return out;
}

struct EmbeddingTables {
  Var token_table;                 // vocab x dim
  std::vector<Var> static_tables;  // per static variable: categories x dim
  int dim = 0;

  std::vector<Var> parameters() const {
    std::vector<Var> params = {token_table};
    params.insert(params.end(), static_tables.begin(), static_tables.end());
    return params;
  }
};

inline EmbeddingTables make_embedding_tables(std::size_t vocab_size,
                                             const std::vector<std::size_t>& category_counts,
                                             int dim, Rng& rng) {
  if (dim <= 0 || dim % 2 != 0) {
    throw std::invalid_argument("embedding dim must be positive and even");
  }
  EmbeddingTables tables;
  tables.dim = dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  auto init = [&](std::size_t rows, const std::string& name) {
    Tensor t = Tensor::matrix(rows, dim, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (int j = 0; j < dim; ++j) t(i, j) = rng.uniform(-bound, bound);
    return make_parameter(std::move(t), name);
  };
  tables.token_table = init(vocab_size, "emb.tokens");
  for (std::size_t v = 0; v < category_counts.size(); ++v) {
    tables.static_tables.push_back(
        init(category_counts[v], "emb.static" + std::to_string(v)));
  }
  return tables;
}

inline Var lookup_tokens(const EmbeddingTables& tables, const std::vector<int>& ids) {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (int id : ids) {
    if (id < 0) throw std::out_of_range("token id outside embedding table");
    rows.push_back(static_cast<std::size_t>(id));
  }
  return gather_rows(tables.token_table, rows);
}

// Sum of the selected category rows across all static variables.
inline Var static_embedding(const EmbeddingTables& tables, const std::vector<int>& statics) {
  if (statics.size() != tables.static_tables.size()) {
    throw std::invalid_argument("static embedding: category count mismatch");
  }
  Var out;
  for (std::size_t v = 0; v < statics.size(); ++v) {
    if (statics[v] < 0) throw std::out_of_range("static category outside embedding table");
    Var row = gather_rows(tables.static_tables[v], {static_cast<std::size_t>(statics[v])});
    out = (v == 0) ? row : add(out, row);
  }
  if (statics.empty()) out = make_constant(Tensor::matrix(1, tables.dim, 0.0));
  return out;
}

// x_t = w * (token_t + order_t) + (1 - w) * static_row, for every position t.
inline Var compose_input(const Var& token_rows, const Tensor& order_rows,
                         const Var& static_row, double w) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw std::invalid_argument("composition weight must lie in [0,1]");
  }
  Var seq = scale(add_tensor(token_rows, order_rows), w);
  return add_row(seq, scale(static_row, 1.0 - w));
}

// Masked mean over positions; an empty sequence contributes (1-w) * static only.
inline Var pooled_episode_input(const EmbeddingTables& tables, const std::vector<int>& ids,
                                const std::vector<int>& statics, double w, int max_length) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw std::invalid_argument("composition weight must lie in [0,1]");
  }
  std::vector<int> kept(ids.begin(),
                        ids.begin() + std::min<std::size_t>(ids.size(), max_length));
  Var s = static_embedding(tables, statics);
  if (kept.empty()) return scale(s, 1.0 - w);
  Var tokens = lookup_tokens(tables, kept);
  Var x = compose_input(tokens, order_encoding_matrix(static_cast<int>(kept.size()), tables.dim),
                        s, w);
  return mean_rows(x);
}

struct EncodedEpisode {
  std::vector<int> token_ids;
  std::vector<int> statics;
};

inline std::vector<EncodedEpisode> encode_episodes(const std::vector<Episode>& episodes,
                                                   const BinThresholds& bt,
                                                   const Vocabulary& vocab) {
  std::vector<EncodedEpisode> out;
  out.reserve(episodes.size());
  for (const auto& ep : episodes) {
    EncodedEpisode enc;
    enc.token_ids = tokenize(vocab, episode_to_pseudotext(ep, bt));
    enc.statics = ep.statics;
    out.push_back(std::move(enc));
  }
  return out;
}

// Batched pooled inputs via constant indicator matrices:
//   X = w * (C * tokens + mean_order) + (1 - w) * sum_v D_v * static_v
// where row i of C holds token counts / length. Equals the per-episode path.
inline Var build_pooled_batch(const EmbeddingTables& tables,
                              const std::vector<EncodedEpisode>& batch, double w,
                              int max_length) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw std::invalid_argument("composition weight must lie in [0,1]");
  }
  if (batch.empty()) throw std::invalid_argument("pooled batch must be non-empty");
  const std::size_t n = batch.size();
  const std::size_t vocab_size = tables.token_table.value().rows();
  const int d = tables.dim;

  Tensor counts = Tensor::matrix(n, vocab_size, 0.0);
  Tensor order_means = Tensor::matrix(n, d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ids = batch[i].token_ids;
    const std::size_t len = std::min<std::size_t>(ids.size(), max_length);
    for (std::size_t t = 0; t < len; ++t) {
      if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab_size) {
        throw std::out_of_range("token id outside embedding table");
      }
      counts(i, ids[t]) += 1.0 / len;
    }
    if (len > 0) {
      Tensor om = mean_order_encoding(static_cast<int>(len), d);
      for (int j = 0; j < d; ++j) order_means(i, j) = w * om(0, j);
    }
  }

  Var pooled_tokens = matmul(make_constant(std::move(counts)), tables.token_table);
  Var x = add_tensor(scale(pooled_tokens, w), order_means);

  Var statics;
  for (std::size_t v = 0; v < tables.static_tables.size(); ++v) {
    const std::size_t cats = tables.static_tables[v].value().rows();
    Tensor onehot = Tensor::matrix(n, cats, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const int c = batch[i].statics.at(v);
      if (c < 0 || static_cast<std::size_t>(c) >= cats) {
        throw std::out_of_range("static category outside embedding table");
      }
      onehot(i, c) = 1.0;
    }
    Var part = matmul(make_constant(std::move(onehot)), tables.static_tables[v]);
    statics = (v == 0) ? part : add(statics, part);
  }
  if (tables.static_tables.empty()) {
    return x;
  }
  return add(x, scale(statics, 1.0 - w));
}

}  // namespace npcnet
