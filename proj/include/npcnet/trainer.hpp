#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "npcnet/clusterop.hpp"
#include "npcnet/cohort.hpp"
#include "npcnet/embedding.hpp"
#include "npcnet/navigator.hpp"
#include "npcnet/nn.hpp"
#include "npcnet/pseudotext.hpp"
#include "npcnet/stats.hpp"

namespace npcnet {

enum class ReconSpace { Pooled, PerToken };
enum class RefreshCadence { PerEpoch, PerBatch };
enum class CentroidRule { Sequential, BatchMean };

struct TrainConfig {
  double lambda1 = 1.0;
  double lambda2 = 0.5;
  double lambda3 = 0.5;
  int epochs = 100;
  int pretrain_epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double momentum = 0.0;
  double grad_clip = 5.0;
  std::uint64_t seed = 1;
  int k = 4;
  int bins = 10;
  int embedding_dim = 32;       // d
  int encoder_output_dim = 32;  // d_E
  double composition_weight = 0.5;
  double gamma_f = 2.0;
  double margin = 1.0;
  double kappa1 = 1.0;
  double kappa2 = 1.0;
  int max_sequence_length = 128;
  double window_hours = 6.0;
  std::vector<int> encoder_hidden = {64};
  Activation activation = Activation::Tanh;
  ReconSpace reconstruction = ReconSpace::Pooled;
  RefreshCadence assignment_refresh = RefreshCadence::PerEpoch;
  CentroidRule centroid_update = CentroidRule::Sequential;

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
      throw std::invalid_argument("loss weights must be non-negative");
    if (kappa1 < 0 || kappa2 < 0)
      throw std::invalid_argument("navigator weights must be non-negative");
    if (epochs < 0 || pretrain_epochs < 0)
      throw std::invalid_argument("epoch counts must be non-negative");
    if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
    if (learning_rate <= 0) throw std::invalid_argument("learning rate must be positive");
    if (k < 1) throw std::invalid_argument("cluster count must be positive");
    if (bins < 2) throw std::invalid_argument("bin count must be at least 2");
    if (embedding_dim <= 0 || embedding_dim % 2 != 0)
      throw std::invalid_argument("embedding dim must be positive and even");
    if (encoder_output_dim <= 0)
      throw std::invalid_argument("encoder output dim must be positive");
    if (!(composition_weight >= 0.0 && composition_weight <= 1.0))
      throw std::invalid_argument("composition weight must lie in [0,1]");
    if (gamma_f < 0) throw std::invalid_argument("focal exponent must be non-negative");
    if (margin <= 0) throw std::invalid_argument("margin must be positive");
    if (max_sequence_length < 1)
      throw std::invalid_argument("max sequence length must be positive");
    if (window_hours <= 0) throw std::invalid_argument("window must be positive");
  }
};

struct EpochLoss {
  std::string phase;  // "pretrain" or "train"
  int epoch = 0;
  double total = 0.0;
  double reconstruction = 0.0;
  double clustering = 0.0;
  double navigator = 0.0;
};

struct TrainLog {
  std::vector<EpochLoss> epochs;
  std::vector<std::string> warnings;
};

struct ModelState {
  TrainConfig config;
  BinThresholds thresholds;
  Vocabulary vocab;
  EmbeddingTables tables;
  Mlp encoder;
  Mlp decoder;
  NavigatorHead navigator;
  CentroidSet centroids;
  std::vector<int> display_rank;  // cluster index -> severity rank (0 = mildest)
  bool trained = false;

  std::vector<Var> parameters() const {
    std::vector<Var> params = tables.parameters();
    for (const auto& l : encoder.layers) {
      params.push_back(l.weight);
      params.push_back(l.bias);
    }
    for (const auto& l : decoder.layers) {
      params.push_back(l.weight);
      params.push_back(l.bias);
    }
    for (const auto& p : navigator.parameters()) params.push_back(p);
    return params;
  }
};

inline Var total_loss(const Var& l_rec, const Var& l_clustering, const Var& l_navigator,
                      double lambda1, double lambda2, double lambda3) {
  return add(add(scale(l_rec, lambda1), scale(l_clustering, lambda2)),
             scale(l_navigator, lambda3));
}

inline const char* phenotype_name(int rank) {
  static const char* kNames[] = {"alpha", "beta", "gamma", "delta",
                                 "epsilon", "zeta", "eta", "theta"};
  if (rank >= 0 && rank < 8) return kNames[rank];
  return "unnamed";
}

namespace detail {

inline Tensor encoder_input_values(const ModelState& m,
                                   const std::vector<EncodedEpisode>& enc) {
  Var x = build_pooled_batch(m.tables, enc, m.config.composition_weight,
                             m.config.max_sequence_length);
  return m.encoder.forward(x).value();
}

struct BatchLosses {
  Var rec;
  Var clustering;
  Var navigator;
  Var total;
  Var embeddings;  // batch rows only
};

// Sum over the batch of squared reconstruction error, in pooled space or
// masked per-token space depending on the config. The target is the current
// composition treated as data: gradients reach the embedding tables only
// through the encoder input, never by moving the target toward the decoder
// output (that direction has a degenerate optimum where the tables collapse
// to a constant). `pooled_target` pins the target to an externally captured
// snapshot; by default it is re-read from the tables each step.
inline Var reconstruction_loss(const ModelState& m,
                               const std::vector<EncodedEpisode>& batch,
                               const Var& x_batch, const Var& e_batch,
                               const Tensor* pooled_target = nullptr) {
  const TrainConfig& cfg = m.config;
  if (cfg.reconstruction == ReconSpace::Pooled) {
    Var target = make_constant(pooled_target ? *pooled_target : x_batch.value());
    return sq_norm(sub(target, m.decoder.forward(e_batch)));
  }
  Var decoded = m.decoder.forward(e_batch);  // n x (L_max * d)
  Var acc;
  bool any = false;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ids = batch[i].token_ids;
    const std::size_t len = std::min<std::size_t>(ids.size(), cfg.max_sequence_length);
    if (len == 0) continue;
    std::vector<int> kept(ids.begin(), ids.begin() + len);
    Var target = make_constant(
        compose_input(
            lookup_tokens(m.tables, kept),
            order_encoding_matrix(static_cast<int>(len), cfg.embedding_dim),
            static_embedding(m.tables, batch[i].statics), cfg.composition_weight)
            .value());
    Var row = gather_rows(decoded, {i});
    Var xhat_i = slice_rows(
        reshape(row, {static_cast<std::size_t>(cfg.max_sequence_length),
                      static_cast<std::size_t>(cfg.embedding_dim)}),
        0, len);
    Var term = sq_norm(sub(target, xhat_i));
    acc = any ? add(acc, term) : term;
    any = true;
  }
  return any ? acc : make_constant(Tensor::scalar(0.0));
}

// Forward pass over the batch plus any triplet partners outside it; the first
// block of rows is the batch itself.
inline BatchLosses batch_losses(const ModelState& m,
                                const std::vector<EncodedEpisode>& all,
                                const std::vector<std::size_t>& batch_idx,
                                const std::vector<int>& assignments,
                                const std::vector<int>& statuses,
                                const std::vector<Triplet>& all_triplets,
                                bool navigator_active, bool refresh_per_batch,
                                const Tensor* rec_target = nullptr) {
  const TrainConfig& cfg = m.config;
  const std::size_t nb = batch_idx.size();

  std::vector<std::size_t> rows = batch_idx;
  std::vector<int> row_of(all.size(), -1);
  for (std::size_t i = 0; i < nb; ++i) row_of[batch_idx[i]] = static_cast<int>(i);

  std::vector<Triplet> local_triplets;
  if (navigator_active) {
    auto local_row = [&](int global) {
      if (row_of[global] < 0) {
        row_of[global] = static_cast<int>(rows.size());
        rows.push_back(global);
      }
      return row_of[global];
    };
    for (std::size_t i = 0; i < nb; ++i) {
      for (const Triplet& t : all_triplets) {
        if (t.anchor != static_cast<int>(batch_idx[i])) continue;
        Triplet lt;
        lt.anchor = static_cast<int>(i);
        lt.positive = local_row(t.positive);
        lt.negative = local_row(t.negative);
        local_triplets.push_back(lt);
        break;
      }
    }
  }

  std::vector<EncodedEpisode> union_batch;
  union_batch.reserve(rows.size());
  for (std::size_t r : rows) union_batch.push_back(all[r]);

  Var x = build_pooled_batch(m.tables, union_batch, cfg.composition_weight,
                             cfg.max_sequence_length);
  Var e = m.encoder.forward(x);
  Var e_batch = slice_rows(e, 0, nb);
  Var x_batch = slice_rows(x, 0, nb);

  BatchLosses out;
  out.embeddings = e_batch;
  std::vector<EncodedEpisode> batch_only(union_batch.begin(), union_batch.begin() + nb);
  out.rec = reconstruction_loss(m, batch_only, x_batch, e_batch, rec_target);

  std::vector<int> batch_assign(nb);
  if (refresh_per_batch) {
    CentroidSet frozen = m.centroids;
    const Tensor& ev = e_batch.value();
    for (std::size_t i = 0; i < nb; ++i) batch_assign[i] = assign_cluster(frozen, ev, i);
  } else {
    for (std::size_t i = 0; i < nb; ++i) batch_assign[i] = assignments[batch_idx[i]];
  }
  out.clustering = clustering_loss(e_batch, batch_assign, m.centroids);

  if (navigator_active) {
    std::vector<int> targets(nb);
    for (std::size_t i = 0; i < nb; ++i) targets[i] = statuses[batch_idx[i]];
    Var probs = predict_status(e_batch, m.navigator);
    Var l_prob =
        prob_loss(probs, targets, m.navigator.class_weights, m.navigator.gamma_f);
    Var l_dist = dist_loss_batch(e, local_triplets, m.navigator.margin);
    out.navigator = navigator_loss(l_prob, l_dist, m.navigator.kappa1, m.navigator.kappa2);
  } else {
    out.navigator = make_constant(Tensor::scalar(0.0));
  }

  out.total = total_loss(out.rec, out.clustering, out.navigator, cfg.lambda1,
                         cfg.lambda2, cfg.lambda3);
  return out;
}

inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size,
                                                          Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return batches;
}

}  // namespace detail

// Fresh model with fitted thresholds and vocabulary; parameters drawn from the
// "init" stream so loss weights never perturb initialization.
inline ModelState init_model(const std::vector<Episode>& train, const CohortSchema& schema,
                             const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");

  ModelState m;
  m.config = config;
  m.thresholds = fit_bin_thresholds(train, schema, config.bins, config.window_hours);
  m.vocab = build_vocabulary(m.thresholds);

  Rng rng(derive_seed(config.seed, "init"));
  std::vector<std::size_t> category_counts;
  for (const auto& sv : schema.static_variables)
    category_counts.push_back(sv.categories.size());
  m.tables = make_embedding_tables(m.vocab.size(), category_counts,
                                   config.embedding_dim, rng);

  const std::vector<std::size_t> encoder_hidden(config.encoder_hidden.begin(),
                                                config.encoder_hidden.end());
  m.encoder = make_mlp(config.embedding_dim, encoder_hidden,
                       config.encoder_output_dim, config.activation, rng, "enc");
  const std::vector<std::size_t> decoder_hidden(encoder_hidden.rbegin(),
                                                encoder_hidden.rend());
  const int recon_dim = config.reconstruction == ReconSpace::Pooled
                            ? config.embedding_dim
                            : config.max_sequence_length * config.embedding_dim;
  m.decoder = make_mlp(config.encoder_output_dim, decoder_hidden, recon_dim,
                       config.activation, rng, "dec");
  m.navigator = make_navigator_head(config.encoder_output_dim,
                                    static_cast<int>(schema.discharge_statuses.size()),
                                    rng);
  m.navigator.gamma_f = config.gamma_f;
  m.navigator.margin = config.margin;
  m.navigator.kappa1 = config.kappa1;
  m.navigator.kappa2 = config.kappa2;
  return m;
}

// Reconstruction-only warm start.
inline ModelState pretrain(const std::vector<Episode>& train, const CohortSchema& schema,
                           const TrainConfig& config, TrainLog* log = nullptr) {
  ModelState m = init_model(train, schema, config);
  auto enc = encode_episodes(train, m.thresholds, m.vocab);

  std::vector<Var> params = m.parameters();
  Sgd opt(params, config.learning_rate, config.momentum, config.grad_clip);

  for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, "pretrain_shuffle", epoch));
    auto batches = detail::make_batches(enc.size(), config.batch_size, shuffle_rng);
    double epoch_rec = 0.0;
    for (const auto& batch : batches) {
      std::vector<EncodedEpisode> b;
      for (std::size_t i : batch) b.push_back(enc[i]);
      Var x = build_pooled_batch(m.tables, b, config.composition_weight,
                                 config.max_sequence_length);
      Var e = m.encoder.forward(x);
      Var rec = detail::reconstruction_loss(m, b, x, e);
      Var obj = scale(rec, config.lambda1);
      const double value = obj.scalar_value();
      if (!std::isfinite(value) || value > 1e6) {
        throw NumericError("pretraining diverged at epoch " + std::to_string(epoch) +
                           " (loss " + std::to_string(value) + ")");
      }
      epoch_rec += rec.scalar_value();
      backward(obj);
      opt.step();
    }
    if (log && !batches.empty()) {
      const double mean_rec = epoch_rec / batches.size();
      log->epochs.push_back(
          {"pretrain", epoch, config.lambda1 * mean_rec, mean_rec, 0.0, 0.0});
    }
  }
  return m;
}

inline Tensor infer_embeddings(const std::vector<Episode>& episodes, const ModelState& m) {
  if (episodes.empty()) return Tensor::matrix(0, m.config.encoder_output_dim, 0.0);
  auto enc = encode_episodes(episodes, m.thresholds, m.vocab);
  return detail::encoder_input_values(m, enc);
}

inline std::vector<int> assign_phenotypes(const Tensor& embeddings, const CentroidSet& cs) {
  return assign_all(cs, embeddings);
}

// Severity ranking for display names: ascending cluster-median hour-6 SOFA;
// clusters with no scored episodes rank last, ties break by cluster index.
inline std::vector<int> severity_display_rank(const std::vector<Episode>& episodes,
                                              const std::vector<int>& labels, int k) {
  std::vector<std::vector<double>> sofa6(k);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (auto s = episodes[i].sofa_at(6)) sofa6[labels[i]].push_back(*s);
  }
  std::vector<std::pair<double, int>> keyed;
  for (int j = 0; j < k; ++j) {
    const double key = sofa6[j].empty() ? std::numeric_limits<double>::infinity()
                                        : median(sofa6[j]);
    keyed.emplace_back(key, j);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> rank_of(k, 0);
  for (int r = 0; r < k; ++r) rank_of[keyed[r].second] = r;
  return rank_of;
}

// Full alternating loop: pretrain, centroid init, then per epoch (i) gradient
// steps on the composite objective with assignments frozen, (ii) assignment
// refresh, (iii) centroid updates in canonical episode order.
inline ModelState train(const std::vector<Episode>& episodes, const CohortSchema& schema,
                        const TrainConfig& config, TrainLog* log = nullptr) {
  ModelState m = pretrain(episodes, schema, config, log);
  auto enc = encode_episodes(episodes, m.thresholds, m.vocab);
  const std::size_t n = enc.size();

  std::vector<int> statuses(n);
  for (std::size_t i = 0; i < n; ++i) statuses[i] = episodes[i].discharge_status;
  const int classes = static_cast<int>(schema.discharge_statuses.size());
  m.navigator.class_weights = class_weights_from(statuses, classes);

  bool navigator_active = config.lambda3 > 0.0;
  {
    std::vector<int> distinct = statuses;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (navigator_active && distinct.size() < 2) {
      navigator_active = false;
      if (log) {
        log->warnings.push_back(
            "navigator disabled: every training episode has the same discharge status");
      }
    }
  }

  Tensor e_all = detail::encoder_input_values(m, enc);
  m.centroids =
      init_centroids(e_all, config.k, derive_seed(config.seed, "centroid_init"));
  std::vector<int> assignments = assign_all(m.centroids, e_all);

  std::vector<Var> params = m.parameters();
  Sgd opt(params, config.learning_rate, config.momentum, config.grad_clip);
  std::vector<std::size_t> canonical(n);
  std::iota(canonical.begin(), canonical.end(), 0);

  const bool per_batch = config.assignment_refresh == RefreshCadence::PerBatch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<Triplet> triplets;
    if (navigator_active) {
      std::vector<int> anchors(n);
      std::iota(anchors.begin(), anchors.end(), 0);
      TripletSample sample = sample_triplets(
          statuses, anchors, derive_seed(config.seed, "triplet_epoch", epoch));
      triplets = std::move(sample.triplets);
    }

    Rng shuffle_rng(derive_seed(config.seed, "shuffle", epoch));
    auto batches = detail::make_batches(n, config.batch_size, shuffle_rng);
    double sum_total = 0, sum_rec = 0, sum_clu = 0, sum_nav = 0;
    for (const auto& batch : batches) {
      detail::BatchLosses losses = detail::batch_losses(
          m, enc, batch, assignments, statuses, triplets, navigator_active, per_batch);
      const double value = losses.total.scalar_value();
      if (!std::isfinite(value) || value > 1e6) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                           " (loss " + std::to_string(value) + ")");
      }
      sum_total += value;
      sum_rec += losses.rec.scalar_value();
      sum_clu += losses.clustering.scalar_value();
      sum_nav += losses.navigator.scalar_value();

      if (per_batch) {
        const Tensor& ev = losses.embeddings.value();
        std::vector<int> batch_assign(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i)
          batch_assign[i] = assign_cluster(m.centroids, ev, i);
        backward(losses.total);
        opt.step();
        if (config.centroid_update == CentroidRule::Sequential) {
          update_centroids(ev, batch_assign, m.centroids);
        } else {
          update_centroids_batch_mean(ev, batch_assign, m.centroids);
        }
      } else {
        backward(losses.total);
        opt.step();
      }
    }

    if (!per_batch) {
      e_all = detail::encoder_input_values(m, enc);
      assignments = assign_all(m.centroids, e_all);
      if (config.centroid_update == CentroidRule::Sequential) {
        update_centroids(e_all, assignments, m.centroids);
      } else {
        update_centroids_batch_mean(e_all, assignments, m.centroids);
      }
    }

    if (log && !batches.empty()) {
      const double nb = static_cast<double>(batches.size());
      log->epochs.push_back({"train", epoch, sum_total / nb, sum_rec / nb,
                             sum_clu / nb, sum_nav / nb});
    }
  }

  e_all = detail::encoder_input_values(m, enc);
  std::vector<int> final_labels = assign_all(m.centroids, e_all);
  m.display_rank = severity_display_rank(episodes, final_labels, config.k);
  m.trained = true;
  return m;
}

// --- serialization ---------------------------------------------------------

inline constexpr const char* kModelFormat = "npcnet.model.v1";

namespace detail {

inline nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json j;
  j["rows"] = t.rows();
  j["cols"] = t.cols();
  j["data"] = std::vector<double>(t.data(), t.data() + t.size());
  return j;
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  const std::size_t rows = j.at("rows").get<std::size_t>();
  const std::size_t cols = j.at("cols").get<std::size_t>();
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw DataError("tensor payload size mismatch");
  Tensor t = Tensor::matrix(rows, cols, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) t.data()[i] = data[i];
  return t;
}

inline nlohmann::json mlp_to_json(const Mlp& mlp) {
  nlohmann::json j;
  j["activation"] = activation_name(mlp.activation);
  j["layers"] = nlohmann::json::array();
  for (const auto& l : mlp.layers) {
    j["layers"].push_back({{"weight", tensor_to_json(l.weight.value())},
                           {"bias", tensor_to_json(l.bias.value())}});
  }
  return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j, const std::string& tag) {
  Mlp mlp;
  mlp.tag = tag;
  mlp.activation = activation_from_name(j.at("activation").get<std::string>());
  int li = 0;
  for (const auto& lj : j.at("layers")) {
    LinearLayer layer;
    layer.weight = make_parameter(tensor_from_json(lj.at("weight")),
                                  tag + ".w" + std::to_string(li));
    layer.bias = make_parameter(tensor_from_json(lj.at("bias")),
                                tag + ".b" + std::to_string(li));
    mlp.layers.push_back(std::move(layer));
    ++li;
  }
  return mlp;
}

}  // namespace detail

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["lambda3"] = c.lambda3;
  j["epochs"] = c.epochs;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["momentum"] = c.momentum;
  j["grad_clip"] = c.grad_clip;
  j["seed"] = c.seed;
  j["k"] = c.k;
  j["bins"] = c.bins;
  j["embedding_dim"] = c.embedding_dim;
  j["encoder_output_dim"] = c.encoder_output_dim;
  j["composition_weight"] = c.composition_weight;
  j["gamma_f"] = c.gamma_f;
  j["margin"] = c.margin;
  j["kappa1"] = c.kappa1;
  j["kappa2"] = c.kappa2;
  j["max_sequence_length"] = c.max_sequence_length;
  j["window_hours"] = c.window_hours;
  j["encoder_hidden"] = c.encoder_hidden;
  j["activation"] = activation_name(c.activation);
  j["reconstruction"] = c.reconstruction == ReconSpace::Pooled ? "pooled" : "per_token";
  j["assignment_refresh"] =
      c.assignment_refresh == RefreshCadence::PerEpoch ? "per_epoch" : "per_batch";
  j["centroid_update"] =
      c.centroid_update == CentroidRule::Sequential ? "sequential" : "batch_mean";
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j);

inline nlohmann::json model_to_json(const ModelState& m) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["config"] = train_config_to_json(m.config);
  j["thresholds"] = bin_thresholds_to_json(m.thresholds);
  j["vocabulary"] = m.vocab.tokens;
  nlohmann::json emb;
  emb["dim"] = m.tables.dim;
  emb["tokens"] = detail::tensor_to_json(m.tables.token_table.value());
  emb["statics"] = nlohmann::json::array();
  for (const auto& t : m.tables.static_tables)
    emb["statics"].push_back(detail::tensor_to_json(t.value()));
  j["embedding"] = std::move(emb);
  j["encoder"] = detail::mlp_to_json(m.encoder);
  j["decoder"] = detail::mlp_to_json(m.decoder);
  nlohmann::json nav;
  nav["weight"] = detail::tensor_to_json(m.navigator.weight.value());
  nav["bias"] = detail::tensor_to_json(m.navigator.bias.value());
  nav["class_weights"] = m.navigator.class_weights;
  nav["gamma_f"] = m.navigator.gamma_f;
  nav["margin"] = m.navigator.margin;
  nav["kappa1"] = m.navigator.kappa1;
  nav["kappa2"] = m.navigator.kappa2;
  j["navigator"] = std::move(nav);
  nlohmann::json cj;
  cj["m"] = detail::tensor_to_json(m.centroids.centroids);
  cj["counts"] = m.centroids.counts;
  j["centroids"] = std::move(cj);
  j["display_rank"] = m.display_rank;
  j["trained"] = m.trained;
  return j;
}

inline ModelState model_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j.at("format").get<std::string>() != kModelFormat) {
    throw DataError("model file: unrecognized format tag");
  }
  ModelState m;
  m.config = train_config_from_json(j.at("config"));
  m.thresholds = bin_thresholds_from_json(j.at("thresholds"));
  for (const auto& tok : j.at("vocabulary")) {
    const std::string t = tok.get<std::string>();
    m.vocab.ids[t] = static_cast<int>(m.vocab.tokens.size());
    m.vocab.tokens.push_back(t);
  }
  const auto& emb = j.at("embedding");
  m.tables.dim = emb.at("dim").get<int>();
  m.tables.token_table =
      make_parameter(detail::tensor_from_json(emb.at("tokens")), "emb.tokens");
  int si = 0;
  for (const auto& t : emb.at("statics")) {
    m.tables.static_tables.push_back(make_parameter(
        detail::tensor_from_json(t), "emb.static" + std::to_string(si++)));
  }
  m.encoder = detail::mlp_from_json(j.at("encoder"), "enc");
  m.decoder = detail::mlp_from_json(j.at("decoder"), "dec");
  const auto& nav = j.at("navigator");
  m.navigator.weight =
      make_parameter(detail::tensor_from_json(nav.at("weight")), "nav.weight");
  m.navigator.bias = make_parameter(detail::tensor_from_json(nav.at("bias")), "nav.bias");
  m.navigator.class_weights = nav.at("class_weights").get<std::vector<double>>();
  m.navigator.gamma_f = nav.at("gamma_f").get<double>();
  m.navigator.margin = nav.at("margin").get<double>();
  m.navigator.kappa1 = nav.at("kappa1").get<double>();
  m.navigator.kappa2 = nav.at("kappa2").get<double>();
  m.centroids.centroids = detail::tensor_from_json(j.at("centroids").at("m"));
  m.centroids.counts = j.at("centroids").at("counts").get<std::vector<double>>();
  m.display_rank = j.at("display_rank").get<std::vector<int>>();
  m.trained = j.at("trained").get<bool>();
  return m;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lambda1 = j.at("lambda1").get<double>();
  c.lambda2 = j.at("lambda2").get<double>();
  c.lambda3 = j.at("lambda3").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.pretrain_epochs = j.at("pretrain_epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.k = j.at("k").get<int>();
  c.bins = j.at("bins").get<int>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.encoder_output_dim = j.at("encoder_output_dim").get<int>();
  c.composition_weight = j.at("composition_weight").get<double>();
  c.gamma_f = j.at("gamma_f").get<double>();
  c.margin = j.at("margin").get<double>();
  c.kappa1 = j.at("kappa1").get<double>();
  c.kappa2 = j.at("kappa2").get<double>();
  c.max_sequence_length = j.at("max_sequence_length").get<int>();
  c.window_hours = j.at("window_hours").get<double>();
  c.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
  c.activation = activation_from_name(j.at("activation").get<std::string>());
  const std::string recon = j.at("reconstruction").get<std::string>();
  if (recon == "pooled") {
    c.reconstruction = ReconSpace::Pooled;
  } else if (recon == "per_token") {
    c.reconstruction = ReconSpace::PerToken;
  } else {
    throw DataError("unknown reconstruction space '" + recon + "'");
  }
  const std::string refresh = j.at("assignment_refresh").get<std::string>();
  if (refresh == "per_epoch") {
    c.assignment_refresh = RefreshCadence::PerEpoch;
  } else if (refresh == "per_batch") {
    c.assignment_refresh = RefreshCadence::PerBatch;
  } else {
    throw DataError("unknown assignment refresh '" + refresh + "'");
  }
  const std::string rule = j.at("centroid_update").get<std::string>();
  if (rule == "sequential") {
    c.centroid_update = CentroidRule::Sequential;
  } else if (rule == "batch_mean") {
    c.centroid_update = CentroidRule::BatchMean;
  } else {
    throw DataError("unknown centroid update rule '" + rule + "'");
  }
  c.validate();
  return c;
}

}  // namespace npcnet
