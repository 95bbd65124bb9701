#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "npcnet/cohort.hpp"
#include "npcnet/synthetic.hpp"
#include "npcnet/trainer.hpp"

namespace npcnet {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  CohortPaths data;
  CohortSchema schema = make_default_schema();
  TrainConfig train;
  double split_ratio = 0.8;
  double alpha = 0.05;
  double km_horizon_days = 365.0;
  std::vector<std::string> model_adjusters;  // treatment-model covariates
  std::string output_dir = "out";
  std::string model_path;  // empty: derived from output_dir and first seed
  std::vector<std::uint64_t> seeds;
  SyntheticSpec synthetic;
  bool has_synthetic = false;

  std::vector<std::uint64_t> effective_seeds() const {
    return seeds.empty() ? std::vector<std::uint64_t>{train.seed} : seeds;
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::set<std::string>& allowed,
                                const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(context + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline CohortSchema schema_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j,
                      {"static_variables", "variables", "discharge_statuses",
                       "mortality_status", "treatment_adjusters"},
                      "schema");
  CohortSchema s;
  for (const auto& sv : j.at("static_variables")) {
    reject_unknown_keys(sv, {"name", "categories"}, "schema.static_variables");
    s.static_variables.push_back({sv.at("name").get<std::string>(),
                                  sv.at("categories").get<std::vector<std::string>>()});
  }
  for (const auto& v : j.at("variables")) {
    reject_unknown_keys(v, {"name", "min", "max"}, "schema.variables");
    s.variables.push_back({v.at("name").get<std::string>(), v.at("min").get<double>(),
                           v.at("max").get<double>()});
  }
  s.discharge_statuses = j.at("discharge_statuses").get<std::vector<std::string>>();
  read_if(j, "mortality_status", s.mortality_status);
  if (j.contains("treatment_adjusters")) {
    s.treatment_adjusters = j.at("treatment_adjusters").get<std::vector<std::string>>();
  } else {
    s.treatment_adjusters.clear();
  }
  if (s.status_index(s.mortality_status) < 0) {
    throw ConfigError("schema: mortality_status '" + s.mortality_status +
                      "' is not a discharge status");
  }
  return s;
}

inline TrainConfig train_config_partial(const nlohmann::json& j) {
  reject_unknown_keys(
      j,
      {"lambda1", "lambda2", "lambda3", "epochs", "pretrain_epochs", "batch_size",
       "learning_rate", "momentum", "grad_clip", "seed", "k", "bins", "embedding_dim",
       "encoder_output_dim", "composition_weight", "gamma_f", "margin", "kappa1",
       "kappa2", "max_sequence_length", "window_hours", "encoder_hidden", "activation",
       "reconstruction", "assignment_refresh", "centroid_update"},
      "train");
  TrainConfig c;
  read_if(j, "lambda1", c.lambda1);
  read_if(j, "lambda2", c.lambda2);
  read_if(j, "lambda3", c.lambda3);
  read_if(j, "epochs", c.epochs);
  read_if(j, "pretrain_epochs", c.pretrain_epochs);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "learning_rate", c.learning_rate);
  read_if(j, "momentum", c.momentum);
  read_if(j, "grad_clip", c.grad_clip);
  read_if(j, "seed", c.seed);
  read_if(j, "k", c.k);
  read_if(j, "bins", c.bins);
  read_if(j, "embedding_dim", c.embedding_dim);
  read_if(j, "encoder_output_dim", c.encoder_output_dim);
  read_if(j, "composition_weight", c.composition_weight);
  read_if(j, "gamma_f", c.gamma_f);
  read_if(j, "margin", c.margin);
  read_if(j, "kappa1", c.kappa1);
  read_if(j, "kappa2", c.kappa2);
  read_if(j, "max_sequence_length", c.max_sequence_length);
  read_if(j, "window_hours", c.window_hours);
  read_if(j, "encoder_hidden", c.encoder_hidden);
  if (j.contains("activation")) {
    try {
      c.activation = activation_from_name(j.at("activation").get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("train: ") + e.what());
    }
  }
  if (j.contains("reconstruction")) {
    const std::string v = j.at("reconstruction").get<std::string>();
    if (v == "pooled") {
      c.reconstruction = ReconSpace::Pooled;
    } else if (v == "per_token") {
      c.reconstruction = ReconSpace::PerToken;
    } else {
      throw ConfigError("train.reconstruction must be 'pooled' or 'per_token'");
    }
  }
  if (j.contains("assignment_refresh")) {
    const std::string v = j.at("assignment_refresh").get<std::string>();
    if (v == "per_epoch") {
      c.assignment_refresh = RefreshCadence::PerEpoch;
    } else if (v == "per_batch") {
      c.assignment_refresh = RefreshCadence::PerBatch;
    } else {
      throw ConfigError("train.assignment_refresh must be 'per_epoch' or 'per_batch'");
    }
  }
  if (j.contains("centroid_update")) {
    const std::string v = j.at("centroid_update").get<std::string>();
    if (v == "sequential") {
      c.centroid_update = CentroidRule::Sequential;
    } else if (v == "batch_mean") {
      c.centroid_update = CentroidRule::BatchMean;
    } else {
      throw ConfigError("train.centroid_update must be 'sequential' or 'batch_mean'");
    }
  }
  return c;
}

inline SyntheticSpec synthetic_from_json(const nlohmann::json& j,
                                         const CohortSchema& schema) {
  reject_unknown_keys(j,
                      {"n_patients", "second_episode_prob", "min_events", "max_events",
                       "event_window_hours", "value_noise_sd", "sofa_noise_sd",
                       "clusters", "treatment"},
                      "synthetic");
  SyntheticSpec spec;
  spec.schema = schema;
  read_if(j, "n_patients", spec.n_patients);
  read_if(j, "second_episode_prob", spec.second_episode_prob);
  read_if(j, "min_events", spec.min_events);
  read_if(j, "max_events", spec.max_events);
  read_if(j, "event_window_hours", spec.event_window_hours);
  read_if(j, "value_noise_sd", spec.value_noise_sd);
  read_if(j, "sofa_noise_sd", spec.sofa_noise_sd);
  for (const auto& cj : j.at("clusters")) {
    reject_unknown_keys(cj,
                        {"means", "mortality", "sofa_intercept", "sofa_slope",
                         "survival_mean_days"},
                        "synthetic.clusters");
    SyntheticClusterSpec cs;
    cs.variable_means = cj.at("means").get<std::vector<double>>();
    read_if(cj, "mortality", cs.mortality);
    read_if(cj, "sofa_intercept", cs.sofa_intercept);
    read_if(cj, "sofa_slope", cs.sofa_slope);
    read_if(cj, "survival_mean_days", cs.survival_mean_days);
    spec.clusters.push_back(std::move(cs));
  }
  if (j.contains("treatment")) {
    const auto& tj = j.at("treatment");
    reject_unknown_keys(tj,
                        {"enabled", "eligible_fraction", "intercept", "log_or_per_hour",
                         "log_or_per_liter", "adjusters"},
                        "synthetic.treatment");
    read_if(tj, "enabled", spec.treatment.enabled);
    read_if(tj, "eligible_fraction", spec.treatment.eligible_fraction);
    read_if(tj, "intercept", spec.treatment.intercept);
    read_if(tj, "log_or_per_hour", spec.treatment.log_or_per_hour);
    read_if(tj, "log_or_per_liter", spec.treatment.log_or_per_liter);
    if (tj.contains("adjusters")) {
      spec.treatment.adjusters.clear();
      for (const auto& aj : tj.at("adjusters")) {
        reject_unknown_keys(aj, {"name", "mean", "sd", "binary", "log_or"},
                            "synthetic.treatment.adjusters");
        AdjusterPlant ap;
        ap.name = aj.at("name").get<std::string>();
        read_if(aj, "mean", ap.mean);
        read_if(aj, "sd", ap.sd);
        read_if(aj, "binary", ap.binary);
        read_if(aj, "log_or", ap.log_or);
        spec.treatment.adjusters.push_back(std::move(ap));
      }
    }
  }
  return spec;
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j,
      {"data", "schema", "train", "split_ratio", "alpha", "km_horizon_days",
       "model_adjusters", "output_dir", "model", "seeds", "synthetic"},
      "config");
  RunConfig cfg;
  if (j.contains("schema")) cfg.schema = detail::schema_from_json(j.at("schema"));
  if (j.contains("data")) {
    const auto& dj = j.at("data");
    detail::reject_unknown_keys(dj, {"statics", "events", "outcomes", "sofa", "treatment"},
                                "data");
    cfg.data.statics = dj.at("statics").get<std::string>();
    cfg.data.events = dj.at("events").get<std::string>();
    cfg.data.outcomes = dj.at("outcomes").get<std::string>();
    cfg.data.sofa = dj.at("sofa").get<std::string>();
    detail::read_if(dj, "treatment", cfg.data.treatment);
  }
  if (j.contains("train")) cfg.train = detail::train_config_partial(j.at("train"));
  detail::read_if(j, "split_ratio", cfg.split_ratio);
  detail::read_if(j, "alpha", cfg.alpha);
  detail::read_if(j, "km_horizon_days", cfg.km_horizon_days);
  detail::read_if(j, "model_adjusters", cfg.model_adjusters);
  detail::read_if(j, "output_dir", cfg.output_dir);
  detail::read_if(j, "model", cfg.model_path);
  detail::read_if(j, "seeds", cfg.seeds);
  if (j.contains("synthetic")) {
    cfg.synthetic = detail::synthetic_from_json(j.at("synthetic"), cfg.schema);
    cfg.has_synthetic = true;
  } else {
    cfg.synthetic = make_default_synthetic_spec();
    cfg.synthetic.schema = cfg.schema;
  }
  if (cfg.model_adjusters.empty()) cfg.model_adjusters = cfg.schema.treatment_adjusters;

  try {
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (!(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0)) {
    throw ConfigError("split_ratio must lie in (0,1)");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (cfg.km_horizon_days <= 0.0) throw ConfigError("km_horizon_days must be positive");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["data"] = {{"statics", cfg.data.statics},
               {"events", cfg.data.events},
               {"outcomes", cfg.data.outcomes},
               {"sofa", cfg.data.sofa},
               {"treatment", cfg.data.treatment}};
  nlohmann::json sj;
  sj["static_variables"] = nlohmann::json::array();
  for (const auto& sv : cfg.schema.static_variables) {
    sj["static_variables"].push_back({{"name", sv.name}, {"categories", sv.categories}});
  }
  sj["variables"] = nlohmann::json::array();
  for (const auto& v : cfg.schema.variables) {
    sj["variables"].push_back({{"name", v.name}, {"min", v.min_value}, {"max", v.max_value}});
  }
  sj["discharge_statuses"] = cfg.schema.discharge_statuses;
  sj["mortality_status"] = cfg.schema.mortality_status;
  sj["treatment_adjusters"] = cfg.schema.treatment_adjusters;
  j["schema"] = std::move(sj);
  j["train"] = train_config_to_json(cfg.train);
  j["split_ratio"] = cfg.split_ratio;
  j["alpha"] = cfg.alpha;
  j["km_horizon_days"] = cfg.km_horizon_days;
  j["model_adjusters"] = cfg.model_adjusters;
  j["output_dir"] = cfg.output_dir;
  j["model"] = cfg.model_path;
  j["seeds"] = cfg.effective_seeds();
  return j;
}

}  // namespace npcnet
