#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "npcnet/config.hpp"
#include "npcnet/csv.hpp"
#include "npcnet/evalstats.hpp"
#include "npcnet/synthetic.hpp"
#include "npcnet/trainer.hpp"
#include "npcnet/treatfx.hpp"

namespace npcnet {

namespace detail {

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << bytes;
}

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string json_or_na(std::optional<double> v) {
  return v ? csv::format_double(*v) : "NA";
}

}  // namespace detail

// Records every input and output with a content checksum; written last so the
// manifest always describes the final artifact set.
class Manifest {
 public:
  Manifest(std::string command, nlohmann::json resolved_config)
      : command_(std::move(command)), config_(std::move(resolved_config)) {}

  void add_input(const std::string& path) {
    inputs_[path] = detail::fnv1a_hex(detail::read_file_bytes(path));
  }

  void write_output(const std::string& path, const std::string& bytes) {
    detail::write_file_bytes(path, bytes);
    outputs_[path] = detail::fnv1a_hex(bytes);
  }

  void finalize(const std::string& dir) {
    nlohmann::json j;
    j["format"] = "npcnet.manifest.v1";
    j["command"] = command_;
    j["config"] = config_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    detail::write_file_bytes(dir + "/manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  nlohmann::json config_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

namespace detail {

inline Manifest open_run(const std::string& command, const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  Manifest manifest(command, run_config_to_json(cfg));
  return manifest;
}

inline void add_data_inputs(Manifest& manifest, const RunConfig& cfg) {
  manifest.add_input(cfg.data.statics);
  manifest.add_input(cfg.data.events);
  manifest.add_input(cfg.data.outcomes);
  manifest.add_input(cfg.data.sofa);
  if (!cfg.data.treatment.empty()) manifest.add_input(cfg.data.treatment);
}

inline std::string resolved_model_path(const RunConfig& cfg) {
  if (!cfg.model_path.empty()) return cfg.model_path;
  return cfg.output_dir + "/model_seed" + std::to_string(cfg.effective_seeds().front()) +
         ".json";
}

inline ModelState load_model(const RunConfig& cfg) {
  const std::string path = resolved_model_path(cfg);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

inline std::string phenotype_of(const ModelState& m, int cluster) {
  if (cluster >= 0 && cluster < static_cast<int>(m.display_rank.size())) {
    return phenotype_name(m.display_rank[cluster]);
  }
  return "c" + std::to_string(cluster);
}

struct AssignedCohort {
  std::vector<Episode> episodes;
  std::vector<int> labels;
  Tensor embeddings;
};

inline AssignedCohort load_and_assign(const RunConfig& cfg, const ModelState& model,
                                      Manifest& manifest) {
  add_data_inputs(manifest, cfg);
  auto [episodes, report] = load_cohort(cfg.data, cfg.schema);
  AssignedCohort out;
  out.episodes = std::move(episodes);
  out.embeddings = infer_embeddings(out.episodes, model);
  out.labels = assign_phenotypes(out.embeddings, model.centroids);
  return out;
}

inline std::string assignments_csv(const ModelState& model,
                                   const std::vector<Episode>& episodes,
                                   const std::vector<int>& labels) {
  std::ostringstream ss;
  csv::Writer w(ss);
  w.write_row({"episode_id", "cluster", "phenotype"});
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    w.write_row({episodes[i].episode_id, std::to_string(labels[i]),
                 phenotype_of(model, labels[i])});
  }
  return ss.str();
}

}  // namespace detail

// --- synth -------------------------------------------------------------------

inline void cmd_synth(const RunConfig& cfg, bool quiet = false) {
  SyntheticSpec spec = cfg.synthetic;
  const std::uint64_t seed = cfg.effective_seeds().front();
  std::vector<Episode> episodes = generate_synthetic_cohort(spec, seed);
  Manifest manifest = detail::open_run("synth", cfg);
  const std::string dir = cfg.output_dir;

  {
    std::ostringstream ss;
    csv::Writer w(ss);
    std::vector<std::string> header = {"episode_id", "patient_id"};
    for (const auto& sv : spec.schema.static_variables) header.push_back(sv.name);
    w.write_row(header);
    for (const auto& ep : episodes) {
      std::vector<std::string> row = {ep.episode_id, ep.patient_id};
      for (std::size_t v = 0; v < ep.statics.size(); ++v) {
        row.push_back(spec.schema.static_variables[v].categories[ep.statics[v]]);
      }
      w.write_row(row);
    }
    manifest.write_output(dir + "/statics.csv", ss.str());
  }
  {
    std::ostringstream ss;
    csv::Writer w(ss);
    w.write_row({"episode_id", "variable", "timestamp_hours", "value"});
    for (const auto& ep : episodes) {
      for (const auto& m : ep.events) {
        w.write_row({ep.episode_id, m.variable, csv::format_double(m.timestamp_hours),
                     csv::format_double(m.value)});
      }
    }
    manifest.write_output(dir + "/events.csv", ss.str());
  }
  {
    std::ostringstream ss;
    csv::Writer w(ss);
    w.write_row({"episode_id", "discharge_status", "survival_days", "death_event"});
    for (const auto& ep : episodes) {
      w.write_row({ep.episode_id, spec.schema.discharge_statuses[ep.discharge_status],
                   csv::format_double(ep.survival.time_days),
                   ep.survival.event ? "1" : "0"});
    }
    manifest.write_output(dir + "/outcomes.csv", ss.str());
  }
  {
    std::ostringstream ss;
    csv::Writer w(ss);
    w.write_row({"episode_id", "hour", "score"});
    for (const auto& ep : episodes) {
      for (const auto& [hour, score] : ep.sofa) {
        w.write_row({ep.episode_id, std::to_string(hour), std::to_string(score)});
      }
    }
    manifest.write_output(dir + "/sofa.csv", ss.str());
  }
  {
    std::ostringstream ss;
    csv::Writer w(ss);
    std::vector<std::string> header = {
        "episode_id",        "received_vasopressor", "first_vasopressor",
        "map_below_65_within_1h", "time_to_vasopressor_hours", "iv_fluid_volume_l",
        "chf_flag",          "renal_failure_flag"};
    for (const auto& name : spec.schema.treatment_adjusters) header.push_back(name);
    w.write_row(header);
    for (const auto& ep : episodes) {
      if (!ep.treatment) continue;
      const TreatmentRecord& t = *ep.treatment;
      std::vector<std::string> row = {ep.episode_id,
                                      t.received_vasopressor ? "1" : "0",
                                      t.first_vasopressor,
                                      t.map_below_65_within_1h ? "1" : "0",
                                      csv::format_double(t.time_to_vasopressor_hours),
                                      csv::format_double(t.iv_fluid_volume_liters),
                                      t.chf_flag ? "1" : "0",
                                      t.renal_failure_flag ? "1" : "0"};
      for (const auto& name : spec.schema.treatment_adjusters) {
        row.push_back(csv::format_double(t.adjusters.at(name)));
      }
      w.write_row(row);
    }
    manifest.write_output(dir + "/treatment.csv", ss.str());
  }
  {
    std::ostringstream ss;
    csv::Writer w(ss);
    w.write_row({"episode_id", "planted_cluster"});
    for (const auto& ep : episodes) {
      w.write_row({ep.episode_id, std::to_string(ep.planted_cluster)});
    }
    manifest.write_output(dir + "/labels.csv", ss.str());
  }
  manifest.finalize(dir);
  if (!quiet) {
    std::cout << "synth: " << episodes.size() << " episodes written to " << dir << "\n";
  }
}

// --- fit ---------------------------------------------------------------------

inline void cmd_fit(const RunConfig& cfg, bool quiet = false) {
  Manifest manifest = detail::open_run("fit", cfg);
  detail::add_data_inputs(manifest, cfg);
  auto [episodes, report] = load_cohort(cfg.data, cfg.schema);
  if (!quiet) {
    for (const auto& warning : report.warnings) std::cout << "warning: " << warning << "\n";
  }
  CohortSplit split = split_by_patient(episodes, cfg.split_ratio, cfg.train.seed);

  std::vector<double> si_values, chi_values, dbi_values;
  nlohmann::json per_seed = nlohmann::json::array();
  for (const std::uint64_t seed : cfg.effective_seeds()) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    TrainLog log;
    ModelState model = train(split.train, cfg.schema, tc, &log);
    if (!quiet) {
      for (const auto& warning : log.warnings) std::cout << "warning: " << warning << "\n";
    }

    const std::string model_path =
        cfg.output_dir + "/model_seed" + std::to_string(seed) + ".json";
    manifest.write_output(model_path, model_to_json(model).dump(2) + "\n");

    std::ostringstream ss;
    csv::Writer w(ss);
    w.write_row({"phase", "epoch", "total", "reconstruction", "clustering", "navigator"});
    for (const auto& e : log.epochs) {
      w.write_row({e.phase, std::to_string(e.epoch), csv::format_double(e.total),
                   csv::format_double(e.reconstruction), csv::format_double(e.clustering),
                   csv::format_double(e.navigator)});
    }
    manifest.write_output(cfg.output_dir + "/loss_curve_seed" + std::to_string(seed) +
                              ".csv",
                          ss.str());

    nlohmann::json seed_report;
    seed_report["seed"] = seed;
    if (!split.test.empty()) {
      Tensor e_test = infer_embeddings(split.test, model);
      std::vector<int> labels = assign_phenotypes(e_test, model.centroids);
      std::vector<std::size_t> sizes(tc.k, 0);
      for (int l : labels) ++sizes[l];
      const bool all_populated =
          std::all_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; });
      auto record = [&](const char* key, std::optional<double> v,
                        std::vector<double>& sink) {
        if (v) {
          seed_report[key] = *v;
          sink.push_back(*v);
        } else {
          seed_report[key] = nullptr;
        }
      };
      if (all_populated && tc.k >= 2) {
        record("si", silhouette(e_test, labels, tc.k), si_values);
        record("chi", calinski_harabasz(e_test, labels, tc.k), chi_values);
        record("dbi", davies_bouldin(e_test, labels, tc.k), dbi_values);
      } else {
        seed_report["si"] = nullptr;
        seed_report["chi"] = nullptr;
        seed_report["dbi"] = nullptr;
      }
    }
    if (!log.epochs.empty()) seed_report["final_loss"] = log.epochs.back().total;
    per_seed.push_back(std::move(seed_report));
    if (!quiet) std::cout << "fit: seed " << seed << " done\n";
  }

  nlohmann::json fit_report;
  fit_report["format"] = "npcnet.fit_report.v1";
  fit_report["per_seed"] = std::move(per_seed);
  auto aggregate = [](const std::vector<double>& values) -> nlohmann::json {
    if (values.empty()) return nullptr;
    const stats::MeanSd ms = stats::mean_sd(values);
    return {{"mean", ms.mean}, {"sd", ms.sd}, {"n", ms.n}};
  };
  fit_report["aggregate"] = {{"si", aggregate(si_values)},
                             {"chi", aggregate(chi_values)},
                             {"dbi", aggregate(dbi_values)}};
  manifest.write_output(cfg.output_dir + "/fit_report.json", fit_report.dump(2) + "\n");
  manifest.write_output(cfg.output_dir + "/config_resolved.json",
                        run_config_to_json(cfg).dump(2) + "\n");
  manifest.finalize(cfg.output_dir);
}

// --- assign ------------------------------------------------------------------

inline void cmd_assign(const RunConfig& cfg, bool quiet = false) {
  Manifest manifest = detail::open_run("assign", cfg);
  ModelState model = detail::load_model(cfg);
  manifest.add_input(detail::resolved_model_path(cfg));
  detail::AssignedCohort cohort = detail::load_and_assign(cfg, model, manifest);
  manifest.write_output(cfg.output_dir + "/assignments.csv",
                        detail::assignments_csv(model, cohort.episodes, cohort.labels));
  manifest.finalize(cfg.output_dir);
  if (!quiet) {
    std::cout << "assign: " << cohort.episodes.size() << " episodes labeled\n";
  }
}

// --- evaluate ----------------------------------------------------------------

inline void cmd_evaluate(const RunConfig& cfg, bool quiet = false) {
  Manifest manifest = detail::open_run("evaluate", cfg);
  ModelState model = detail::load_model(cfg);
  manifest.add_input(detail::resolved_model_path(cfg));
  detail::AssignedCohort cohort = detail::load_and_assign(cfg, model, manifest);
  const int k = model.config.k;

  manifest.write_output(cfg.output_dir + "/assignments.csv",
                        detail::assignments_csv(model, cohort.episodes, cohort.labels));

  std::vector<std::size_t> sizes(k, 0);
  for (int l : cohort.labels) ++sizes[l];
  const bool metrics_defined =
      cohort.episodes.size() >= 2 && k >= 2 &&
      std::all_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; });

  TrajectoryGrid grid = build_trajectory_grid(cohort.episodes, cohort.labels, k);
  const std::optional<double> tdi_value = tdi(grid, cfg.alpha);

  nlohmann::json metrics;
  metrics["format"] = "npcnet.metrics.v1";
  auto put = [&](const char* key, std::optional<double> v) {
    if (v) {
      metrics[key] = *v;
    } else {
      metrics[key] = nullptr;
    }
  };
  if (metrics_defined) {
    put("si", silhouette(cohort.embeddings, cohort.labels, k));
    put("chi", calinski_harabasz(cohort.embeddings, cohort.labels, k));
    put("dbi", davies_bouldin(cohort.embeddings, cohort.labels, k));
  } else {
    metrics["si"] = nullptr;
    metrics["chi"] = nullptr;
    metrics["dbi"] = nullptr;
  }
  put("tdi", tdi_value);
  metrics["alpha"] = cfg.alpha;
  std::size_t testable = 0;
  for (const auto& c : grid.cells) {
    if (c.testable) ++testable;
  }
  metrics["tdi_testable_comparisons"] = testable;
  metrics["tdi_total_cells"] = grid.cells.size();
  metrics["episodes_without_sofa6"] = grid.excluded_episodes;
  metrics["n_episodes"] = cohort.episodes.size();
  manifest.write_output(cfg.output_dir + "/metrics.json", metrics.dump(2) + "\n");

  {
    std::ostringstream ss;
    csv::Writer w(ss);
    w.write_row({"stratum", "hour", "phenotype_a", "phenotype_b", "p_value",
                 "testable", "significant"});
    for (const auto& c : grid.cells) {
      w.write_row({stratum_label(c.stratum), std::to_string(c.hour),
                   detail::phenotype_of(model, c.a), detail::phenotype_of(model, c.b),
                   c.testable ? csv::format_double(c.p) : "NA",
                   c.testable ? "1" : "0",
                   c.testable && c.p < cfg.alpha ? "1" : "0"});
    }
    manifest.write_output(cfg.output_dir + "/tdi_grid.csv", ss.str());
  }

  {
    std::vector<KmCurve> curves =
        kaplan_meier(cohort.episodes, cohort.labels, k, cfg.km_horizon_days);
    std::ostringstream ss;
    csv::Writer w(ss);
    w.write_row({"phenotype", "time_days", "survival", "at_risk", "events"});
    for (int j = 0; j < k; ++j) {
      for (const auto& p : curves[j].points) {
        w.write_row({detail::phenotype_of(model, j), csv::format_double(p.time),
                     csv::format_double(p.survival), std::to_string(p.at_risk),
                     std::to_string(p.events)});
      }
    }
    manifest.write_output(cfg.output_dir + "/km_curves.csv", ss.str());
  }

  {
    std::vector<CharacteristicRow> rows = phenotype_characteristics(
        cohort.episodes, cohort.labels, k, cfg.schema, model.config.window_hours);
    std::ostringstream ss;
    csv::Writer w(ss);
    std::vector<std::string> header = {"characteristic"};
    for (int j = 0; j < k; ++j) header.push_back(detail::phenotype_of(model, j));
    header.push_back("p_value");
    w.write_row(header);
    for (const auto& row : rows) {
      std::vector<std::string> cells = {row.label};
      cells.insert(cells.end(), row.cells.begin(), row.cells.end());
      cells.push_back(std::isnan(row.p_value) ? "NA" : csv::format_double(row.p_value));
      w.write_row(cells);
    }
    manifest.write_output(cfg.output_dir + "/characteristics.csv", ss.str());
  }

  manifest.finalize(cfg.output_dir);
  if (!quiet) {
    std::cout << "evaluate: " << cohort.episodes.size() << " episodes, TDI "
              << detail::json_or_na(tdi_value) << "\n";
  }
}

// --- treatment ---------------------------------------------------------------

inline void cmd_treatment(const RunConfig& cfg, bool quiet = false) {
  Manifest manifest = detail::open_run("treatment", cfg);
  ModelState model = detail::load_model(cfg);
  manifest.add_input(detail::resolved_model_path(cfg));
  detail::AssignedCohort cohort = detail::load_and_assign(cfg, model, manifest);
  const int k = model.config.k;

  std::vector<std::vector<Episode>> by_phenotype(k);
  {
    std::vector<Episode> treated = filter_treatment_cohort(cohort.episodes);
    Tensor e = infer_embeddings(treated, model);
    std::vector<int> labels = assign_phenotypes(e, model.centroids);
    for (std::size_t i = 0; i < treated.size(); ++i) {
      by_phenotype[labels[i]].push_back(treated[i]);
    }
  }

  std::ostringstream ss;
  csv::Writer w(ss);
  w.write_row({"phenotype", "term", "odds_ratio", "ci_low", "ci_high", "p_value",
               "e_value", "e_value_ci_limit", "n", "flags"});
  for (int j = 0; j < k; ++j) {
    const std::string name = detail::phenotype_of(model, j);
    TreatmentFit tf = treatment_model(by_phenotype[j], cfg.model_adjusters);
    std::string flags;
    if (tf.non_estimable) flags = "non_estimable";
    if (tf.low_power) flags += flags.empty() ? "low_power" : ";low_power";
    if (!tf.non_estimable && tf.fit.separation_suspected) {
      flags += flags.empty() ? "separation_suspected" : ";separation_suspected";
    }
    if (tf.non_estimable) {
      w.write_row({name, "all", "NA", "NA", "NA", "NA", "NA", "NA",
                   std::to_string(tf.n), flags});
      continue;
    }
    for (std::size_t t = 1; t < tf.fit.terms.size(); ++t) {  // skip intercept
      const EValueResult ev =
          e_value(tf.fit.odds_ratio[t], tf.fit.ci_low[t], tf.fit.ci_high[t]);
      w.write_row({name, tf.fit.terms[t], csv::format_double(tf.fit.odds_ratio[t]),
                   csv::format_double(tf.fit.ci_low[t]),
                   csv::format_double(tf.fit.ci_high[t]),
                   csv::format_double(tf.fit.p[t]),
                   csv::format_double(ev.e_value_point),
                   csv::format_double(ev.e_value_ci_limit), std::to_string(tf.n), flags});
    }
  }
  manifest.write_output(cfg.output_dir + "/forest.csv", ss.str());
  manifest.finalize(cfg.output_dir);
  if (!quiet) std::cout << "treatment: forest table written\n";
}

// --- check -------------------------------------------------------------------

// Self-test: finite-difference gradient checks on a miniature model plus a few
// closed-form anchors. Returns false when any probe fails its tolerance.
inline bool cmd_check(const RunConfig& cfg, bool quiet = false) {
  bool ok = true;
  auto probe = [&](const std::string& name, bool pass) {
    ok = ok && pass;
    if (!quiet) std::cout << "check: " << name << " " << (pass ? "ok" : "FAIL") << "\n";
  };

  {
    SyntheticSpec spec = cfg.synthetic;
    spec.n_patients = 12;
    spec.second_episode_prob = 0;
    spec.treatment.enabled = false;
    std::vector<Episode> episodes = generate_synthetic_cohort(spec, 7);
    TrainConfig tc;
    tc.k = 2;
    tc.bins = 3;
    tc.embedding_dim = 4;
    tc.encoder_hidden = {6};
    tc.encoder_output_dim = 3;
    tc.epochs = 1;
    tc.pretrain_epochs = 1;
    tc.batch_size = 4;
    ModelState m = init_model(episodes, spec.schema, tc);
    m.centroids = init_centroids(infer_embeddings(episodes, m), tc.k,
                                 derive_seed(tc.seed, "centroid_init"));

    std::vector<EncodedEpisode> enc = encode_episodes(episodes, m.thresholds, m.vocab);
    std::vector<std::size_t> batch = {0, 1, 2, 3};
    std::vector<int> statuses;
    for (const auto& ep : episodes) statuses.push_back(ep.discharge_status);
    std::vector<double> weights = class_weights_from(statuses, m.navigator.classes());
    m.navigator.class_weights = weights;
    std::vector<int> assignments(episodes.size(), 0);
    for (std::size_t i = 1; i < assignments.size(); i += 2) assignments[i] = 1;
    std::vector<int> anchors;
    for (std::size_t i : batch) anchors.push_back(static_cast<int>(i));
    TripletSample trip = sample_triplets(statuses, anchors, tc.seed);

    auto loss_fn = [&]() {
      detail::BatchLosses losses = detail::batch_losses(
          m, enc, batch, assignments, statuses, trip.triplets, true, false);
      return losses.total;
    };
    const GradCheckReport report = grad_check(loss_fn, m.parameters(), 1e-5, 1e-4);
    probe("gradient (max rel err " + csv::format_double(report.max_rel_err) + ")",
          report.passed);
  }

  {
    const EValueResult ev = e_value(1.318, 1.05, 1.65);
    probe("e-value anchor", std::abs(ev.e_value_point - 1.56) <= 0.005);
  }

  {
    Tensor pts = Tensor::matrix(4, 1);
    pts(0, 0) = 0;
    pts(1, 0) = 1;
    pts(2, 0) = 10;
    pts(3, 0) = 11;
    std::vector<int> labels = {0, 0, 1, 1};
    auto si = silhouette(pts, labels, 2);
    probe("silhouette anchor", si && std::abs(*si - 0.9) < 0.02);
  }

  if (!quiet) std::cout << "check: " << (ok ? "all probes passed" : "FAILURES") << "\n";
  return ok;
}

}  // namespace npcnet
