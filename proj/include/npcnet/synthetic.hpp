#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "npcnet/cohort.hpp"
#include "npcnet/rng.hpp"

namespace npcnet {

struct SyntheticClusterSpec {
  std::vector<double> variable_means;  // aligned with schema.variables
  double mortality = 0.2;
  double sofa_intercept = 5.0;
  double sofa_slope = 0.0;
  double survival_mean_days = 200.0;
};

struct AdjusterPlant {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
  bool binary = false;  // Bernoulli(mean) instead of Normal(mean, sd)
  double log_or = 0.0;
};

// When enabled, eligible episodes get a qualifying vasopressor record and
// their in-hospital death is drawn from a logistic model instead of the
// cluster mortality rate. The exposure is time to vasopressor start.
struct TreatmentPlant {
  bool enabled = false;
  double eligible_fraction = 1.0;
  double intercept = -1.5;
  double log_or_per_hour = 0.0;
  double log_or_per_liter = 0.0;
  std::vector<AdjusterPlant> adjusters;
};

struct SyntheticSpec {
  CohortSchema schema;
  int n_patients = 400;
  double second_episode_prob = 0.1;
  int min_events = 8;
  int max_events = 24;
  double event_window_hours = 6.0;
  double value_noise_sd = 1.0;
  double sofa_noise_sd = 1.0;
  std::vector<SyntheticClusterSpec> clusters;
  TreatmentPlant treatment;
};

inline CohortSchema make_default_schema() {
  CohortSchema s;
  s.static_variables = {
      {"sex", {"female", "male"}},
      {"age_band", {"18-49", "50-69", "70+"}},
  };
  s.variables = {
      {"SBP", 30.0, 300.0}, {"HR", 20.0, 250.0},  {"RR", 4.0, 60.0},
      {"TEMP", 30.0, 43.0}, {"LACT", 0.1, 30.0},  {"CREAT", 0.1, 20.0},
  };
  s.discharge_statuses = {"alive", "dead"};
  s.mortality_status = "dead";
  s.treatment_adjusters = {"age", "male_sex"};
  return s;
}

// Four well-separated physiological profiles with graded severity.
inline SyntheticSpec make_default_synthetic_spec() {
  SyntheticSpec spec;
  spec.schema = make_default_schema();
  const std::vector<std::vector<double>> means = {
      {125.0, 78.0, 15.0, 36.8, 1.2, 0.9},
      {105.0, 98.0, 21.0, 38.2, 2.6, 1.4},
      {88.0, 112.0, 26.0, 38.9, 4.8, 2.2},
      {72.0, 128.0, 31.0, 35.8, 8.0, 3.4},
  };
  const std::vector<double> mortality = {0.10, 0.25, 0.45, 0.70};
  const std::vector<double> sofa_intercept = {3.0, 6.0, 9.0, 12.0};
  const std::vector<double> sofa_slope = {-0.10, 0.02, 0.12, 0.25};
  const std::vector<double> survival_mean = {400.0, 250.0, 120.0, 60.0};
  for (int c = 0; c < 4; ++c) {
    SyntheticClusterSpec cs;
    cs.variable_means = means[c];
    cs.mortality = mortality[c];
    cs.sofa_intercept = sofa_intercept[c];
    cs.sofa_slope = sofa_slope[c];
    cs.survival_mean_days = survival_mean[c];
    spec.clusters.push_back(cs);
  }
  spec.treatment.adjusters = {
      {"age", 65.0, 10.0, false, 0.01},
      {"male_sex", 0.5, 0.0, true, 0.10},
  };
  return spec;
}

namespace detail {

inline std::string padded_id(const char* prefix, int width, int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, n);
  return buf;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

inline std::vector<Episode> generate_synthetic_cohort(const SyntheticSpec& spec,
                                                      std::uint64_t seed) {
  const int k = static_cast<int>(spec.clusters.size());
  if (k < 2) throw std::invalid_argument("synthetic cohort needs at least 2 clusters");
  if (spec.n_patients < k) {
    throw std::invalid_argument("synthetic cohort needs at least one patient per cluster");
  }
  for (const auto& c : spec.clusters) {
    if (c.variable_means.size() != spec.schema.variables.size()) {
      throw std::invalid_argument("cluster variable_means must match schema variables");
    }
  }
  if (spec.treatment.enabled &&
      spec.treatment.adjusters.size() != spec.schema.treatment_adjusters.size()) {
    throw std::invalid_argument("treatment adjuster plants must match schema adjusters");
  }

  Rng rng(derive_seed(seed, "synthetic_cohort"));

  // balanced planted labels, order shuffled
  std::vector<int> patient_cluster(spec.n_patients);
  for (int i = 0; i < spec.n_patients; ++i) patient_cluster[i] = i % k;
  rng.shuffle(patient_cluster);

  std::vector<Episode> episodes;
  int episode_counter = 0;
  for (int p = 0; p < spec.n_patients; ++p) {
    const int cluster = patient_cluster[p];
    const SyntheticClusterSpec& cs = spec.clusters[cluster];
    const int n_episodes = 1 + (rng.bernoulli(spec.second_episode_prob) ? 1 : 0);
    for (int e = 0; e < n_episodes; ++e) {
      Episode ep;
      ep.patient_id = detail::padded_id("P", 4, p + 1);
      ep.episode_id = detail::padded_id("E", 5, ++episode_counter);
      ep.planted_cluster = cluster;

      for (const auto& sv : spec.schema.static_variables) {
        ep.statics.push_back(
            static_cast<int>(rng.uniform_index(sv.categories.size())));
      }

      const int span = spec.max_events - spec.min_events + 1;
      const int n_events =
          spec.min_events + static_cast<int>(rng.uniform_index(span));
      for (int m = 0; m < n_events; ++m) {
        const std::size_t vi = rng.uniform_index(spec.schema.variables.size());
        const auto& vr = spec.schema.variables[vi];
        double value = cs.variable_means[vi] + spec.value_noise_sd * rng.normal();
        value = std::clamp(value, vr.min_value, vr.max_value);
        const double ts = rng.uniform(0.0, spec.event_window_hours);
        ep.events.push_back({vr.name, ts, value});
      }
      detail::sort_events(ep.events);

      for (int h = 0; h <= 24; ++h) {
        double s = cs.sofa_intercept + cs.sofa_slope * h +
                   spec.sofa_noise_sd * rng.normal();
        const int score = std::clamp(static_cast<int>(std::lround(s)), 0, 24);
        ep.sofa.emplace_back(h, score);
      }

      bool dead;
      if (spec.treatment.enabled && rng.bernoulli(spec.treatment.eligible_fraction)) {
        TreatmentRecord rec;
        rec.received_vasopressor = true;
        rec.first_vasopressor = "norepinephrine";
        rec.map_below_65_within_1h = true;
        rec.time_to_vasopressor_hours = rng.uniform(0.0, 12.0);
        rec.iv_fluid_volume_liters = std::max(0.0, 3.0 + 1.2 * rng.normal());
        double z = spec.treatment.intercept +
                   spec.treatment.log_or_per_hour * rec.time_to_vasopressor_hours +
                   spec.treatment.log_or_per_liter * rec.iv_fluid_volume_liters;
        for (std::size_t ai = 0; ai < spec.treatment.adjusters.size(); ++ai) {
          const AdjusterPlant& ap = spec.treatment.adjusters[ai];
          const double v = ap.binary ? (rng.bernoulli(ap.mean) ? 1.0 : 0.0)
                                     : ap.mean + ap.sd * rng.normal();
          rec.adjusters[spec.schema.treatment_adjusters[ai]] = v;
          z += ap.log_or * v;
        }
        dead = rng.bernoulli(detail::sigmoid(z));
        rec.in_hospital_death = dead;
        ep.treatment = std::move(rec);
      } else {
        dead = rng.bernoulli(cs.mortality);
      }

      const int dead_status = spec.schema.mortality_status_index();
      ep.discharge_status = dead ? dead_status : (dead_status == 0 ? 1 : 0);
      if (dead) {
        ep.survival.time_days = rng.uniform(1.0, 30.0);
        ep.survival.event = true;
      } else {
        const double t = -cs.survival_mean_days * std::log(1.0 - rng.uniform());
        if (t > 365.0) {
          ep.survival.time_days = 365.0;
          ep.survival.event = false;
        } else {
          ep.survival.time_days = t;
          ep.survival.event = true;
        }
      }
      episodes.push_back(std::move(ep));
    }
  }
  return episodes;
}

}  // namespace npcnet
