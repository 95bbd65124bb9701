#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "npcnet/csv.hpp"
#include "npcnet/rng.hpp"

namespace npcnet {

struct StaticVariableSchema {
  std::string name;
  std::vector<std::string> categories;
};

struct VariableRange {
  std::string name;
  double min_value = 0.0;
  double max_value = 0.0;
};

// The CSV contract: which static variables exist (with category labels),
// which time-varying variables are accepted (with plausibility ranges),
// and the discharge-status categories.
struct CohortSchema {
  std::vector<StaticVariableSchema> static_variables;
  std::vector<VariableRange> variables;
  std::vector<std::string> discharge_statuses;
  std::string mortality_status = "dead";
  std::vector<std::string> treatment_adjusters;

  int variable_index(const std::string& name) const {
    for (std::size_t i = 0; i < variables.size(); ++i)
      if (variables[i].name == name) return static_cast<int>(i);
    return -1;
  }

  int status_index(const std::string& name) const {
    for (std::size_t i = 0; i < discharge_statuses.size(); ++i)
      if (discharge_statuses[i] == name) return static_cast<int>(i);
    return -1;
  }

  int mortality_status_index() const { return status_index(mortality_status); }

  int category_index(std::size_t static_var, const std::string& label) const {
    const auto& cats = static_variables[static_var].categories;
    for (std::size_t i = 0; i < cats.size(); ++i)
      if (cats[i] == label) return static_cast<int>(i);
    return -1;
  }
};

struct Measurement {
  std::string variable;
  double timestamp_hours = 0.0;
  double value = 0.0;
};

struct TreatmentRecord {
  bool received_vasopressor = false;
  std::string first_vasopressor;
  bool map_below_65_within_1h = false;
  double time_to_vasopressor_hours = 0.0;
  double iv_fluid_volume_liters = 0.0;
  bool chf_flag = false;
  bool renal_failure_flag = false;
  bool in_hospital_death = false;
  std::map<std::string, double> adjusters;
};

struct SurvivalRecord {
  double time_days = 0.0;
  bool event = false;
};

struct Episode {
  std::string episode_id;
  std::string patient_id;
  std::vector<int> statics;  // category index per schema static variable
  std::vector<Measurement> events;
  int discharge_status = 0;
  std::vector<std::pair<int, int>> sofa;  // (hour, score), hour unique, sorted
  SurvivalRecord survival;
  std::optional<TreatmentRecord> treatment;
  int planted_cluster = -1;  // synthetic cohorts only; oracle use, never model input

  std::optional<int> sofa_at(int hour) const {
    for (const auto& [h, s] : sofa)
      if (h == hour) return s;
    return std::nullopt;
  }
};

struct CohortSplit {
  std::vector<Episode> train;
  std::vector<Episode> test;
};

struct LoadReport {
  std::size_t episodes_loaded = 0;
  std::size_t event_rows_read = 0;
  std::size_t event_rows_dropped_range = 0;
  std::size_t event_rows_dropped_unknown_variable = 0;
  std::size_t event_rows_dropped_bad_timestamp = 0;
  std::size_t sofa_rows_dropped = 0;
  std::size_t sofa_rows_duplicate = 0;
  std::size_t treatment_rows_dropped = 0;
  std::size_t episodes_without_events = 0;
  std::vector<std::string> warnings;
};

struct CohortPaths {
  std::string statics;
  std::string events;
  std::string outcomes;
  std::string sofa;
  std::string treatment;  // optional, empty means no treatment data
};

namespace detail {

// Canonical event order: timestamp, then variable name, then file order.
inline void sort_events(std::vector<Measurement>& events) {
  std::vector<std::size_t> order(events.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (events[a].timestamp_hours != events[b].timestamp_hours)
      return events[a].timestamp_hours < events[b].timestamp_hours;
    if (events[a].variable != events[b].variable)
      return events[a].variable < events[b].variable;
    return a < b;
  });
  std::vector<Measurement> sorted;
  sorted.reserve(events.size());
  for (std::size_t i : order) sorted.push_back(std::move(events[i]));
  events = std::move(sorted);
}

inline bool parse_flag(const std::string& s, const std::string& context) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw DataError(context + ": expected 0/1 flag, got '" + s + "'");
}

}  // namespace detail

inline std::pair<std::vector<Episode>, LoadReport> load_cohort(
    const CohortPaths& paths, const CohortSchema& schema) {
  LoadReport report;

  // statics.csv defines the episode universe
  csv::Table statics = csv::read_file(paths.statics);
  const int id_col = statics.require_column("episode_id", paths.statics);
  const int pat_col = statics.require_column("patient_id", paths.statics);
  std::vector<int> static_cols;
  for (const auto& sv : schema.static_variables)
    static_cols.push_back(statics.require_column(sv.name, paths.statics));
  {
    std::set<std::string> allowed = {"episode_id", "patient_id"};
    for (const auto& sv : schema.static_variables) allowed.insert(sv.name);
    for (const auto& col : statics.header) {
      if (!allowed.count(col)) {
        throw DataError(paths.statics + ": unexpected column '" + col + "'");
      }
    }
  }

  std::vector<Episode> episodes;
  std::unordered_map<std::string, std::size_t> index_of;
  for (const auto& row : statics.rows) {
    Episode ep;
    ep.episode_id = row[id_col];
    ep.patient_id = row[pat_col];
    if (index_of.count(ep.episode_id)) {
      throw DataError(paths.statics + ": duplicate episode_id '" + ep.episode_id + "'");
    }
    for (std::size_t si = 0; si < schema.static_variables.size(); ++si) {
      const std::string& label = row[static_cols[si]];
      const int cat = schema.category_index(si, label);
      if (cat < 0) {
        throw DataError(paths.statics + ": episode " + ep.episode_id +
                        ": unknown category '" + label + "' for static variable '" +
                        schema.static_variables[si].name + "'");
      }
      ep.statics.push_back(cat);
    }
    index_of[ep.episode_id] = episodes.size();
    episodes.push_back(std::move(ep));
  }

  auto find_episode = [&](const std::string& id, const std::string& file) -> Episode& {
    auto it = index_of.find(id);
    if (it == index_of.end()) {
      throw DataError(file + ": episode '" + id + "' not present in " + paths.statics);
    }
    return episodes[it->second];
  };

  // events.csv
  csv::Table events = csv::read_file(paths.events);
  const int ev_id = events.require_column("episode_id", paths.events);
  const int ev_var = events.require_column("variable", paths.events);
  const int ev_ts = events.require_column("timestamp_hours", paths.events);
  const int ev_val = events.require_column("value", paths.events);
  for (const auto& row : events.rows) {
    ++report.event_rows_read;
    Episode& ep = find_episode(row[ev_id], paths.events);
    const std::string& var = row[ev_var];
    const int vi = schema.variable_index(var);
    if (vi < 0) {
      ++report.event_rows_dropped_unknown_variable;
      continue;
    }
    const double ts = csv::parse_double(row[ev_ts], paths.events);
    if (ts < 0.0) {
      ++report.event_rows_dropped_bad_timestamp;
      continue;
    }
    const double value = csv::parse_double(row[ev_val], paths.events);
    const auto& range = schema.variables[vi];
    if (value < range.min_value || value > range.max_value) {
      ++report.event_rows_dropped_range;
      continue;
    }
    ep.events.push_back({var, ts, value});
  }

  // outcomes.csv: exactly one row per episode
  csv::Table outcomes = csv::read_file(paths.outcomes);
  const int out_id = outcomes.require_column("episode_id", paths.outcomes);
  const int out_status = outcomes.require_column("discharge_status", paths.outcomes);
  const int out_days = outcomes.require_column("survival_days", paths.outcomes);
  const int out_event = outcomes.require_column("death_event", paths.outcomes);
  std::set<std::string> seen_outcomes;
  for (const auto& row : outcomes.rows) {
    Episode& ep = find_episode(row[out_id], paths.outcomes);
    if (!seen_outcomes.insert(ep.episode_id).second) {
      throw DataError(paths.outcomes + ": duplicate outcome for episode '" +
                      ep.episode_id + "'");
    }
    const int status = schema.status_index(row[out_status]);
    if (status < 0) {
      throw DataError(paths.outcomes + ": unknown discharge_status '" +
                      row[out_status] + "' for episode " + ep.episode_id);
    }
    ep.discharge_status = status;
    ep.survival.time_days = csv::parse_double(row[out_days], paths.outcomes);
    if (ep.survival.time_days < 0.0) {
      throw DataError(paths.outcomes + ": negative survival_days for episode " +
                      ep.episode_id);
    }
    ep.survival.event = detail::parse_flag(row[out_event], paths.outcomes);
  }
  for (const auto& ep : episodes) {
    if (!seen_outcomes.count(ep.episode_id)) {
      throw DataError(paths.outcomes + ": no outcome row for episode '" +
                      ep.episode_id + "'");
    }
  }

  // sofa.csv
  csv::Table sofa = csv::read_file(paths.sofa);
  const int sf_id = sofa.require_column("episode_id", paths.sofa);
  const int sf_hour = sofa.require_column("hour", paths.sofa);
  const int sf_score = sofa.require_column("score", paths.sofa);
  for (const auto& row : sofa.rows) {
    Episode& ep = find_episode(row[sf_id], paths.sofa);
    const long hour = csv::parse_long(row[sf_hour], paths.sofa);
    const long score = csv::parse_long(row[sf_score], paths.sofa);
    if (hour < 0 || hour > 24 || score < 0 || score > 24) {
      ++report.sofa_rows_dropped;
      continue;
    }
    bool duplicate = false;
    for (const auto& [h, s] : ep.sofa) {
      if (h == hour) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) {
      ++report.sofa_rows_duplicate;
      continue;
    }
    ep.sofa.emplace_back(static_cast<int>(hour), static_cast<int>(score));
  }

  // treatment.csv (optional)
  if (!paths.treatment.empty()) {
    csv::Table treatment = csv::read_file(paths.treatment);
    const int tr_id = treatment.require_column("episode_id", paths.treatment);
    const int tr_recv = treatment.require_column("received_vasopressor", paths.treatment);
    const int tr_first = treatment.require_column("first_vasopressor", paths.treatment);
    const int tr_map = treatment.require_column("map_below_65_within_1h", paths.treatment);
    const int tr_time = treatment.require_column("time_to_vasopressor_hours", paths.treatment);
    const int tr_vol = treatment.require_column("iv_fluid_volume_l", paths.treatment);
    const int tr_chf = treatment.require_column("chf_flag", paths.treatment);
    const int tr_renal = treatment.require_column("renal_failure_flag", paths.treatment);
    std::vector<int> adj_cols;
    for (const auto& name : schema.treatment_adjusters)
      adj_cols.push_back(treatment.require_column(name, paths.treatment));
    const int death_status = schema.mortality_status_index();
    for (const auto& row : treatment.rows) {
      Episode& ep = find_episode(row[tr_id], paths.treatment);
      TreatmentRecord rec;
      rec.received_vasopressor = detail::parse_flag(row[tr_recv], paths.treatment);
      rec.first_vasopressor = row[tr_first];
      rec.map_below_65_within_1h = detail::parse_flag(row[tr_map], paths.treatment);
      rec.time_to_vasopressor_hours = csv::parse_double(row[tr_time], paths.treatment);
      rec.iv_fluid_volume_liters = csv::parse_double(row[tr_vol], paths.treatment);
      rec.chf_flag = detail::parse_flag(row[tr_chf], paths.treatment);
      rec.renal_failure_flag = detail::parse_flag(row[tr_renal], paths.treatment);
      if (rec.iv_fluid_volume_liters < 0.0 || rec.time_to_vasopressor_hours < 0.0) {
        ++report.treatment_rows_dropped;
        continue;
      }
      rec.in_hospital_death = death_status >= 0 && ep.discharge_status == death_status;
      for (std::size_t ai = 0; ai < adj_cols.size(); ++ai) {
        rec.adjusters[schema.treatment_adjusters[ai]] =
            csv::parse_double(row[adj_cols[ai]], paths.treatment);
      }
      ep.treatment = std::move(rec);
    }
  }

  for (auto& ep : episodes) {
    detail::sort_events(ep.events);
    std::sort(ep.sofa.begin(), ep.sofa.end());
    if (ep.events.empty()) ++report.episodes_without_events;
  }
  if (report.episodes_without_events > 0) {
    report.warnings.push_back(std::to_string(report.episodes_without_events) +
                              " episode(s) have no events; their pseudo texts will be empty");
  }
  report.episodes_loaded = episodes.size();
  return {std::move(episodes), std::move(report)};
}

// Patient-disjoint split. Patients are shuffled deterministically, then
// assigned to the training side until the episode count crosses the target;
// the boundary patient goes to whichever side lands closer to the target.
inline CohortSplit split_by_patient(const std::vector<Episode>& episodes,
                                    double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("split_by_patient: ratio must be in (0,1)");
  }
  std::map<std::string, std::vector<std::size_t>> by_patient;
  for (std::size_t i = 0; i < episodes.size(); ++i)
    by_patient[episodes[i].patient_id].push_back(i);
  if (by_patient.size() < 2) {
    throw std::invalid_argument("split_by_patient: need at least 2 distinct patients");
  }

  std::vector<std::string> patients;
  patients.reserve(by_patient.size());
  for (const auto& [pid, _] : by_patient) patients.push_back(pid);
  Rng rng(derive_seed(seed, "patient_split"));
  rng.shuffle(patients);

  const double target = ratio * static_cast<double>(episodes.size());
  std::set<std::string> train_patients;
  double cum = 0.0;
  for (const auto& pid : patients) {
    const double sz = static_cast<double>(by_patient[pid].size());
    if (cum >= target) break;
    // place the boundary patient on the closer side
    if (cum + sz - target > target - cum) break;
    train_patients.insert(pid);
    cum += sz;
  }
  if (train_patients.empty()) train_patients.insert(patients.front());
  if (train_patients.size() == patients.size()) train_patients.erase(patients.back());

  CohortSplit split;
  for (const auto& ep : episodes) {
    if (train_patients.count(ep.patient_id)) {
      split.train.push_back(ep);
    } else {
      split.test.push_back(ep);
    }
  }
  return split;
}

// Treatment-effect inclusion rules; preserves input order.
inline std::vector<Episode> filter_treatment_cohort(const std::vector<Episode>& episodes) {
  std::vector<Episode> out;
  for (const auto& ep : episodes) {
    if (!ep.treatment) continue;
    const TreatmentRecord& t = *ep.treatment;
    if (!t.received_vasopressor) continue;
    if (!t.map_below_65_within_1h) continue;
    if (t.first_vasopressor != "norepinephrine") continue;
    if (t.time_to_vasopressor_hours > 12.0) continue;
    if (t.chf_flag || t.renal_failure_flag) continue;
    out.push_back(ep);
  }
  return out;
}

// In-window events for clustering inputs.
inline std::vector<Measurement> window_events(const Episode& ep, double window_hours) {
  std::vector<Measurement> out;
  for (const auto& m : ep.events) {
    if (m.timestamp_hours <= window_hours) out.push_back(m);
  }
  return out;
}

}  // namespace npcnet
