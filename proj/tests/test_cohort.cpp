#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "npcnet/cohort.hpp"
#include "npcnet/synthetic.hpp"

using namespace npcnet;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("npcnet_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name, const std::string& content) const {
    const std::string p = (path / name).string();
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  }
};

CohortSchema tiny_schema() {
  CohortSchema s;
  s.static_variables = {{"sex", {"female", "male"}}};
  s.variables = {{"HR", 20.0, 250.0}, {"SBP", 30.0, 300.0}};
  s.discharge_statuses = {"alive", "dead"};
  s.mortality_status = "dead";
  s.treatment_adjusters = {"age"};
  return s;
}

CohortPaths valid_paths(const TempDir& dir) {
  CohortPaths p;
  p.statics = dir.file("statics.csv",
                       "episode_id,patient_id,sex\n"
                       "E1,P1,female\n"
                       "E2,P1,male\n"
                       "E3,P2,male\n");
  p.events = dir.file("events.csv",
                      "episode_id,variable,timestamp_hours,value\n"
                      "E1,HR,2.0,80\n"
                      "E1,SBP,1.0,120\n"
                      "E1,HR,1.0,75\n"
                      "E2,HR,0.5,95\n"
                      "E2,XX,1.0,5\n"      // unknown variable: dropped
                      "E2,HR,-1.0,90\n"    // negative timestamp: dropped
                      "E2,SBP,1.0,400\n"   // above range: dropped
                      "E3,SBP,3.0,100\n");
  p.outcomes = dir.file("outcomes.csv",
                        "episode_id,discharge_status,survival_days,death_event\n"
                        "E1,alive,365,0\n"
                        "E2,dead,10,1\n"
                        "E3,alive,200,0\n");
  p.sofa = dir.file("sofa.csv",
                    "episode_id,hour,score\n"
                    "E1,6,4\n"
                    "E1,0,2\n"
                    "E1,6,9\n"   // duplicate hour: first kept
                    "E2,25,3\n"  // hour out of range: dropped
                    "E3,6,11\n");
  return p;
}

}  // namespace

TEST_CASE("load_cohort happy path with soft drops") {
  TempDir dir;
  const CohortSchema schema = tiny_schema();
  auto [episodes, report] = load_cohort(valid_paths(dir), schema);

  REQUIRE(episodes.size() == 3);
  REQUIRE(report.episodes_loaded == 3);
  REQUIRE(report.event_rows_read == 8);
  REQUIRE(report.event_rows_dropped_unknown_variable == 1);
  REQUIRE(report.event_rows_dropped_bad_timestamp == 1);
  REQUIRE(report.event_rows_dropped_range == 1);
  REQUIRE(report.sofa_rows_dropped == 1);
  REQUIRE(report.sofa_rows_duplicate == 1);

  const Episode& e1 = episodes[0];
  REQUIRE(e1.episode_id == "E1");
  REQUIRE(e1.statics == std::vector<int>{0});
  // canonical order: timestamp, then variable name
  REQUIRE(e1.events.size() == 3);
  REQUIRE(e1.events[0].variable == "HR");
  REQUIRE(e1.events[0].timestamp_hours == 1.0);
  REQUIRE(e1.events[1].variable == "SBP");
  REQUIRE(e1.events[2].timestamp_hours == 2.0);
  REQUIRE(e1.sofa_at(6) == 4);  // first wins over duplicate
  REQUIRE(!e1.sofa_at(3).has_value());
  REQUIRE(e1.survival.time_days == 365.0);
  REQUIRE(!e1.survival.event);

  REQUIRE(episodes[1].discharge_status == 1);
  REQUIRE(episodes[1].survival.event);
}

TEST_CASE("load_cohort strictness") {
  const CohortSchema schema = tiny_schema();

  SECTION("unexpected statics column") {
    TempDir dir;
    CohortPaths p = valid_paths(dir);
    p.statics = dir.file("statics2.csv",
                         "episode_id,patient_id,sex,extra\nE1,P1,male,x\n");
    REQUIRE_THROWS_AS(load_cohort(p, schema), DataError);
  }
  SECTION("duplicate episode id") {
    TempDir dir;
    CohortPaths p = valid_paths(dir);
    p.statics = dir.file("statics2.csv",
                         "episode_id,patient_id,sex\nE1,P1,male\nE1,P2,male\n");
    REQUIRE_THROWS_AS(load_cohort(p, schema), DataError);
  }
  SECTION("unknown static category") {
    TempDir dir;
    CohortPaths p = valid_paths(dir);
    p.statics =
        dir.file("statics2.csv", "episode_id,patient_id,sex\nE1,P1,other\n");
    REQUIRE_THROWS_AS(load_cohort(p, schema), DataError);
  }
  SECTION("event for unknown episode") {
    TempDir dir;
    CohortPaths p = valid_paths(dir);
    p.events = dir.file("events2.csv",
                        "episode_id,variable,timestamp_hours,value\nE9,HR,1,80\n");
    REQUIRE_THROWS_AS(load_cohort(p, schema), DataError);
  }
  SECTION("missing outcome row") {
    TempDir dir;
    CohortPaths p = valid_paths(dir);
    p.outcomes = dir.file("outcomes2.csv",
                          "episode_id,discharge_status,survival_days,death_event\n"
                          "E1,alive,365,0\nE2,dead,10,1\n");
    REQUIRE_THROWS_AS(load_cohort(p, schema), DataError);
  }
  SECTION("duplicate outcome row") {
    TempDir dir;
    CohortPaths p = valid_paths(dir);
    p.outcomes = dir.file("outcomes2.csv",
                          "episode_id,discharge_status,survival_days,death_event\n"
                          "E1,alive,365,0\nE1,alive,365,0\nE2,dead,10,1\nE3,alive,1,0\n");
    REQUIRE_THROWS_AS(load_cohort(p, schema), DataError);
  }
  SECTION("unknown discharge status") {
    TempDir dir;
    CohortPaths p = valid_paths(dir);
    p.outcomes = dir.file("outcomes2.csv",
                          "episode_id,discharge_status,survival_days,death_event\n"
                          "E1,gone,365,0\nE2,dead,10,1\nE3,alive,1,0\n");
    REQUIRE_THROWS_AS(load_cohort(p, schema), DataError);
  }
  SECTION("negative survival days") {
    TempDir dir;
    CohortPaths p = valid_paths(dir);
    p.outcomes = dir.file("outcomes2.csv",
                          "episode_id,discharge_status,survival_days,death_event\n"
                          "E1,alive,-1,0\nE2,dead,10,1\nE3,alive,1,0\n");
    REQUIRE_THROWS_AS(load_cohort(p, schema), DataError);
  }
}

TEST_CASE("load_cohort reads treatment records") {
  TempDir dir;
  CohortSchema schema = tiny_schema();
  CohortPaths p = valid_paths(dir);
  p.treatment = dir.file(
      "treatment.csv",
      "episode_id,received_vasopressor,first_vasopressor,map_below_65_within_1h,"
      "time_to_vasopressor_hours,iv_fluid_volume_l,chf_flag,renal_failure_flag,age\n"
      "E1,1,norepinephrine,1,3.5,2.0,0,0,64\n"
      "E2,1,dopamine,1,2.0,1.0,0,0,71\n"
      "E3,1,norepinephrine,1,-2.0,1.0,0,0,55\n");  // negative time: dropped

  auto [episodes, report] = load_cohort(p, schema);
  REQUIRE(report.treatment_rows_dropped == 1);
  REQUIRE(episodes[0].treatment.has_value());
  REQUIRE(episodes[0].treatment->adjusters.at("age") == 64.0);
  REQUIRE(!episodes[0].treatment->in_hospital_death);
  REQUIRE(episodes[1].treatment->in_hospital_death);  // E2 discharged dead
  REQUIRE(!episodes[2].treatment.has_value());
}

TEST_CASE("episodes with no events produce a warning") {
  TempDir dir;
  CohortPaths p = valid_paths(dir);
  p.events = dir.file("events2.csv",
                      "episode_id,variable,timestamp_hours,value\nE1,HR,1,80\n");
  auto [episodes, report] = load_cohort(p, tiny_schema());
  REQUIRE(report.episodes_without_events == 2);
  REQUIRE(report.warnings.size() == 1);
}

TEST_CASE("split_by_patient is patient-disjoint and near the requested ratio") {
  SyntheticSpec spec = make_default_synthetic_spec();
  spec.n_patients = 120;
  spec.second_episode_prob = 0.3;
  std::vector<Episode> episodes = generate_synthetic_cohort(spec, 5);

  for (const double ratio : {0.5, 0.8}) {
    const CohortSplit split = split_by_patient(episodes, ratio, 17);
    REQUIRE(split.train.size() + split.test.size() == episodes.size());
    REQUIRE(!split.train.empty());
    REQUIRE(!split.test.empty());

    std::set<std::string> train_patients, test_patients;
    for (const auto& ep : split.train) train_patients.insert(ep.patient_id);
    for (const auto& ep : split.test) test_patients.insert(ep.patient_id);
    for (const auto& pid : train_patients) REQUIRE(!test_patients.count(pid));

    const double got =
        static_cast<double>(split.train.size()) / static_cast<double>(episodes.size());
    REQUIRE(std::abs(got - ratio) <= 0.02);
  }
}

TEST_CASE("split_by_patient determinism and input checks") {
  SyntheticSpec spec = make_default_synthetic_spec();
  spec.n_patients = 30;
  std::vector<Episode> episodes = generate_synthetic_cohort(spec, 2);

  const CohortSplit a = split_by_patient(episodes, 0.8, 9);
  const CohortSplit b = split_by_patient(episodes, 0.8, 9);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    REQUIRE(a.train[i].episode_id == b.train[i].episode_id);
  }

  REQUIRE_THROWS_AS(split_by_patient(episodes, 0.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(split_by_patient(episodes, 1.0, 1), std::invalid_argument);

  std::vector<Episode> one_patient(2);
  one_patient[0].patient_id = one_patient[1].patient_id = "P1";
  REQUIRE_THROWS_AS(split_by_patient(one_patient, 0.5, 1), std::invalid_argument);
}

TEST_CASE("treatment cohort filter") {
  auto treated = [](bool recv, const std::string& drug, bool map_low, double hours,
                    bool chf, bool renal) {
    Episode ep;
    TreatmentRecord t;
    t.received_vasopressor = recv;
    t.first_vasopressor = drug;
    t.map_below_65_within_1h = map_low;
    t.time_to_vasopressor_hours = hours;
    t.chf_flag = chf;
    t.renal_failure_flag = renal;
    ep.treatment = t;
    return ep;
  };

  std::vector<Episode> episodes;
  episodes.push_back(treated(true, "norepinephrine", true, 3.0, false, false));  // in
  episodes.push_back(treated(false, "norepinephrine", true, 3.0, false, false));
  episodes.push_back(treated(true, "dopamine", true, 3.0, false, false));
  episodes.push_back(treated(true, "norepinephrine", false, 3.0, false, false));
  episodes.push_back(treated(true, "norepinephrine", true, 12.5, false, false));
  episodes.push_back(treated(true, "norepinephrine", true, 12.0, false, false));  // in
  episodes.push_back(treated(true, "norepinephrine", true, 3.0, true, false));
  episodes.push_back(treated(true, "norepinephrine", true, 3.0, false, true));
  episodes.push_back(Episode{});  // no record at all

  const std::vector<Episode> kept = filter_treatment_cohort(episodes);
  REQUIRE(kept.size() == 2);
  REQUIRE(kept[0].treatment->time_to_vasopressor_hours == 3.0);
  REQUIRE(kept[1].treatment->time_to_vasopressor_hours == 12.0);
}

TEST_CASE("window_events keeps only the observation window") {
  Episode ep;
  ep.events = {{"HR", 0.0, 70}, {"HR", 6.0, 71}, {"HR", 6.1, 72}};
  const auto w = window_events(ep, 6.0);
  REQUIRE(w.size() == 2);
  REQUIRE(w[1].value == 71.0);
}
