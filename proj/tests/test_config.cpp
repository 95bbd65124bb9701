#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "npcnet/config.hpp"

using namespace npcnet;
using Catch::Matchers::ContainsSubstring;
using nlohmann::json;

namespace {

json minimal() {
  return json{{"data",
               {{"statics", "s.csv"},
                {"events", "e.csv"},
                {"outcomes", "o.csv"},
                {"sofa", "q.csv"}}}};
}

}  // namespace

TEST_CASE("a minimal config fills every default") {
  const RunConfig cfg = run_config_from_json(minimal());
  REQUIRE(cfg.data.statics == "s.csv");
  REQUIRE(cfg.data.treatment.empty());
  REQUIRE(cfg.split_ratio == 0.8);
  REQUIRE(cfg.alpha == 0.05);
  REQUIRE(cfg.km_horizon_days == 365.0);
  REQUIRE(cfg.output_dir == "out");
  REQUIRE(cfg.model_path.empty());
  REQUIRE(!cfg.has_synthetic);
  REQUIRE(cfg.schema.variables.size() == make_default_schema().variables.size());
  REQUIRE(cfg.train.k == TrainConfig{}.k);
  REQUIRE(cfg.effective_seeds() == std::vector<std::uint64_t>{cfg.train.seed});
  // adjusters fall back to the schema list
  REQUIRE(cfg.model_adjusters == cfg.schema.treatment_adjusters);
}

TEST_CASE("explicit settings override the defaults") {
  json j = minimal();
  j["split_ratio"] = 0.7;
  j["alpha"] = 0.01;
  j["km_horizon_days"] = 90.0;
  j["output_dir"] = "runs/a";
  j["model"] = "m.json";
  j["seeds"] = {3, 4, 5};
  j["model_adjusters"] = {"age"};
  j["train"] = {{"k", 5}, {"epochs", 2}, {"activation", "relu"},
                {"reconstruction", "per_token"}, {"encoder_hidden", {32, 16}}};

  const RunConfig cfg = run_config_from_json(j);
  REQUIRE(cfg.split_ratio == 0.7);
  REQUIRE(cfg.alpha == 0.01);
  REQUIRE(cfg.km_horizon_days == 90.0);
  REQUIRE(cfg.output_dir == "runs/a");
  REQUIRE(cfg.model_path == "m.json");
  REQUIRE(cfg.effective_seeds() == std::vector<std::uint64_t>{3, 4, 5});
  REQUIRE(cfg.model_adjusters == std::vector<std::string>{"age"});
  REQUIRE(cfg.train.k == 5);
  REQUIRE(cfg.train.activation == Activation::Relu);
  REQUIRE(cfg.train.reconstruction == ReconSpace::PerToken);
  REQUIRE(cfg.train.encoder_hidden == std::vector<int>{32, 16});
}

TEST_CASE("unknown keys are rejected with their context") {
  auto expect_reject = [](json j, const std::string& context) {
    REQUIRE_THROWS_WITH(run_config_from_json(j), ContainsSubstring(context));
  };

  json j = minimal();
  j["typo"] = 1;
  expect_reject(j, "config: unknown key 'typo'");

  j = minimal();
  j["data"]["extra"] = "x.csv";
  expect_reject(j, "data: unknown key 'extra'");

  j = minimal();
  j["train"] = {{"learning_rte", 0.01}};
  expect_reject(j, "train: unknown key 'learning_rte'");

  j = minimal();
  j["schema"] = {{"static_variables", json::array()},
                 {"variables", json::array()},
                 {"discharge_statuses", {"alive", "dead"}},
                 {"bogus", 1}};
  expect_reject(j, "schema: unknown key 'bogus'");

  j = minimal();
  j["synthetic"] = {{"clusters", json::array({{{"means", {1.0}}, {"label", "a"}}})}};
  expect_reject(j, "synthetic.clusters: unknown key 'label'");
}

TEST_CASE("schema sections parse and validate") {
  json j = minimal();
  j["schema"] = {{"static_variables", json::array({{{"name", "sex"},
                                                    {"categories", {"f", "m"}}}})},
                 {"variables", json::array({{{"name", "HR"}, {"min", 20.0}, {"max", 250.0}}})},
                 {"discharge_statuses", {"alive", "dead"}},
                 {"mortality_status", "dead"},
                 {"treatment_adjusters", {"age", "sofa6"}}};
  const RunConfig cfg = run_config_from_json(j);
  REQUIRE(cfg.schema.variables.size() == 1);
  REQUIRE(cfg.schema.variables[0].name == "HR");
  REQUIRE(cfg.schema.static_variables[0].categories ==
          std::vector<std::string>{"f", "m"});
  REQUIRE(cfg.model_adjusters == std::vector<std::string>{"age", "sofa6"});

  j["schema"]["mortality_status"] = "expired";
  REQUIRE_THROWS_WITH(run_config_from_json(j),
                      ContainsSubstring("not a discharge status"));
}

TEST_CASE("enum fields accept only their documented names") {
  auto with_train = [](json train) {
    json j = minimal();
    j["train"] = std::move(train);
    return j;
  };
  REQUIRE_THROWS_AS(run_config_from_json(with_train({{"activation", "gelu"}})),
                    ConfigError);
  REQUIRE_THROWS_AS(run_config_from_json(with_train({{"reconstruction", "tokens"}})),
                    ConfigError);
  REQUIRE_THROWS_AS(run_config_from_json(with_train({{"assignment_refresh", "never"}})),
                    ConfigError);
  REQUIRE_THROWS_AS(run_config_from_json(with_train({{"centroid_update", "adam"}})),
                    ConfigError);
  REQUIRE_NOTHROW(run_config_from_json(with_train({{"centroid_update", "batch_mean"}})));
}

TEST_CASE("range validation wraps training errors as config errors") {
  json j = minimal();
  j["split_ratio"] = 1.0;
  REQUIRE_THROWS_AS(run_config_from_json(j), ConfigError);

  j = minimal();
  j["alpha"] = 0.0;
  REQUIRE_THROWS_AS(run_config_from_json(j), ConfigError);

  j = minimal();
  j["km_horizon_days"] = -1.0;
  REQUIRE_THROWS_AS(run_config_from_json(j), ConfigError);

  j = minimal();
  j["train"] = {{"k", 0}};
  REQUIRE_THROWS_WITH(run_config_from_json(j), ContainsSubstring("train:"));
}

TEST_CASE("synthetic sections parse clusters and treatment plants") {
  json j = minimal();
  j["synthetic"] = {
      {"n_patients", 50},
      {"second_episode_prob", 0.0},
      {"clusters", json::array({
                       {{"means", {80.0, 120.0}}, {"mortality", 0.1}},
                       {{"means", {110.0, 90.0}},
                        {"mortality", 0.6},
                        {"sofa_intercept", 9.0},
                        {"sofa_slope", 0.2},
                        {"survival_mean_days", 12.0}},
                   })},
      {"treatment",
       {{"enabled", true},
        {"eligible_fraction", 0.5},
        {"log_or_per_liter", 0.3},
        {"adjusters", json::array({{{"name", "age"}, {"mean", 65.0}, {"sd", 10.0}}})}}}};
  const RunConfig cfg = run_config_from_json(j);
  REQUIRE(cfg.has_synthetic);
  REQUIRE(cfg.synthetic.n_patients == 50);
  REQUIRE(cfg.synthetic.clusters.size() == 2);
  REQUIRE(cfg.synthetic.clusters[1].mortality == 0.6);
  REQUIRE(cfg.synthetic.clusters[1].sofa_intercept == 9.0);
  REQUIRE(cfg.synthetic.treatment.enabled);
  REQUIRE(cfg.synthetic.treatment.adjusters.size() == 1);
  REQUIRE(cfg.synthetic.treatment.adjusters[0].name == "age");
  // the synthetic generator inherits the configured schema
  REQUIRE(cfg.synthetic.schema.variables.size() == cfg.schema.variables.size());
}

TEST_CASE("resolved configs round-trip through their json form") {
  json j = minimal();
  j["seeds"] = {7, 8};
  j["train"] = {{"k", 3}, {"activation", "relu"}};
  j["alpha"] = 0.01;
  const RunConfig cfg = run_config_from_json(j);
  const json first = run_config_to_json(cfg);
  const RunConfig reparsed = run_config_from_json(first);
  REQUIRE(run_config_to_json(reparsed).dump() == first.dump());
}

TEST_CASE("config files load with argument errors mapped to ConfigError") {
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() / ("npcnet-cfg-" + std::to_string(::getpid()));
  fs::create_directories(dir);

  const fs::path good = dir / "good.json";
  std::ofstream(good) << minimal().dump();
  REQUIRE(load_run_config(good.string()).data.events == "e.csv");

  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << "{ not json";
  REQUIRE_THROWS_AS(load_run_config(bad.string()), ConfigError);

  REQUIRE_THROWS_AS(load_run_config((dir / "absent.json").string()), ConfigError);

  // wrong value types surface as config errors too, not raw json exceptions
  const fs::path wrong = dir / "wrong.json";
  json j = minimal();
  j["seeds"] = "three";
  std::ofstream(wrong) << j.dump();
  REQUIRE_THROWS_AS(load_run_config(wrong.string()), ConfigError);

  fs::remove_all(dir);
}
