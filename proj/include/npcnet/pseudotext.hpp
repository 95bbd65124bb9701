#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "npcnet/cohort.hpp"
#include "npcnet/stats.hpp"

namespace npcnet {

// Equal-frequency cut points fitted on training data. A value's bin is
// 1 + the number of cut points <= value, so boundary values go upward.
struct BinThresholds {
  int bins = 10;
  double window_hours = 6.0;
  std::vector<std::string> variables;
  std::vector<std::vector<double>> cuts;  // ascending, deduplicated, size <= bins-1

  int index(const std::string& var) const {
    for (std::size_t i = 0; i < variables.size(); ++i)
      if (variables[i] == var) return static_cast<int>(i);
    return -1;
  }

  int bin_count(std::size_t var_index) const {
    return static_cast<int>(cuts[var_index].size()) + 1;
  }
};

inline BinThresholds fit_bin_thresholds(const std::vector<Episode>& train,
                                        const CohortSchema& schema, int bins,
                                        double window_hours) {
  if (bins < 2) throw std::invalid_argument("bin count must be at least 2");
  if (window_hours <= 0.0) throw std::invalid_argument("window must be positive");

  BinThresholds bt;
  bt.bins = bins;
  bt.window_hours = window_hours;
  for (const auto& v : schema.variables) bt.variables.push_back(v.name);
  bt.cuts.resize(schema.variables.size());

  std::vector<std::vector<double>> pooled(schema.variables.size());
  for (const auto& ep : train) {
    for (const auto& m : ep.events) {
      if (m.timestamp_hours > window_hours) continue;
      const int vi = schema.variable_index(m.variable);
      if (vi >= 0) pooled[vi].push_back(m.value);
    }
  }

  for (std::size_t vi = 0; vi < pooled.size(); ++vi) {
    auto& values = pooled[vi];
    if (values.empty()) continue;  // unseen variable collapses to one bin
    std::sort(values.begin(), values.end());
    if (values.front() == values.back()) continue;  // constant variable, one bin
    std::vector<double> cuts;
    for (int j = 1; j < bins; ++j) {
      cuts.push_back(quantile(values, static_cast<double>(j) / bins));
    }
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    bt.cuts[vi] = std::move(cuts);
  }
  return bt;
}

inline int bin_value(const BinThresholds& bt, const std::string& var, double value) {
  const int vi = bt.index(var);
  if (vi < 0) throw std::invalid_argument("unknown variable '" + var + "'");
  const auto& cuts = bt.cuts[vi];
  return 1 + static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), value) -
                              cuts.begin());
}

inline std::string token_string(const std::string& var, int bin) {
  return var + "-" + std::to_string(bin);
}

// In-window events in canonical order become the episode's token sequence.
inline std::vector<std::string> episode_to_pseudotext(const Episode& ep,
                                                      const BinThresholds& bt) {
  std::vector<std::string> tokens;
  for (const auto& m : ep.events) {
    if (m.timestamp_hours > bt.window_hours) continue;
    tokens.push_back(token_string(m.variable, bin_value(bt, m.variable, m.value)));
  }
  return tokens;
}

struct Vocabulary {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> ids;

  std::size_t size() const { return tokens.size(); }

  int id(const std::string& token) const {
    auto it = ids.find(token);
    if (it == ids.end()) throw std::out_of_range("token '" + token + "' not in vocabulary");
    return it->second;
  }
};

// Every variable/bin combination, in schema order, whether observed or not.
inline Vocabulary build_vocabulary(const BinThresholds& bt) {
  Vocabulary vocab;
  for (std::size_t vi = 0; vi < bt.variables.size(); ++vi) {
    for (int b = 1; b <= bt.bin_count(vi); ++b) {
      const std::string tok = token_string(bt.variables[vi], b);
      vocab.ids[tok] = static_cast<int>(vocab.tokens.size());
      vocab.tokens.push_back(tok);
    }
  }
  return vocab;
}

inline std::vector<int> tokenize(const Vocabulary& vocab,
                                 const std::vector<std::string>& words) {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(vocab.id(w));
  return out;
}

inline constexpr const char* kBinThresholdsFormat = "npcnet.bin_thresholds.v1";

inline nlohmann::json bin_thresholds_to_json(const BinThresholds& bt) {
  nlohmann::json j;
  j["format"] = kBinThresholdsFormat;
  j["bins"] = bt.bins;
  j["window_hours"] = bt.window_hours;
  j["variables"] = nlohmann::json::array();
  for (std::size_t vi = 0; vi < bt.variables.size(); ++vi) {
    j["variables"].push_back({{"name", bt.variables[vi]}, {"cuts", bt.cuts[vi]}});
  }
  return j;
}

inline BinThresholds bin_thresholds_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j.at("format").get<std::string>() != kBinThresholdsFormat) {
    throw DataError("bin thresholds: unrecognized format tag");
  }
  BinThresholds bt;
  bt.bins = j.at("bins").get<int>();
  bt.window_hours = j.at("window_hours").get<double>();
  for (const auto& v : j.at("variables")) {
    bt.variables.push_back(v.at("name").get<std::string>());
    auto cuts = v.at("cuts").get<std::vector<double>>();
    if (!std::is_sorted(cuts.begin(), cuts.end())) {
      throw DataError("bin thresholds: cut points must be ascending");
    }
    bt.cuts.push_back(std::move(cuts));
  }
  return bt;
}

}  // namespace npcnet
