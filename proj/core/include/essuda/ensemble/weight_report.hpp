#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/ensemble/meta_learner.hpp"

namespace essuda::ensemble {

struct WeightRow {
  int cls = 0;
  std::string name;
  double w1 = 0.0, w2 = 0.0, w3 = 0.0;

  /// 1, 2 or 3: the classifier with the largest weight for this class (first on ties).
  int dominant() const;
  bool operator==(const WeightRow&) const = default;
};

/// Class x {w1, w2, w3}.
struct WeightTable {
  std::vector<WeightRow> rows;

  std::string to_csv() const;
  nlohmann::json to_json() const;
  static WeightTable from_csv(const std::string& text);
  static WeightTable from_json(const nlohmann::json& j);
  MetaWeights weights() const;
  bool operator==(const WeightTable&) const = default;
};

/// `class_names` may be empty; otherwise one name per class.
WeightTable weight_report(const MetaWeights& w, const std::vector<std::string>& class_names = {});

}  // namespace essuda::ensemble
