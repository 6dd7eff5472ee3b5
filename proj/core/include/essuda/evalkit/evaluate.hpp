#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/dataio/dataset.hpp"
#include "essuda/ensemble/meta_learner.hpp"
#include "essuda/evalkit/metrics.hpp"
#include "essuda/nets/networks.hpp"

namespace essuda::evalkit {

using HeadMaps = std::vector<std::vector<data::ProbabilityMap>>;  // [head][image]

/// Probabilities of every head on the same images (one encoder pass per batch).
HeadMaps predict_all_heads(const nets::SegmentationNetwork<float>& net,
                           const std::vector<const data::Image*>& images, int batch_size = 16);

/// Probabilities of one head (0-based).
std::vector<data::ProbabilityMap> predict_head(const nets::SegmentationNetwork<float>& net, int head,
                                               const std::vector<const data::Image*>& images,
                                               int batch_size = 16);

/// C_m over per-head predictions of the same images.
std::vector<data::ProbabilityMap> meta_predict(const HeadMaps& heads, const ensemble::MetaWeights& w,
                                               ensemble::MetaFeature feature = ensemble::MetaFeature::kProbabilities);

struct HeadResult {
  std::string head;  // "C1".."C3", "Cm"
  ConfusionMatrix confusion;
  IouScores scores;
};

struct EvalReport {
  std::string split;
  std::string config_fingerprint;
  std::vector<HeadResult> heads;

  const HeadResult& head(const std::string& name) const;
  bool has_head(const std::string& name) const;
  /// Best mIoU among the C_k heads (excluding C_m).
  double best_classifier_miou() const;
  nlohmann::json to_json() const;
};

/// Scores per-head maps (and optional meta maps) against labels.
EvalReport evaluate_predictions(const HeadMaps& heads, const std::vector<data::ProbabilityMap>* meta,
                                const std::vector<const data::SegmentationMap*>& labels, int num_classes);

/// Runs every head, and C_m when `meta` is given, over a labelled split.
EvalReport evaluate(const nets::SegmentationNetwork<float>& net, const ensemble::MetaWeights* meta,
                    const data::DatasetSplit& split, int batch_size = 16,
                    ensemble::MetaFeature feature = ensemble::MetaFeature::kProbabilities);

}  // namespace essuda::evalkit
