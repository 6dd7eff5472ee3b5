#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/dataio/image.hpp"

namespace essuda::ensemble {

/// Three per-class weight vectors, one per classifier. No bias.
struct MetaWeights {
  std::array<std::vector<double>, 3> w;

  static MetaWeights constant(int num_classes, double value = 1.0);
  int num_classes() const { return static_cast<int>(w[0].size()); }
  bool finite() const;
  /// Throws unless all three vectors have the same non-zero length and finite entries.
  void validate() const;
  bool operator==(const MetaWeights&) const = default;
};

void to_json(nlohmann::json& j, const MetaWeights& m);
void from_json(const nlohmann::json& j, MetaWeights& m);

/// What the meta-learner sees from each classifier.
enum class MetaFeature { kProbabilities, kLogProbabilities };

using MapTriple = std::array<const data::ProbabilityMap*, 3>;

/// Per pixel and class: z_c = sum_k w_k[c] f(p_k[c]), then softmax over c.
data::ProbabilityMap meta_forward(const data::ProbabilityMap& p1, const data::ProbabilityMap& p2,
                                  const data::ProbabilityMap& p3, const MetaWeights& w,
                                  MetaFeature feature = MetaFeature::kProbabilities);
data::ProbabilityMap meta_forward(const MapTriple& maps, const MetaWeights& w,
                                  MetaFeature feature = MetaFeature::kProbabilities);

struct MetaFitOptions {
  int max_iters = 500;
  double rel_tol = 1e-6;
  /// Use every n-th labeled pixel (in raster order over the whole stream).
  std::size_t pixel_stride = 1;
  double initial_step = 1.0;
  double armijo = 1e-4;
  double backtrack = 0.5;
  MetaFeature feature = MetaFeature::kProbabilities;
};

void to_json(nlohmann::json& j, const MetaFitOptions& o);
void from_json(const nlohmann::json& j, MetaFitOptions& o);

struct MetaFitResult {
  MetaWeights weights;
  std::vector<double> loss_history;  // initial loss, then one entry per accepted step
  int iterations = 0;
  bool converged = false;
  std::size_t pixels = 0;

  double final_loss() const { return loss_history.back(); }
};

/// Full-batch gradient descent with Armijo backtracking on the pixel-mean
/// cross-entropy of meta_forward against `labels`. Pixels labelled 255 are
/// skipped. Throws data::DataError when no pixel is labelled.
MetaFitResult meta_fit(const std::vector<MapTriple>& predictions,
                       const std::vector<const data::SegmentationMap*>& labels,
                       const MetaFitOptions& options, const MetaWeights& init);
MetaFitResult meta_fit(const std::vector<MapTriple>& predictions,
                       const std::vector<const data::SegmentationMap*>& labels,
                       const MetaFitOptions& options = {});

/// Same optimizer, warm-started from `previous`, fitted on target predictions
/// against pseudo-labels.
MetaFitResult meta_refit(const std::vector<MapTriple>& predictions,
                         const std::vector<const data::SegmentationMap*>& pseudo_labels,
                         const MetaWeights& previous, const MetaFitOptions& options = {});

/// Mean meta cross-entropy over labelled pixels; no fitting.
double meta_loss(const std::vector<MapTriple>& predictions,
                 const std::vector<const data::SegmentationMap*>& labels, const MetaWeights& w,
                 MetaFeature feature = MetaFeature::kProbabilities);

}  // namespace essuda::ensemble
