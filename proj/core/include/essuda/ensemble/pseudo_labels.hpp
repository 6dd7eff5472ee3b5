#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/dataio/image.hpp"

namespace essuda::ensemble {

enum class PseudoLabelMode { kGlobal, kPerClassQuantile };

struct PseudoLabelConfig {
  /// Global confidence cut; 0 keeps every pixel.
  double threshold = 0.9;
  PseudoLabelMode mode = PseudoLabelMode::kGlobal;
  /// Per-class-quantile mode: fraction of each class's argmax pixels kept,
  /// most confident first.
  double quantile = 0.5;

  void validate() const;
  bool operator==(const PseudoLabelConfig&) const = default;
};

void to_json(nlohmann::json& j, const PseudoLabelConfig& c);
void from_json(const nlohmann::json& j, PseudoLabelConfig& c);

/// Argmax labels where confident, 255 elsewhere.
std::vector<data::SegmentationMap> generate_pseudo_labels(
    const std::vector<data::ProbabilityMap>& meta_probs, const PseudoLabelConfig& config);

/// Fraction of pixels carrying a label (not 255).
double label_coverage(const std::vector<data::SegmentationMap>& labels);

/// Labelled-pixel count per class.
std::vector<std::size_t> class_counts(const std::vector<data::SegmentationMap>& labels, int num_classes);

}  // namespace essuda::ensemble
