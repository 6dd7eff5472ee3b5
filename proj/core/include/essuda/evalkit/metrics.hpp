#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/dataio/image.hpp"

namespace essuda::evalkit {

/// K x K counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes);

  /// Adds every pixel whose ground truth is not 255. Predictions must be
  /// total (no 255) and in range.
  void accumulate(const data::SegmentationMap& pred, const data::SegmentationMap& gt);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return k_; }
  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * k_ + pred]; }
  std::uint64_t& at(int gt, int pred) { return counts_[static_cast<std::size_t>(gt) * k_ + pred]; }
  std::uint64_t total() const;

  nlohmann::json to_json() const;
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int k_ = 0;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix& accumulate(ConfusionMatrix& cm, const data::SegmentationMap& pred,
                            const data::SegmentationMap& gt);

struct IouScores {
  std::vector<double> per_class;  // NaN where the class is absent
  std::vector<bool> present;      // TP + FP + FN > 0
  double miou = 0.0;              // mean over present classes

  std::vector<int> absent_classes() const;
};

/// Throws std::domain_error when no class is present.
IouScores iou_scores(const ConfusionMatrix& cm);

struct Dominance {
  std::vector<double> counts;      // per head; tied classes contribute 1/m to each of m winners
  std::vector<int> tied_classes;
};

/// `per_head[h][c]` is head h's IoU on class c. Classes with a NaN IoU are skipped.
Dominance dominance_table(const std::vector<std::vector<double>>& per_head);

}  // namespace essuda::evalkit
