#include "essuda/evalkit/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace essuda::evalkit {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1 || num_classes > 255) throw std::invalid_argument("confusion matrix needs 1..255 classes");
}

void ConfusionMatrix::accumulate(const data::SegmentationMap& pred, const data::SegmentationMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw std::invalid_argument("accumulate: prediction " + std::to_string(pred.height) + "x" +
                                std::to_string(pred.width) + " vs ground truth " +
                                std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const auto p = pred.labels[i];
    if (p == data::kIgnoreLabel) throw std::invalid_argument("accumulate: prediction contains the ignore label");
    if (p >= k_) throw std::invalid_argument("accumulate: predicted class " + std::to_string(p) + " out of range");
    const auto g = gt.labels[i];
    if (g == data::kIgnoreLabel) continue;
    if (g >= k_) throw std::invalid_argument("accumulate: ground-truth class " + std::to_string(g) + " out of range");
    ++counts_[static_cast<std::size_t>(g) * k_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw std::invalid_argument("merge: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

nlohmann::json ConfusionMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int g = 0; g < k_; ++g) {
    std::vector<std::uint64_t> row(counts_.begin() + static_cast<std::ptrdiff_t>(g) * k_,
                                   counts_.begin() + static_cast<std::ptrdiff_t>(g + 1) * k_);
    rows.push_back(row);
  }
  return rows;
}

ConfusionMatrix& accumulate(ConfusionMatrix& cm, const data::SegmentationMap& pred,
                            const data::SegmentationMap& gt) {
  cm.accumulate(pred, gt);
  return cm;
}

std::vector<int> IouScores::absent_classes() const {
  std::vector<int> out;
  for (std::size_t c = 0; c < present.size(); ++c)
    if (!present[c]) out.push_back(static_cast<int>(c));
  return out;
}

IouScores iou_scores(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  IouScores s;
  s.per_class.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  s.present.assign(static_cast<std::size_t>(k), false);
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < k; ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    double fp = 0.0, fn = 0.0;
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += static_cast<double>(cm.at(o, c));
      fn += static_cast<double>(cm.at(c, o));
    }
    const double denom = tp + fp + fn;
    if (denom == 0.0) continue;
    s.present[static_cast<std::size_t>(c)] = true;
    s.per_class[static_cast<std::size_t>(c)] = tp / denom;
    sum += tp / denom;
    ++n;
  }
  if (n == 0) throw std::domain_error("iou_scores: no class occurs in predictions or ground truth");
  s.miou = sum / n;
  return s;
}

Dominance dominance_table(const std::vector<std::vector<double>>& per_head) {
  if (per_head.size() < 2) throw std::invalid_argument("dominance_table needs at least two heads");
  const std::size_t k = per_head.front().size();
  for (const auto& h : per_head)
    if (h.size() != k) throw std::invalid_argument("dominance_table: heads disagree on class count");
  Dominance d;
  d.counts.assign(per_head.size(), 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    double best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (const auto& h : per_head) {
      if (std::isnan(h[c])) continue;
      any = true;
      best = std::max(best, h[c]);
    }
    if (!any) continue;
    std::vector<std::size_t> winners;
    for (std::size_t i = 0; i < per_head.size(); ++i)
      if (!std::isnan(per_head[i][c]) && per_head[i][c] == best) winners.push_back(i);
    for (auto w : winners) d.counts[w] += 1.0 / static_cast<double>(winners.size());
    if (winners.size() > 1) d.tied_classes.push_back(static_cast<int>(c));
  }
  return d;
}

}  // namespace essuda::evalkit
