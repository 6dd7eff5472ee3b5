#include "essuda/ensemble/pseudo_labels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace essuda::ensemble {

void PseudoLabelConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("pseudo-label threshold must lie in [0, 1], got " +
                                std::to_string(threshold));
  }
  if (!(quantile > 0.0 && quantile <= 1.0)) {
    throw std::invalid_argument("pseudo-label quantile must lie in (0, 1], got " +
                                std::to_string(quantile));
  }
}

void to_json(nlohmann::json& j, const PseudoLabelConfig& c) {
  j = nlohmann::json{{"threshold", c.threshold},
                     {"mode", c.mode == PseudoLabelMode::kGlobal ? "global" : "per_class_quantile"},
                     {"quantile", c.quantile}};
}

void from_json(const nlohmann::json& j, PseudoLabelConfig& c) {
  PseudoLabelConfig d;
  c.threshold = j.value("threshold", d.threshold);
  c.quantile = j.value("quantile", d.quantile);
  const auto mode = j.value("mode", std::string("global"));
  if (mode == "global") {
    c.mode = PseudoLabelMode::kGlobal;
  } else if (mode == "per_class_quantile") {
    c.mode = PseudoLabelMode::kPerClassQuantile;
  } else {
    throw std::invalid_argument("unknown pseudo-label mode '" + mode + "'");
  }
  c.validate();
}

namespace {

struct Best {
  std::uint8_t cls;
  float conf;
};

Best best_class(std::span<const float> p) {
  std::size_t arg = 0;
  for (std::size_t c = 1; c < p.size(); ++c)
    if (p[c] > p[arg]) arg = c;
  return {static_cast<std::uint8_t>(arg), p[arg]};
}

}  // namespace

std::vector<data::SegmentationMap> generate_pseudo_labels(
    const std::vector<data::ProbabilityMap>& meta_probs, const PseudoLabelConfig& config) {
  config.validate();
  std::vector<data::SegmentationMap> out;
  out.reserve(meta_probs.size());
  if (config.mode == PseudoLabelMode::kGlobal) {
    for (const auto& m : meta_probs) {
      data::SegmentationMap labels(m.height, m.width);
      for (std::size_t p = 0; p < m.num_pixels(); ++p) {
        const Best b = best_class(m.pixel(p));
        if (static_cast<double>(b.conf) >= config.threshold) labels.labels[p] = b.cls;
      }
      out.push_back(std::move(labels));
    }
    return out;
  }

  int k = 0;
  for (const auto& m : meta_probs) k = std::max(k, m.classes);
  if (k > 255) throw std::invalid_argument("pseudo-labels support at most 255 classes");
  std::vector<std::vector<float>> per_class(static_cast<std::size_t>(k));
  for (const auto& m : meta_probs) {
    for (std::size_t p = 0; p < m.num_pixels(); ++p) {
      const Best b = best_class(m.pixel(p));
      per_class[b.cls].push_back(b.conf);
    }
  }
  std::vector<float> cut(static_cast<std::size_t>(k), 2.0f);
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    auto& v = per_class[c];
    if (v.empty()) continue;
    const auto keep = static_cast<std::size_t>(
        std::max(1.0, std::ceil(config.quantile * static_cast<double>(v.size()))));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(keep - 1), v.end(),
                     std::greater<>());
    cut[c] = v[keep - 1];
  }
  for (const auto& m : meta_probs) {
    data::SegmentationMap labels(m.height, m.width);
    for (std::size_t p = 0; p < m.num_pixels(); ++p) {
      const Best b = best_class(m.pixel(p));
      if (b.conf >= cut[b.cls]) labels.labels[p] = b.cls;
    }
    out.push_back(std::move(labels));
  }
  return out;
}

double label_coverage(const std::vector<data::SegmentationMap>& labels) {
  std::size_t total = 0, kept = 0;
  for (const auto& m : labels) {
    total += m.num_pixels();
    for (auto l : m.labels) kept += l != data::kIgnoreLabel;
  }
  return total == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(total);
}

std::vector<std::size_t> class_counts(const std::vector<data::SegmentationMap>& labels, int num_classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (const auto& m : labels)
    for (auto l : m.labels)
      if (l < counts.size()) ++counts[l];
  return counts;
}

}  // namespace essuda::ensemble
