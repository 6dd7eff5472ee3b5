#include "essuda/evalkit/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "essuda/autodiff/ops.hpp"

namespace essuda::evalkit {

namespace {

template <typename Fn>
void for_batches(const std::vector<const data::Image*>& images, int batch_size, Fn&& fn) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(images.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const data::Image*> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                          images.begin() + static_cast<std::ptrdiff_t>(end));
    fn(nets::images_to_tensor<float>(chunk));
  }
}

void append(std::vector<data::ProbabilityMap>& dst, std::vector<data::ProbabilityMap>&& src) {
  for (auto& m : src) dst.push_back(std::move(m));
}

}  // namespace

HeadMaps predict_all_heads(const nets::SegmentationNetwork<float>& net,
                           const std::vector<const data::Image*>& images, int batch_size) {
  ad::NoGradScope<float> no_grad;
  HeadMaps out(net.heads.size());
  for_batches(images, batch_size, [&](const ad::Tensor<float>& x) {
    const auto f = net.encoder.forward(x);
    for (std::size_t h = 0; h < net.heads.size(); ++h)
      append(out[h], nets::to_probability_maps(net.heads[h].forward(f).probs));
  });
  return out;
}

std::vector<data::ProbabilityMap> predict_head(const nets::SegmentationNetwork<float>& net, int head,
                                               const std::vector<const data::Image*>& images,
                                               int batch_size) {
  ad::NoGradScope<float> no_grad;
  std::vector<data::ProbabilityMap> out;
  const auto& classifier = net.heads.at(static_cast<std::size_t>(head));
  for_batches(images, batch_size, [&](const ad::Tensor<float>& x) {
    append(out, nets::to_probability_maps(classifier.forward(net.encoder.forward(x)).probs));
  });
  return out;
}

std::vector<data::ProbabilityMap> meta_predict(const HeadMaps& heads, const ensemble::MetaWeights& w,
                                               ensemble::MetaFeature feature) {
  if (heads.size() != 3) throw std::invalid_argument("meta_predict needs exactly three heads");
  std::vector<data::ProbabilityMap> out;
  out.reserve(heads[0].size());
  for (std::size_t i = 0; i < heads[0].size(); ++i)
    out.push_back(ensemble::meta_forward(heads[0][i], heads[1][i], heads[2][i], w, feature));
  return out;
}

const HeadResult& EvalReport::head(const std::string& name) const {
  for (const auto& h : heads)
    if (h.head == name) return h;
  throw std::out_of_range("evaluation report has no head '" + name + "'");
}

bool EvalReport::has_head(const std::string& name) const {
  return std::any_of(heads.begin(), heads.end(), [&](const HeadResult& h) { return h.head == name; });
}

double EvalReport::best_classifier_miou() const {
  double best = -1.0;
  for (const auto& h : heads)
    if (h.head != "Cm") best = std::max(best, h.scores.miou);
  return best;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json hs = nlohmann::json::array();
  for (const auto& h : heads) {
    nlohmann::json per_class = nlohmann::json::array();
    for (double v : h.scores.per_class) per_class.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    hs.push_back({{"head", h.head},
                  {"miou", h.scores.miou},
                  {"iou", per_class},
                  {"absent_classes", h.scores.absent_classes()},
                  {"confusion", h.confusion.to_json()}});
  }
  return {{"split", split}, {"config_fingerprint", config_fingerprint}, {"heads", hs}};
}

EvalReport evaluate_predictions(const HeadMaps& heads, const std::vector<data::ProbabilityMap>* meta,
                                const std::vector<const data::SegmentationMap*>& labels, int num_classes) {
  EvalReport report;
  auto score = [&](const std::string& name, const std::vector<data::ProbabilityMap>& maps) {
    if (maps.size() != labels.size()) throw std::invalid_argument("evaluate: prediction/label count mismatch");
    HeadResult r{name, ConfusionMatrix(num_classes), {}};
    for (std::size_t i = 0; i < maps.size(); ++i) r.confusion.accumulate(maps[i].argmax(), *labels[i]);
    r.scores = iou_scores(r.confusion);
    report.heads.push_back(std::move(r));
  };
  for (std::size_t h = 0; h < heads.size(); ++h) score("C" + std::to_string(h + 1), heads[h]);
  if (meta) score("Cm", *meta);
  return report;
}

EvalReport evaluate(const nets::SegmentationNetwork<float>& net, const ensemble::MetaWeights* meta,
                    const data::DatasetSplit& split, int batch_size, ensemble::MetaFeature feature) {
  if (!data::role_is_labeled(split.role())) {
    throw std::invalid_argument("evaluate: split " + std::string(data::to_string(split.role())) +
                                " carries no labels");
  }
  std::vector<data::DomainSample> samples;
  samples.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) samples.push_back(split.at(i));
  std::vector<const data::Image*> images;
  std::vector<const data::SegmentationMap*> labels;
  for (const auto& s : samples) {
    images.push_back(&s.image);
    labels.push_back(&*s.labels);
  }
  const HeadMaps heads = predict_all_heads(net, images, batch_size);
  std::vector<data::ProbabilityMap> meta_maps;
  if (meta) meta_maps = meta_predict(heads, *meta, feature);
  EvalReport report = evaluate_predictions(heads, meta ? &meta_maps : nullptr, labels, net.config.num_classes);
  report.split = std::string(data::to_string(split.role()));
  return report;
}

}  // namespace essuda::evalkit
