#include "essuda/ensemble/meta_learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace essuda::ensemble {

MetaWeights MetaWeights::constant(int num_classes, double value) {
  MetaWeights m;
  for (auto& v : m.w) v.assign(static_cast<std::size_t>(num_classes), value);
  return m;
}

bool MetaWeights::finite() const {
  for (const auto& v : w)
    for (double x : v)
      if (!std::isfinite(x)) return false;
  return true;
}

void MetaWeights::validate() const {
  if (w[0].empty() || w[1].size() != w[0].size() || w[2].size() != w[0].size()) {
    throw std::invalid_argument("meta weights need three vectors of equal non-zero length");
  }
  if (!finite()) throw std::invalid_argument("meta weights contain non-finite values");
}

void to_json(nlohmann::json& j, const MetaWeights& m) {
  j = nlohmann::json{{"w1", m.w[0]}, {"w2", m.w[1]}, {"w3", m.w[2]}};
}

void from_json(const nlohmann::json& j, MetaWeights& m) {
  m.w[0] = j.at("w1").get<std::vector<double>>();
  m.w[1] = j.at("w2").get<std::vector<double>>();
  m.w[2] = j.at("w3").get<std::vector<double>>();
  m.validate();
}

void to_json(nlohmann::json& j, const MetaFitOptions& o) {
  j = nlohmann::json{{"max_iters", o.max_iters},
                     {"rel_tol", o.rel_tol},
                     {"pixel_stride", o.pixel_stride},
                     {"initial_step", o.initial_step},
                     {"armijo", o.armijo},
                     {"backtrack", o.backtrack},
                     {"feature", o.feature == MetaFeature::kProbabilities ? "probabilities"
                                                                          : "log_probabilities"}};
}

void from_json(const nlohmann::json& j, MetaFitOptions& o) {
  MetaFitOptions d;
  o.max_iters = j.value("max_iters", d.max_iters);
  o.rel_tol = j.value("rel_tol", d.rel_tol);
  o.pixel_stride = j.value("pixel_stride", d.pixel_stride);
  o.initial_step = j.value("initial_step", d.initial_step);
  o.armijo = j.value("armijo", d.armijo);
  o.backtrack = j.value("backtrack", d.backtrack);
  const auto feature = j.value("feature", std::string("probabilities"));
  if (feature == "probabilities") {
    o.feature = MetaFeature::kProbabilities;
  } else if (feature == "log_probabilities") {
    o.feature = MetaFeature::kLogProbabilities;
  } else {
    throw std::invalid_argument("unknown meta feature '" + feature + "'");
  }
  if (o.max_iters < 1 || o.pixel_stride < 1 || !(o.backtrack > 0.0 && o.backtrack < 1.0) ||
      !(o.initial_step > 0.0)) {
    throw std::invalid_argument("invalid meta fit options");
  }
}

namespace {

constexpr double kFloor = 1e-12;

inline double feature_value(float p, MetaFeature f) {
  return f == MetaFeature::kProbabilities ? static_cast<double>(p)
                                          : std::log(std::max(static_cast<double>(p), kFloor));
}

void check_triple(const MapTriple& maps, int k) {
  for (const auto* m : maps) {
    if (m == nullptr) throw std::invalid_argument("meta learner: null probability map");
    if (m->classes != k || m->height != maps[0]->height || m->width != maps[0]->width) {
      throw std::invalid_argument("meta learner: probability maps disagree in shape (" +
                                  std::to_string(m->height) + "x" + std::to_string(m->width) + "x" +
                                  std::to_string(m->classes) + " vs " +
                                  std::to_string(maps[0]->height) + "x" +
                                  std::to_string(maps[0]->width) + "x" + std::to_string(k) + ")");
    }
  }
}

// Labelled pixels packed as [f1 (K), f2 (K), f3 (K)] rows plus a label.
struct Design {
  int k = 0;
  std::vector<float> features;
  std::vector<std::uint8_t> labels;
  std::size_t rows() const { return labels.size(); }
};

Design build_design(const std::vector<MapTriple>& predictions,
                    const std::vector<const data::SegmentationMap*>& labels, MetaFeature feature,
                    std::size_t stride) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("meta fit: " + std::to_string(predictions.size()) +
                                " prediction triples but " + std::to_string(labels.size()) +
                                " label maps");
  }
  if (predictions.empty()) throw data::DataError("meta fit: no labelled pixels");
  Design d;
  d.k = predictions.front()[0]->classes;
  const auto k = static_cast<std::size_t>(d.k);
  std::size_t seen = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    check_triple(predictions[i], d.k);
    const auto& y = *labels[i];
    if (y.height != predictions[i][0]->height || y.width != predictions[i][0]->width) {
      throw std::invalid_argument("meta fit: label map " + std::to_string(i) +
                                  " does not match its predictions");
    }
    for (std::size_t p = 0; p < y.num_pixels(); ++p) {
      const std::uint8_t label = y.labels[p];
      if (label == data::kIgnoreLabel) continue;
      if (label >= k) throw std::invalid_argument("meta fit: label id out of range");
      if (seen++ % stride != 0) continue;
      d.labels.push_back(label);
      for (const auto* m : predictions[i]) {
        const auto px = m->pixel(p);
        for (std::size_t c = 0; c < k; ++c) d.features.push_back(static_cast<float>(feature_value(px[c], feature)));
      }
    }
  }
  if (d.labels.empty()) throw data::DataError("meta fit: no labelled pixels");
  return d;
}

using Flat = std::vector<double>;

Flat flatten(const MetaWeights& w) {
  Flat f;
  for (const auto& v : w.w) f.insert(f.end(), v.begin(), v.end());
  return f;
}

MetaWeights unflatten(const Flat& f, std::size_t k) {
  MetaWeights w;
  for (std::size_t j = 0; j < 3; ++j) w.w[j].assign(f.begin() + j * k, f.begin() + (j + 1) * k);
  return w;
}

// Mean cross-entropy; fills `grad` (size 3K) when non-null.
double objective(const Design& d, const Flat& w, Flat* grad) {
  const auto k = static_cast<std::size_t>(d.k);
  std::vector<double> z(k);
  double loss = 0.0;
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    const float* f = d.features.data() + r * 3 * k;
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      z[c] = w[c] * f[c] + w[k + c] * f[k + c] + w[2 * k + c] * f[2 * k + c];
      zmax = std::max(zmax, z[c]);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      z[c] = std::exp(z[c] - zmax);
      sum += z[c];
    }
    const std::size_t y = d.labels[r];
    loss -= std::log(std::max(z[y] / sum, kFloor));
    if (grad) {
      for (std::size_t c = 0; c < k; ++c) {
        const double delta = z[c] / sum - (c == y ? 1.0 : 0.0);
        (*grad)[c] += delta * f[c];
        (*grad)[k + c] += delta * f[k + c];
        (*grad)[2 * k + c] += delta * f[2 * k + c];
      }
    }
  }
  const double n = static_cast<double>(d.rows());
  if (grad)
    for (auto& g : *grad) g /= n;
  return loss / n;
}

MetaFitResult fit(const Design& d, const MetaFitOptions& opt, const MetaWeights& init) {
  init.validate();
  if (init.num_classes() != d.k) {
    throw std::invalid_argument("meta fit: initial weights have " +
                                std::to_string(init.num_classes()) + " classes, predictions have " +
                                std::to_string(d.k));
  }
  MetaFitResult res;
  res.pixels = d.rows();
  Flat w = flatten(init);
  Flat g(w.size()), trial(w.size());
  double f = objective(d, w, &g);
  res.loss_history.push_back(f);
  double step = opt.initial_step;
  for (int it = 0; it < opt.max_iters; ++it) {
    double gnorm2 = 0.0;
    for (double v : g) gnorm2 += v * v;
    if (gnorm2 == 0.0) {
      res.converged = true;
      break;
    }
    double f_new = f;
    bool accepted = false;
    while (step > 1e-14) {
      for (std::size_t i = 0; i < w.size(); ++i) trial[i] = w[i] - step * g[i];
      f_new = objective(d, trial, nullptr);
      if (std::isfinite(f_new) && f_new <= f - opt.armijo * step * gnorm2) {
        accepted = true;
        break;
      }
      step *= opt.backtrack;
    }
    if (!accepted) {
      res.converged = true;
      break;
    }
    w.swap(trial);
    const double decrease = (f - f_new) / std::max(std::abs(f), kFloor);
    f = objective(d, w, &g);
    res.loss_history.push_back(f);
    res.iterations = it + 1;
    if (decrease < opt.rel_tol) {
      res.converged = true;
      break;
    }
    step /= opt.backtrack;
  }
  res.weights = unflatten(w, static_cast<std::size_t>(d.k));
  return res;
}

}  // namespace

data::ProbabilityMap meta_forward(const MapTriple& maps, const MetaWeights& w, MetaFeature feature) {
  const int k = maps[0] ? maps[0]->classes : 0;
  check_triple(maps, k);
  w.validate();
  if (w.num_classes() != k) {
    throw std::invalid_argument("meta_forward: weights have " + std::to_string(w.num_classes()) +
                                " classes, maps have " + std::to_string(k));
  }
  data::ProbabilityMap out(maps[0]->height, maps[0]->width, k);
  const auto kk = static_cast<std::size_t>(k);
  std::vector<double> z(kk);
  for (std::size_t p = 0; p < out.num_pixels(); ++p) {
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < kk; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 3; ++j) acc += w.w[j][c] * feature_value(maps[j]->pixel(p)[c], feature);
      z[c] = acc;
      zmax = std::max(zmax, acc);
    }
    double sum = 0.0;
    for (auto& v : z) {
      v = std::exp(v - zmax);
      sum += v;
    }
    auto dst = out.pixel(p);
    for (std::size_t c = 0; c < kk; ++c) dst[c] = static_cast<float>(z[c] / sum);
  }
  return out;
}

data::ProbabilityMap meta_forward(const data::ProbabilityMap& p1, const data::ProbabilityMap& p2,
                                  const data::ProbabilityMap& p3, const MetaWeights& w,
                                  MetaFeature feature) {
  return meta_forward(MapTriple{&p1, &p2, &p3}, w, feature);
}

MetaFitResult meta_fit(const std::vector<MapTriple>& predictions,
                       const std::vector<const data::SegmentationMap*>& labels,
                       const MetaFitOptions& options, const MetaWeights& init) {
  return fit(build_design(predictions, labels, options.feature, options.pixel_stride), options, init);
}

MetaFitResult meta_fit(const std::vector<MapTriple>& predictions,
                       const std::vector<const data::SegmentationMap*>& labels,
                       const MetaFitOptions& options) {
  const Design d = build_design(predictions, labels, options.feature, options.pixel_stride);
  return fit(d, options, MetaWeights::constant(d.k, 1.0));
}

MetaFitResult meta_refit(const std::vector<MapTriple>& predictions,
                         const std::vector<const data::SegmentationMap*>& pseudo_labels,
                         const MetaWeights& previous, const MetaFitOptions& options) {
  return meta_fit(predictions, pseudo_labels, options, previous);
}

double meta_loss(const std::vector<MapTriple>& predictions,
                 const std::vector<const data::SegmentationMap*>& labels, const MetaWeights& w,
                 MetaFeature feature) {
  const Design d = build_design(predictions, labels, feature, 1);
  return objective(d, flatten(w), nullptr);
}

}  // namespace essuda::ensemble
