#include "essuda/translate/translator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace essuda::translate {

ChannelStats channel_stats(std::span<const Image> images) {
  ChannelStats stats;
  std::array<double, 3> sum{}, sq{};
  double count = 0.0;
  for (const auto& img : images) {
    for (std::size_t i = 0; i < img.num_pixels(); ++i) {
      for (int c = 0; c < 3; ++c) {
        const double v = img.pixels[i * 3 + c];
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    count += static_cast<double>(img.num_pixels());
  }
  if (count == 0.0) return stats;
  for (int c = 0; c < 3; ++c) {
    stats.mean[c] = sum[c] / count;
    stats.stddev[c] = std::sqrt(std::max(0.0, sq[c] / count - stats.mean[c] * stats.mean[c]));
  }
  return stats;
}

AffineColorTranslator fit_translator(std::span<const Image> source, std::span<const Image> target) {
  if (source.empty() || target.empty()) {
    throw std::invalid_argument("fit_translator: both corpora must be non-empty");
  }
  const ChannelStats s = channel_stats(source);
  const ChannelStats t = channel_stats(target);
  AffineColorTranslator tr;
  constexpr double kMinStd = 1e-8;
  static constexpr const char* kNames[3] = {"red", "green", "blue"};
  for (int c = 0; c < 3; ++c) {
    double scale = 1.0;
    if (s.stddev[c] < kMinStd || t.stddev[c] < kMinStd) {
      tr.warnings_.push_back(std::string("fit_translator: zero-variance ") + kNames[c] +
                             " channel; scale clamped to 1");
    } else {
      scale = t.stddev[c] / s.stddev[c];
    }
    tr.channels_[c] = ChannelMap{scale, t.mean[c] - scale * s.mean[c]};
  }
  return tr;
}

Image AffineColorTranslator::forward(const Image& image) const {
  Image out = image;
  for (std::size_t i = 0; i < image.num_pixels(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = channels_[c].scale * image.pixels[i * 3 + c] + channels_[c].shift;
      out.pixels[i * 3 + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

Image AffineColorTranslator::inverse(const Image& image) const {
  Image out = image;
  for (std::size_t i = 0; i < image.num_pixels(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = (image.pixels[i * 3 + c] - channels_[c].shift) / channels_[c].scale;
      out.pixels[i * 3 + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

nlohmann::json AffineColorTranslator::to_json() const {
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& ch : channels_) channels.push_back({{"scale", ch.scale}, {"shift", ch.shift}});
  return {{"type", "affine_color"}, {"channels", channels}};
}

AffineColorTranslator AffineColorTranslator::from_json(const nlohmann::json& j) {
  if (j.value("type", std::string{}) != "affine_color" || j.at("channels").size() != 3) {
    throw std::invalid_argument("translator JSON is not an affine_color map");
  }
  std::array<ChannelMap, 3> ch{};
  for (int c = 0; c < 3; ++c) {
    ch[c].scale = j["channels"][c].at("scale").get<double>();
    ch[c].shift = j["channels"][c].at("shift").get<double>();
  }
  return AffineColorTranslator(ch);
}

const Image& TranslationTriple::get(int k) const {
  switch (k) {
    case 1: return t1;
    case 2: return t2;
    case 3: return t3;
  }
  throw std::out_of_range("translation index must be 1, 2 or 3");
}

TranslationTriple make_triple(const Image& image, const Translator& translator) {
  TranslationTriple triple;
  triple.t1 = image;
  triple.t3 = translator.forward(image);
  triple.t2 = translator.inverse(triple.t3);
  return triple;
}

const Image& select_alignment_rep(const TranslationTriple& triple, AlignmentRep rep) {
  return triple.get(static_cast<int>(rep));
}

}  // namespace essuda::translate
