#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace essuda::data {

inline constexpr std::uint8_t kIgnoreLabel = 255;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// H x W x 3 interleaved RGB with values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::size_t num_pixels() const { return static_cast<std::size_t>(height) * width; }

  bool operator==(const Image&) const = default;
};

/// Per-pixel class ids in [0, K) or kIgnoreLabel.
struct SegmentationMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  SegmentationMap() = default;
  SegmentationMap(int h, int w, std::uint8_t fill = kIgnoreLabel)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t num_pixels() const { return labels.size(); }

  bool operator==(const SegmentationMap&) const = default;
};

/// H x W x K per-pixel categorical distributions, class index fastest.
struct ProbabilityMap {
  int height = 0;
  int width = 0;
  int classes = 0;
  std::vector<float> probs;

  ProbabilityMap() = default;
  ProbabilityMap(int h, int w, int k)
      : height(h), width(w), classes(k), probs(static_cast<std::size_t>(h) * w * k, 0.0f) {}

  std::size_t num_pixels() const { return static_cast<std::size_t>(height) * width; }
  std::span<float> pixel(std::size_t i) { return {probs.data() + i * classes, static_cast<std::size_t>(classes)}; }
  std::span<const float> pixel(std::size_t i) const {
    return {probs.data() + i * classes, static_cast<std::size_t>(classes)};
  }
  SegmentationMap argmax() const;
};

/// Rounds every channel to the nearest multiple of 1/255.
void quantize_8bit(Image& image);
std::uint8_t to_byte(float v);

/// Center crop; returns the input unchanged when it already fits.
Image center_crop(const Image& image, int height, int width);
SegmentationMap center_crop(const SegmentationMap& labels, int height, int width);

}  // namespace essuda::data
