#include "essuda/dataio/image.hpp"

#include <algorithm>
#include <cmath>

namespace essuda::data {

SegmentationMap ProbabilityMap::argmax() const {
  SegmentationMap out(height, width, 0);
  for (std::size_t i = 0; i < num_pixels(); ++i) {
    auto p = pixel(i);
    out.labels[i] = static_cast<std::uint8_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  return out;
}

std::uint8_t to_byte(float v) {
  const float clipped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clipped * 255.0f));
}

void quantize_8bit(Image& image) {
  for (auto& v : image.pixels) v = static_cast<float>(to_byte(v)) / 255.0f;
}

Image center_crop(const Image& image, int height, int width) {
  if (image.height <= height && image.width <= width) return image;
  const int h = std::min(height, image.height);
  const int w = std::min(width, image.width);
  const int y0 = (image.height - h) / 2;
  const int x0 = (image.width - w) / 2;
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(y + y0, x + x0, c);
  return out;
}

SegmentationMap center_crop(const SegmentationMap& labels, int height, int width) {
  if (labels.height <= height && labels.width <= width) return labels;
  const int h = std::min(height, labels.height);
  const int w = std::min(width, labels.width);
  const int y0 = (labels.height - h) / 2;
  const int x0 = (labels.width - w) / 2;
  SegmentationMap out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = labels.at(y + y0, x + x0);
  return out;
}

}  // namespace essuda::data
