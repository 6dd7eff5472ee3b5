#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/autodiff/tensor.hpp"
#include "essuda/dataio/image.hpp"

namespace essuda::nets {

using ad::Tensor;

struct NetworkConfig {
  int num_classes = 5;
  std::vector<int> encoder_channels{16, 32, 64, 64};
  std::vector<int> encoder_strides{1, 2, 2, 1};
  int head_channels = 32;
  std::vector<int> discriminator_channels{4, 8, 16, 32, 1};
  double leaky_slope = 0.2;
  int num_heads = 3;

  int feature_channels() const { return encoder_channels.back(); }
  int downsample() const;
  bool operator==(const NetworkConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

template <typename T>
struct ConvLayer {
  Tensor<T> weight;  // O x C x Kh x Kw
  Tensor<T> bias;    // O
  int stride = 1;
  int padding = 0;
};

/// Shared feature extractor: 3x3 conv blocks with leaky-relu.
template <typename T>
struct Encoder {
  std::vector<ConvLayer<T>> layers;
  T slope = T(0.2);

  /// N x 3 x H x W images to N x F x H/d x W/d features. H and W must be
  /// divisible by the total downsampling d.
  Tensor<T> forward(const Tensor<T>& images) const;
  int downsample() const;
};

template <typename T>
struct ClassifierOutput {
  Tensor<T> logits;  // N x K x H x W (upsampled, pre-softmax)
  Tensor<T> probs;   // softmax over K
};

/// Segmentation head: two 3x3 convs, a 1x1 conv to K logits, bilinear
/// upsampling back to input resolution, softmax.
template <typename T>
struct Classifier {
  std::vector<ConvLayer<T>> layers;
  T slope = T(0.2);
  int upsample = 4;

  ClassifierOutput<T> forward(const Tensor<T>& features) const;
};

/// Patch discriminator over encoder features: 4x4 stride-2 convs, leaky-relu
/// on all but the last layer, real-valued logits out.
template <typename T>
struct Discriminator {
  std::vector<ConvLayer<T>> layers;
  T slope = T(0.2);

  Tensor<T> forward(const Tensor<T>& features) const;
  /// Padding each layer uses for a given input extent; throws if the
  /// features are too small.
  static std::vector<int> layer_padding(std::size_t extent, std::size_t num_layers);
};

template <typename T>
struct SegmentationNetwork {
  NetworkConfig config;
  Encoder<T> encoder;
  std::vector<Classifier<T>> heads;
  Discriminator<T> discriminator;

  /// Parameters in a fixed order with stable names ("encoder.0.weight", ...).
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;
  std::vector<Tensor<T>> segmentation_parameters() const;  // encoder + heads
  std::vector<Tensor<T>> head_parameters(int head) const;
  std::vector<Tensor<T>> head_weights(int head) const;      // kernels only
  std::vector<Tensor<T>> discriminator_parameters() const;
};

/// He (fan-in) normal init for kernels, zero biases. Encoder, each head and
/// the discriminator draw from distinct sub-seeds of `seed`.
template <typename T>
SegmentationNetwork<T> init_params(const NetworkConfig& config, std::uint64_t seed);

/// Packs images (all the same size) into an N x 3 x H x W tensor.
template <typename T>
Tensor<T> images_to_tensor(const std::vector<const data::Image*>& images);

/// Splits an N x K x H x W probability tensor into per-image maps.
template <typename T>
std::vector<data::ProbabilityMap> to_probability_maps(const Tensor<T>& probs);

}  // namespace essuda::nets
