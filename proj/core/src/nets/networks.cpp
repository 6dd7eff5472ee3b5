#include "essuda/nets/networks.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "essuda/autodiff/ops.hpp"
#include "essuda/rng.hpp"

namespace essuda::nets {

int NetworkConfig::downsample() const {
  int d = 1;
  for (int s : encoder_strides) d *= s;
  return d;
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = nlohmann::json{{"num_classes", c.num_classes},
                     {"encoder_channels", c.encoder_channels},
                     {"encoder_strides", c.encoder_strides},
                     {"head_channels", c.head_channels},
                     {"discriminator_channels", c.discriminator_channels},
                     {"leaky_slope", c.leaky_slope},
                     {"num_heads", c.num_heads}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  NetworkConfig d;
  c.num_classes = j.value("num_classes", d.num_classes);
  c.encoder_channels = j.value("encoder_channels", d.encoder_channels);
  c.encoder_strides = j.value("encoder_strides", d.encoder_strides);
  c.head_channels = j.value("head_channels", d.head_channels);
  c.discriminator_channels = j.value("discriminator_channels", d.discriminator_channels);
  c.leaky_slope = j.value("leaky_slope", d.leaky_slope);
  c.num_heads = j.value("num_heads", d.num_heads);
}

namespace {

template <typename T>
ConvLayer<T> make_conv(std::mt19937_64& rng, int in, int out, int k, int stride, int padding) {
  const std::size_t fan_in = static_cast<std::size_t>(in) * k * k;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<T> w(static_cast<std::size_t>(out) * fan_in);
  for (auto& v : w) v = static_cast<T>(dist(rng));
  ConvLayer<T> layer;
  layer.weight = Tensor<T>({static_cast<std::size_t>(out), static_cast<std::size_t>(in),
                            static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                           std::move(w), true);
  layer.bias = Tensor<T>::zeros({static_cast<std::size_t>(out)}, true);
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

template <typename T>
Tensor<T> apply(const ConvLayer<T>& layer, const Tensor<T>& x, int padding) {
  return ad::conv2d(x, layer.weight, layer.bias, layer.stride, padding);
}

}  // namespace

template <typename T>
int Encoder<T>::downsample() const {
  int d = 1;
  for (const auto& l : layers) d *= l.stride;
  return d;
}

template <typename T>
Tensor<T> Encoder<T>::forward(const Tensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ad::ShapeError("encoder expects N x 3 x H x W images, got " + ad::shape_str(images.shape()));
  }
  const auto d = static_cast<std::size_t>(downsample());
  if (images.dim(2) % d != 0 || images.dim(3) % d != 0) {
    throw ad::ShapeError("encoder input height and width must be divisible by " +
                         std::to_string(d) + ", got " + ad::shape_str(images.shape()));
  }
  Tensor<T> x = images;
  for (const auto& layer : layers) x = ad::leaky_relu(apply(layer, x, layer.padding), slope);
  return x;
}

template <typename T>
ClassifierOutput<T> Classifier<T>::forward(const Tensor<T>& features) const {
  Tensor<T> x = features;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = apply(layers[i], x, layers[i].padding);
    if (i + 1 < layers.size()) x = ad::leaky_relu(x, slope);
  }
  ClassifierOutput<T> out;
  out.logits = upsample > 1 ? ad::upsample_bilinear(x, upsample) : x;
  out.probs = ad::softmax(out.logits, 1);
  return out;
}

template <typename T>
std::vector<int> Discriminator<T>::layer_padding(std::size_t extent, std::size_t num_layers) {
  constexpr std::size_t kKernel = 4;
  if (extent < 2) {
    throw ad::ShapeError("discriminator needs encoder features of at least 2x2 (got " +
                         std::to_string(extent) +
                         "); use larger input images, e.g. at least 8x8 with 4x downsampling");
  }
  std::vector<int> pads;
  std::size_t n = extent;
  for (std::size_t i = 0; i < num_layers; ++i) {
    std::size_t pad = 1;
    if (n + 2 * pad < kKernel) pad = (kKernel - n + 1) / 2;
    pads.push_back(static_cast<int>(pad));
    n = (n + 2 * pad - kKernel) / 2 + 1;
  }
  return pads;
}

template <typename T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& features) const {
  if (features.rank() != 4) {
    throw ad::ShapeError("discriminator expects N x F x h x w features, got " +
                         ad::shape_str(features.shape()));
  }
  const auto pads = layer_padding(std::min(features.dim(2), features.dim(3)), layers.size());
  Tensor<T> x = features;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = apply(layers[i], x, pads[i]);
    if (i + 1 < layers.size()) x = ad::leaky_relu(x, slope);
  }
  return x;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> SegmentationNetwork<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  auto push = [&](const std::string& prefix, const std::vector<ConvLayer<T>>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out.emplace_back(prefix + "." + std::to_string(i) + ".weight", layers[i].weight);
      out.emplace_back(prefix + "." + std::to_string(i) + ".bias", layers[i].bias);
    }
  };
  push("encoder", encoder.layers);
  for (std::size_t h = 0; h < heads.size(); ++h) push("head" + std::to_string(h + 1), heads[h].layers);
  push("disc", discriminator.layers);
  return out;
}

template <typename T>
std::vector<Tensor<T>> SegmentationNetwork<T>::segmentation_parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& l : encoder.layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  for (std::size_t h = 0; h < heads.size(); ++h) {
    for (auto& t : head_parameters(static_cast<int>(h))) out.push_back(t);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> SegmentationNetwork<T>::head_parameters(int head) const {
  std::vector<Tensor<T>> out;
  for (const auto& l : heads.at(head).layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> SegmentationNetwork<T>::head_weights(int head) const {
  std::vector<Tensor<T>> out;
  for (const auto& l : heads.at(head).layers) out.push_back(l.weight);
  return out;
}

template <typename T>
std::vector<Tensor<T>> SegmentationNetwork<T>::discriminator_parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& l : discriminator.layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

template <typename T>
SegmentationNetwork<T> init_params(const NetworkConfig& config, std::uint64_t seed) {
  if (config.encoder_channels.size() != config.encoder_strides.size() ||
      config.encoder_channels.empty()) {
    throw std::invalid_argument("encoder_channels and encoder_strides must be non-empty and aligned");
  }
  if (config.num_classes < 2 || config.num_heads < 1) {
    throw std::invalid_argument("network needs num_classes >= 2 and num_heads >= 1");
  }
  SegmentationNetwork<T> net;
  net.config = config;
  const T slope = static_cast<T>(config.leaky_slope);

  std::mt19937_64 enc_rng(derive_seed(seed, {0xE0}));
  int in = 3;
  for (std::size_t i = 0; i < config.encoder_channels.size(); ++i) {
    net.encoder.layers.push_back(
        make_conv<T>(enc_rng, in, config.encoder_channels[i], 3, config.encoder_strides[i], 1));
    in = config.encoder_channels[i];
  }
  net.encoder.slope = slope;

  for (int h = 0; h < config.num_heads; ++h) {
    std::mt19937_64 rng(derive_seed(seed, {0xC0, static_cast<std::uint64_t>(h)}));
    Classifier<T> head;
    head.layers.push_back(make_conv<T>(rng, config.feature_channels(), config.head_channels, 3, 1, 1));
    head.layers.push_back(make_conv<T>(rng, config.head_channels, config.head_channels, 3, 1, 1));
    head.layers.push_back(make_conv<T>(rng, config.head_channels, config.num_classes, 1, 1, 0));
    head.slope = slope;
    head.upsample = config.downsample();
    net.heads.push_back(std::move(head));
  }

  std::mt19937_64 disc_rng(derive_seed(seed, {0xD0}));
  in = config.feature_channels();
  for (int ch : config.discriminator_channels) {
    net.discriminator.layers.push_back(make_conv<T>(disc_rng, in, ch, 4, 2, 1));
    in = ch;
  }
  net.discriminator.slope = T(0.2);
  return net;
}

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const data::Image*>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const int h = images.front()->height, w = images.front()->width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<T> out(images.size() * 3 * plane);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& img = *images[n];
    if (img.height != h || img.width != w) {
      throw ad::ShapeError("images_to_tensor: mixed image sizes in one batch");
    }
    for (std::size_t i = 0; i < plane; ++i)
      for (int c = 0; c < 3; ++c) out[(n * 3 + c) * plane + i] = static_cast<T>(img.pixels[i * 3 + c]);
  }
  return Tensor<T>({images.size(), 3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)},
                   std::move(out));
}

template <typename T>
std::vector<data::ProbabilityMap> to_probability_maps(const Tensor<T>& probs) {
  const std::size_t n = probs.dim(0), k = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  const std::size_t plane = h * w;
  std::vector<data::ProbabilityMap> maps;
  auto v = probs.data();
  for (std::size_t i = 0; i < n; ++i) {
    data::ProbabilityMap m(static_cast<int>(h), static_cast<int>(w), static_cast<int>(k));
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < k; ++c)
        m.probs[p * k + c] = static_cast<float>(v[(i * k + c) * plane + p]);
    maps.push_back(std::move(m));
  }
  return maps;
}

template struct Encoder<float>;
template struct Encoder<double>;
template struct Classifier<float>;
template struct Classifier<double>;
template struct Discriminator<float>;
template struct Discriminator<double>;
template struct SegmentationNetwork<float>;
template struct SegmentationNetwork<double>;
template SegmentationNetwork<float> init_params(const NetworkConfig&, std::uint64_t);
template SegmentationNetwork<double> init_params(const NetworkConfig&, std::uint64_t);
template Tensor<float> images_to_tensor(const std::vector<const data::Image*>&);
template Tensor<double> images_to_tensor(const std::vector<const data::Image*>&);
template std::vector<data::ProbabilityMap> to_probability_maps(const Tensor<float>&);
template std::vector<data::ProbabilityMap> to_probability_maps(const Tensor<double>&);

}  // namespace essuda::nets
