#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "essuda/autodiff/ops.hpp"
#include "essuda/nets/networks.hpp"

using namespace essuda;
using namespace essuda::nets;
using ad::Shape;
using ad::Tensor;

namespace {

Tensor<float> random_input(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(ad::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return {std::move(shape), std::move(v)};
}

template <typename T>
void zero_all(SegmentationNetwork<T>& net) {
  for (auto& [name, t] : net.named_parameters())
    for (auto& v : t.data()) v = T(0);
}

}  // namespace

TEST(Encoder, OutputShape) {
  const auto net = init_params<float>(NetworkConfig{}, 1);
  const auto f = net.encoder.forward(random_input({2, 3, 64, 64}, 2));
  EXPECT_EQ(f.shape(), (Shape{2, 64, 16, 16}));
  EXPECT_EQ(net.encoder.downsample(), 4);
}

TEST(Encoder, IndivisibleInputNamesDivisibility) {
  const auto net = init_params<float>(NetworkConfig{}, 1);
  try {
    net.encoder.forward(random_input({1, 3, 30, 32}, 2));
    FAIL() << "expected ShapeError";
  } catch (const ad::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("divisible by 4"), std::string::npos) << e.what();
  }
}

TEST(Encoder, ZeroInputFinite) {
  const auto net = init_params<float>(NetworkConfig{}, 3);
  const auto f = net.encoder.forward(Tensor<float>::zeros({1, 3, 16, 16}));
  for (float v : f.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Encoder, SameSeedBitIdentical) {
  const auto x = random_input({1, 3, 32, 32}, 4);
  const auto a = init_params<float>(NetworkConfig{}, 5).encoder.forward(x);
  const auto b = init_params<float>(NetworkConfig{}, 5).encoder.forward(x);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Classifier, ZeroFinalLayerGivesUniform) {
  auto net = init_params<float>(NetworkConfig{}, 6);
  auto& last = net.heads[0].layers.back();
  for (auto& v : last.weight.data()) v = 0.0f;
  for (auto& v : last.bias.data()) v = 0.0f;
  const auto out = net.heads[0].forward(Tensor<float>::full({1, 64, 8, 8}, 0.3f));
  EXPECT_EQ(out.probs.shape(), (Shape{1, 5, 32, 32}));
  for (float p : out.probs.data()) EXPECT_NEAR(p, 0.2f, 1e-6);
}

TEST(Classifier, ProbabilitiesSumToOne) {
  const auto net = init_params<float>(NetworkConfig{}, 7);
  const auto f = net.encoder.forward(random_input({2, 3, 32, 32}, 8));
  for (int k = 0; k < 3; ++k) {
    const auto out = net.heads[k].forward(f);
    EXPECT_EQ(out.logits.shape(), out.probs.shape());
    const auto s = ad::reduce_sum(out.probs, {1});
    for (float v : s.data()) EXPECT_NEAR(v, 1.0f, 1e-6);
  }
}

TEST(Classifier, DistinctHeadsDisagree) {
  const auto net = init_params<float>(NetworkConfig{}, 9);
  const auto f = net.encoder.forward(random_input({1, 3, 32, 32}, 10));
  const auto a = to_probability_maps(net.heads[0].forward(f).probs)[0].argmax();
  const auto b = to_probability_maps(net.heads[1].forward(f).probs)[0].argmax();
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.labels.size(); ++i) differ += a.labels[i] != b.labels[i];
  EXPECT_GT(differ, 0u);
}

TEST(Discriminator, ShapeArithmetic) {
  EXPECT_EQ(Discriminator<float>::layer_padding(16, 5).size(), 5u);
  const auto net = init_params<float>(NetworkConfig{}, 11);
  const auto d = net.discriminator.forward(random_input({1, 64, 16, 16}, 12));
  EXPECT_EQ(d.shape(), (Shape{1, 1, 1, 1}));
  const auto d32 = net.discriminator.forward(random_input({2, 64, 32, 32}, 12));
  EXPECT_EQ(d32.shape(), (Shape{2, 1, 1, 1}));
}

TEST(Discriminator, TooSmallInputExplainsMinimum) {
  const auto net = init_params<float>(NetworkConfig{}, 11);
  try {
    net.discriminator.forward(random_input({1, 64, 1, 1}, 12));
    FAIL() << "expected ShapeError";
  } catch (const ad::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("at least"), std::string::npos) << e.what();
  }
}

TEST(Discriminator, BatchIndependence) {
  const auto net = init_params<float>(NetworkConfig{}, 13);
  const auto one = random_input({1, 64, 16, 16}, 14);
  std::vector<float> two(one.data().begin(), one.data().end());
  two.insert(two.end(), one.data().begin(), one.data().end());
  const auto a = net.discriminator.forward(one);
  const auto b = net.discriminator.forward(Tensor<float>({2, 64, 16, 16}, two));
  ASSERT_EQ(b.dim(0), 2u);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_NEAR(b.data()[i], a.data()[i], 1e-6f);
    EXPECT_NEAR(b.data()[a.numel() + i], a.data()[i], 1e-6f);
  }
}

TEST(Discriminator, ZeroFeaturesZeroInitZeroLogits) {
  auto net = init_params<float>(NetworkConfig{}, 15);
  zero_all(net);
  const auto d = net.discriminator.forward(Tensor<float>::zeros({1, 64, 16, 16}));
  for (float v : d.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Discriminator, LayerSpec) {
  const auto net = init_params<float>(NetworkConfig{}, 16);
  const std::vector<std::size_t> channels{4, 8, 16, 32, 1};
  ASSERT_EQ(net.discriminator.layers.size(), 5u);
  std::size_t in = 64;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& l = net.discriminator.layers[i];
    EXPECT_EQ(l.weight.shape(), (Shape{channels[i], in, 4, 4}));
    EXPECT_EQ(l.stride, 2);
    in = channels[i];
  }
  EXPECT_FLOAT_EQ(net.discriminator.slope, 0.2f);
}

TEST(InitParams, SameSeedIdentical) {
  const auto a = init_params<float>(NetworkConfig{}, 17).named_parameters();
  const auto b = init_params<float>(NetworkConfig{}, 17).named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_TRUE(std::equal(a[i].second.data().begin(), a[i].second.data().end(), b[i].second.data().begin()));
  }
}

TEST(InitParams, HeadsDifferAndBiasesZero) {
  const auto net = init_params<float>(NetworkConfig{}, 18);
  const auto w0 = net.head_weights(0), w1 = net.head_weights(1), w2 = net.head_weights(2);
  EXPECT_FALSE(std::equal(w0[0].data().begin(), w0[0].data().end(), w1[0].data().begin()));
  EXPECT_FALSE(std::equal(w1[0].data().begin(), w1[0].data().end(), w2[0].data().begin()));
  for (const auto& [name, t] : net.named_parameters()) {
    if (!name.ends_with(".bias")) continue;
    for (float v : t.data()) EXPECT_EQ(v, 0.0f) << name;
  }
}

TEST(InitParams, HeVarianceOnLargeLayers) {
  const auto net = init_params<double>(NetworkConfig{}, 19);
  for (const auto& [name, t] : net.named_parameters()) {
    if (!name.ends_with(".weight") || t.numel() < 10000) continue;
    const double fan_in = static_cast<double>(t.numel() / t.dim(0));
    double mean = 0.0, sq = 0.0;
    for (double v : t.data()) {
      mean += v;
      sq += v * v;
    }
    mean /= static_cast<double>(t.numel());
    const double var = sq / static_cast<double>(t.numel()) - mean * mean;
    EXPECT_NEAR(var, 2.0 / fan_in, 0.2 * 2.0 / fan_in) << name;
  }
}

TEST(Network, HeadsShareOnlyTheEncoder) {
  const auto net = init_params<float>(NetworkConfig{}, 20);
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (const auto& pa : net.head_parameters(a))
        for (const auto& pb : net.head_parameters(b)) EXPECT_FALSE(pa.same_storage(pb));
  EXPECT_EQ(net.segmentation_parameters().size() + net.discriminator_parameters().size(),
            net.named_parameters().size());
}

TEST(Network, ConfigJsonRoundTrip) {
  NetworkConfig c;
  c.num_classes = 7;
  c.head_channels = 24;
  nlohmann::json j = c;
  EXPECT_EQ(j.get<NetworkConfig>(), c);
}

TEST(Network, GradientsReachEveryParameter) {
  const auto net = init_params<float>(NetworkConfig{}, 21);
  ad::Tape<float> tape;
  ad::TapeScope<float> scope(tape);
  const auto f = net.encoder.forward(random_input({1, 3, 32, 32}, 22));
  auto loss = ad::reduce_sum(net.discriminator.forward(f));
  for (int k = 0; k < 3; ++k) loss = ad::add(loss, ad::reduce_mean(ad::mul(net.heads[k].forward(f).logits, net.heads[k].forward(f).logits)));
  tape.backward(loss);
  for (const auto& [name, t] : net.named_parameters()) {
    double norm = 0.0;
    for (float g : t.grad()) norm += std::abs(g);
    EXPECT_GT(norm, 0.0) << name;
  }
}
