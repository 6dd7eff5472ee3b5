#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "essuda/dataio/batches.hpp"
#include "essuda/dataio/benchmark.hpp"
#include "essuda/dataio/cityscapes.hpp"
#include "essuda/dataio/png_io.hpp"
#include "essuda/dataio/storage.hpp"

using namespace essuda::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("essuda_dataio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Benchmark small_bench(std::uint64_t seed = 7, SplitCounts counts = {12, 10, 8, 6}) {
  SceneSpec spec;
  spec.seed = seed;
  return generate_benchmark(spec, BenchmarkStyles::defaults(spec.num_classes), counts);
}

void expect_same_split(const DatasetSplit& a, const DatasetSplit& b) {
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a.role(), b.role());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a.at(i), y = b.at(i);
    EXPECT_EQ(x.id, y.id);
    EXPECT_EQ(x.image, y.image);
    EXPECT_EQ(x.labels, y.labels);
  }
}

std::vector<double> class_fractions(const SegmentationMap& m, int k) {
  std::vector<double> f(k, 0.0);
  for (auto l : m.labels) f[l] += 1.0;
  for (auto& v : f) v /= static_cast<double>(m.num_pixels());
  return f;
}

}  // namespace

TEST(Benchmark, DeterministicForSeed) {
  const auto a = small_bench(), b = small_bench();
  expect_same_split(a.source_train, b.source_train);
  expect_same_split(a.target_train, b.target_train);
  expect_same_split(a.target_val, b.target_val);
  expect_same_split(a.wild_val, b.wild_val);
}

TEST(Benchmark, DifferentSeedDifferentScenes) {
  EXPECT_NE(small_bench(7).source_train.at(0).labels, small_bench(8).source_train.at(0).labels);
}

TEST(Benchmark, LabelPolicyPerSplit) {
  const auto b = small_bench();
  for (std::size_t i = 0; i < b.source_train.size(); ++i) EXPECT_TRUE(b.source_train.at(i).labels.has_value());
  for (std::size_t i = 0; i < b.target_train.size(); ++i) EXPECT_FALSE(b.target_train.at(i).labels.has_value());
  for (std::size_t i = 0; i < b.target_val.size(); ++i) EXPECT_TRUE(b.target_val.at(i).labels.has_value());
  for (std::size_t i = 0; i < b.wild_val.size(); ++i) EXPECT_TRUE(b.wild_val.at(i).labels.has_value());
}

TEST(Benchmark, ImagesInUnitRangeAndLabelsValid) {
  const auto b = small_bench();
  for (const auto* split : {&b.source_train, &b.target_val, &b.wild_val}) {
    for (std::size_t i = 0; i < split->size(); ++i) {
      const auto s = split->at(i);
      EXPECT_EQ(s.image.height, 64);
      EXPECT_EQ(s.image.width, 64);
      for (float v : s.image.pixels) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
      }
      for (auto l : s.labels->labels) ASSERT_TRUE(l < 5 || l == kIgnoreLabel);
    }
  }
}

TEST(Benchmark, EveryClassAppears) {
  const auto b = small_bench();
  std::set<int> seen;
  for (std::size_t i = 0; i < b.source_train.size(); ++i) {
    const auto sample = b.source_train.at(i);
    seen.insert(sample.labels->labels.begin(), sample.labels->labels.end());
  }
  EXPECT_EQ(seen, (std::set<int>{0, 1, 2, 3, 4}));
}

TEST(Benchmark, RejectsZeroCountsAndEqualStyles) {
  SceneSpec spec;
  auto styles = BenchmarkStyles::defaults(5);
  EXPECT_THROW(generate_benchmark(spec, styles, {1, 0, 1, 1}), DataError);
  styles.wild = styles.target;
  EXPECT_THROW(generate_benchmark(spec, styles, {1, 1, 1, 1}), DataError);
}

TEST(Scene, StyleChangesImageButNotLabels) {
  SceneSpec spec;
  const auto styles = BenchmarkStyles::defaults(spec.num_classes);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto scene = generate_scene(spec, seed);
    const auto a = render_scene(scene, styles.source, seed);
    const auto b = render_scene(scene, styles.target, seed);
    const auto again = generate_scene(spec, seed);
    EXPECT_EQ(scene.labels, again.labels);
    EXPECT_NE(a, b);
  }
}

// Label statistics do not depend on the domain: compare the per-image class
// fractions of source-train and target-val with a two-sample z statistic.
TEST(Benchmark, SourceAndTargetShareLabelDistribution) {
  const int k = 5;
  const auto b = small_bench(7, {300, 1, 300, 1});
  auto moments = [&](const DatasetSplit& s) {
    std::vector<double> mean(k, 0.0), sq(k, 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto f = class_fractions(*s.at(i).labels, k);
      for (int c = 0; c < k; ++c) {
        mean[c] += f[c];
        sq[c] += f[c] * f[c];
      }
    }
    const double n = static_cast<double>(s.size());
    std::vector<double> var(k);
    for (int c = 0; c < k; ++c) {
      mean[c] /= n;
      var[c] = (sq[c] / n - mean[c] * mean[c]) / n;
    }
    return std::pair{mean, var};
  };
  const auto [ms, vs] = moments(b.source_train);
  const auto [mt, vt] = moments(b.target_val);
  double chi2 = 0.0;
  for (int c = 0; c < k; ++c) chi2 += (ms[c] - mt[c]) * (ms[c] - mt[c]) / (vs[c] + vt[c]);
  // 99.9% quantile of chi-square with 5 degrees of freedom.
  EXPECT_LT(chi2, 20.52);
}

TEST(Benchmark, WildImagesAreMuchDarkerThanSource) {
  const auto b = small_bench(7, {50, 1, 1, 50});
  auto mean = [](const DatasetSplit& s) {
    double sum = 0.0, n = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (float v : s.at(i).image.pixels) {
        sum += v;
        n += 1.0;
      }
    return sum / n;
  };
  EXPECT_GT(std::abs(mean(b.source_train) - mean(b.wild_val)), 0.1);
}

TEST(DatasetSplit, RejectsLabelsOnTargetTrain) {
  DatasetSplit s(SplitRole::kTargetTrain);
  DomainSample sample{"a", 0, Image(2, 2), SegmentationMap(2, 2, 0)};
  EXPECT_THROW(s.add(sample), DataError);
  sample.labels.reset();
  EXPECT_NO_THROW(s.add(sample));
}

TEST(DatasetSplit, LabelsMustMatchImageSize) {
  DatasetSplit s(SplitRole::kSourceTrain);
  DomainSample sample{"a", 0, Image(2, 2), SegmentationMap(2, 2, kIgnoreLabel)};
  EXPECT_NO_THROW(s.add(sample));
  sample.image = Image(3, 2);
  EXPECT_THROW(s.add(sample), DataError);
}

TEST(Storage, RoundTripIsExact) {
  const auto dir = scratch("roundtrip");
  const auto b = small_bench();
  save_benchmark(b, dir);
  EXPECT_TRUE(fs::exists(dir / "index.json"));
  EXPECT_TRUE(fs::exists(dir / "source-train" / "images"));
  EXPECT_FALSE(fs::exists(dir / "target-train" / "labels"));
  const auto r = load_benchmark(dir);
  // Generated images are already 8-bit quantized, so the round trip is exact.
  expect_same_split(b.source_train, r.source_train);
  expect_same_split(b.target_train, r.target_train);
  expect_same_split(b.target_val, r.target_val);
  expect_same_split(b.wild_val, r.wild_val);
  for (std::size_t i = 0; i < b.source_train.size(); ++i) EXPECT_EQ(b.source_train.seed(i), r.source_train.seed(i));
}

TEST(Storage, ImageRoundTripWithinQuantization) {
  const auto dir = scratch("png");
  Image img(3, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i) / 44.0f;
  write_image_png(dir / "x.png", img);
  const auto back = read_image_png(dir / "x.png");
  ASSERT_EQ(back.height, 3);
  ASSERT_EQ(back.width, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 0.5 / 255.0 + 1e-6);
}

TEST(Storage, LabelMapsRoundTrip) {
  const auto dir = scratch("labels");
  SegmentationMap a(4, 3, 0), b(4, 3, kIgnoreLabel);
  a.at(1, 2) = 4;
  b.at(0, 0) = 2;
  save_label_maps(dir, {"p", "q"}, {a, b});
  const auto back = load_label_maps(dir, {"p", "q"});
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], a);
  EXPECT_EQ(back[1], b);
  EXPECT_THROW(load_label_maps(dir, {"missing"}), std::exception);
}

TEST(Cityscapes, EmptyDirectoryGivesEmptySplit) {
  const auto dir = scratch("cs_empty");
  EXPECT_TRUE(load_cityscapes_layout(dir, "val", SplitRole::kTargetVal).empty());
}

TEST(Cityscapes, SelfRoundTripIsExact) {
  const auto dir = scratch("cs_roundtrip");
  const auto b = small_bench();
  save_cityscapes_layout(b.target_val, dir, "val");
  CityscapesOptions opt;
  opt.num_classes = 5;
  const auto r = load_cityscapes_layout(dir, "val", SplitRole::kTargetVal, opt);
  ASSERT_EQ(r.size(), b.target_val.size());
  std::set<std::string> ids;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const auto got = r.at(i);
    ids.insert(got.id);
    bool found = false;
    for (std::size_t j = 0; j < b.target_val.size(); ++j) {
      const auto want = b.target_val.at(j);
      if (want.id != got.id) continue;
      found = true;
      EXPECT_EQ(want.image, got.image);
      EXPECT_EQ(want.labels, got.labels);
    }
    EXPECT_TRUE(found) << got.id;
  }
  EXPECT_EQ(ids.size(), r.size());
}

TEST(Cityscapes, MissingLabelListsPath) {
  const auto dir = scratch("cs_missing");
  const auto b = small_bench();
  save_cityscapes_layout(b.target_val, dir, "val");
  std::string removed;
  for (const auto& e : fs::recursive_directory_iterator(dir / "gtFine")) {
    if (e.is_regular_file()) {
      removed = e.path().string();
      fs::remove(e.path());
      break;
    }
  }
  try {
    CityscapesOptions opt;
    opt.num_classes = 5;
    const auto s = load_cityscapes_layout(dir, "val", SplitRole::kTargetVal, opt);
    for (std::size_t i = 0; i < s.size(); ++i) s.at(i);
    FAIL() << "expected a missing-label error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(fs::path(removed).filename().string()), std::string::npos) << e.what();
  }
}

TEST(Cityscapes, UnknownClassIdIsAnError) {
  const auto dir = scratch("cs_unknown");
  DatasetSplit s(SplitRole::kTargetVal);
  SegmentationMap y(4, 4, 1);
  s.add({"img0", 0, Image(4, 4, 0.5f), y});
  save_cityscapes_layout(s, dir, "val");
  CityscapesOptions opt;
  opt.num_classes = 1;  // id 1 is now unknown
  EXPECT_THROW(
      {
        const auto r = load_cityscapes_layout(dir, "val", SplitRole::kTargetVal, opt);
        for (std::size_t i = 0; i < r.size(); ++i) r.at(i);
      },
      DataError);
}

TEST(Cityscapes, IgnoreOnlyLabelsLoad) {
  const auto dir = scratch("cs_ignore");
  DatasetSplit s(SplitRole::kTargetVal);
  s.add({"img0", 0, Image(4, 4, 0.5f), SegmentationMap(4, 4, kIgnoreLabel)});
  save_cityscapes_layout(s, dir, "val");
  const auto r = load_cityscapes_layout(dir, "val", SplitRole::kTargetVal);
  ASSERT_EQ(r.size(), 1u);
  const auto sample = r.at(0);
  for (auto l : sample.labels->labels) EXPECT_EQ(l, kIgnoreLabel);
}

TEST(Cityscapes, CenterCrop) {
  const auto dir = scratch("cs_crop");
  const auto b = small_bench();
  save_cityscapes_layout(b.target_val, dir, "val");
  CityscapesOptions opt;
  opt.num_classes = 5;
  opt.crop = std::pair{32, 48};
  const auto r = load_cityscapes_layout(dir, "val", SplitRole::kTargetVal, opt);
  const auto s = r.at(0);
  EXPECT_EQ(s.image.height, 32);
  EXPECT_EQ(s.image.width, 48);
  EXPECT_EQ(s.labels->height, 32);
  EXPECT_EQ(s.labels->width, 48);
}

TEST(Cityscapes, TargetTrainNeverCarriesLabels) {
  const auto dir = scratch("cs_target");
  const auto b = small_bench();
  save_cityscapes_layout(b.target_val, dir, "train");
  const auto r = load_cityscapes_layout(dir, "train", SplitRole::kTargetTrain);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_FALSE(r.at(i).labels.has_value());
}

TEST(Batches, WholeSplitInOneBatch) {
  const auto batches = iterate_batches(10, 10, 3);
  ASSERT_EQ(batches.size(), 1u);
  EXPECT_EQ(batches[0].size(), 10u);
}

TEST(Batches, SameSeedSameOrder) {
  EXPECT_EQ(iterate_batches(23, 4, 5), iterate_batches(23, 4, 5));
  EXPECT_NE(iterate_batches(23, 4, 5), iterate_batches(23, 4, 6));
  EXPECT_NE(iterate_batches(23, 4, 5, 0), iterate_batches(23, 4, 5, 1));
}

TEST(Batches, UnionCoversSplitExactlyOnceProperty) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t n = 1 + seed * 7 % 41, bs = 1 + seed % 6;
    const auto batches = iterate_batches(n, bs, seed);
    std::vector<int> hits(n, 0);
    for (std::size_t i = 0; i < batches.size(); ++i) {
      if (i + 1 < batches.size()) {
        EXPECT_EQ(batches[i].size(), bs);
      }
      for (auto idx : batches[i]) ++hits.at(idx);
    }
    EXPECT_EQ(batches.size(), (n + bs - 1) / bs);
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(Batches, RejectsZeroBatchSize) { EXPECT_THROW(iterate_batches(5, 0, 1), DataError); }

TEST(BatchSampler, StatelessAndCoversEachEpoch) {
  const BatchSampler s(10, 4, 9);
  EXPECT_EQ(s.batches_per_epoch(), 3u);
  EXPECT_EQ(s.batch(17), BatchSampler(10, 4, 9).batch(17));
  for (std::uint64_t epoch = 0; epoch < 5; ++epoch) {
    std::vector<int> hits(10, 0);
    for (std::uint64_t slot = 0; slot < 3; ++slot) {
      const auto b = s.batch(epoch * 3 + slot);
      EXPECT_EQ(b.size(), slot == 2 ? 2u : 4u);
      for (auto i : b) ++hits.at(i);
    }
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}
