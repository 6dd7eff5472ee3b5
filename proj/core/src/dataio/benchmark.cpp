#include "essuda/dataio/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "essuda/rng.hpp"

namespace essuda::data {
namespace {

constexpr std::array<std::array<float, 3>, 5> kBasePalette = {{
    {0.42f, 0.38f, 0.34f},  // ground
    {0.52f, 0.68f, 0.86f},  // sky
    {0.72f, 0.30f, 0.26f},  // box
    {0.28f, 0.56f, 0.30f},  // blob
    {0.84f, 0.78f, 0.30f},  // pole
}};

std::vector<std::array<float, 3>> base_palette(int num_classes) {
  std::vector<std::array<float, 3>> colors;
  std::mt19937_64 rng(derive_seed(0xC010u, {static_cast<std::uint64_t>(num_classes)}));
  std::uniform_real_distribution<float> u(0.15f, 0.85f);
  for (int c = 0; c < num_classes; ++c) {
    if (c < static_cast<int>(kBasePalette.size())) {
      colors.push_back(kBasePalette[c]);
    } else {
      colors.push_back({u(rng), u(rng), u(rng)});
    }
  }
  return colors;
}

std::vector<std::array<float, 3>> mix_palette(const std::vector<std::array<float, 3>>& colors,
                                              const std::array<std::array<float, 3>, 3>& m,
                                              const std::array<float, 3>& offset) {
  std::vector<std::array<float, 3>> out;
  for (const auto& c : colors) {
    std::array<float, 3> v{};
    for (int r = 0; r < 3; ++r) {
      v[r] = std::clamp(m[r][0] * c[0] + m[r][1] * c[1] + m[r][2] * c[2] + offset[r], 0.0f, 1.0f);
    }
    out.push_back(v);
  }
  return out;
}

float texture(int cls, int x, int y, int height) {
  constexpr float kTwoPi = 2.0f * std::numbers::pi_v<float>;
  if (cls == 0) return std::sin(kTwoPi * static_cast<float>(y) / 6.0f);
  if (cls == 1) return 2.0f * static_cast<float>(y) / static_cast<float>(height) - 1.0f;
  const int kind = (cls - 2) % 3;
  const int variant = (cls - 2) / 3;
  switch (kind) {
    case 0: {
      const int cell = 2 + variant;
      return ((x / cell + y / cell) & 1) ? 1.0f : -1.0f;
    }
    case 1:
      return std::sin(kTwoPi * static_cast<float>(x + y) / (5.0f + variant));
    default:
      return std::sin(kTwoPi * static_cast<float>(x) / (3.0f + variant));
  }
}

void box_blur(Image& image, int radius) {
  if (radius <= 0) return;
  const int h = image.height, w = image.width;
  Image tmp(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        float acc = 0.0f;
        for (int d = -radius; d <= radius; ++d) acc += image.at(y, std::clamp(x + d, 0, w - 1), c);
        tmp.at(y, x, c) = acc / static_cast<float>(2 * radius + 1);
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        float acc = 0.0f;
        for (int d = -radius; d <= radius; ++d) acc += tmp.at(std::clamp(y + d, 0, h - 1), x, c);
        image.at(y, x, c) = acc / static_cast<float>(2 * radius + 1);
      }
    }
  }
}

std::uint64_t role_tag(SplitRole role) { return static_cast<std::uint64_t>(role) + 1; }

}  // namespace

BenchmarkStyles BenchmarkStyles::defaults(int num_classes) {
  BenchmarkStyles s;
  const auto palette = base_palette(num_classes);

  s.source.name = "source";
  s.source.class_colors = palette;

  // The target mixes channels (not representable by a per-channel affine
  // map), raises contrast and applies a gamma curve, blur and heavier noise.
  s.target.name = "target";
  s.target.class_colors = mix_palette(palette,
                                      {{{0.55f, 0.15f, 0.30f},
                                        {0.30f, 0.55f, 0.15f},
                                        {0.15f, 0.30f, 0.55f}}},
                                      {0.06f, 0.02f, -0.04f});
  s.target.contrast = 1.5f;
  s.target.brightness = 0.04f;
  s.target.gamma = 1.3f;
  s.target.blur_radius = 1;
  s.target.noise_sigma = 0.04f;

  s.wild.name = "wild";
  s.wild.class_colors = mix_palette(palette,
                                    {{{0.40f, 0.35f, 0.25f},
                                      {0.20f, 0.45f, 0.35f},
                                      {0.35f, 0.20f, 0.45f}}},
                                    {0.0f, 0.05f, 0.08f});
  s.wild.contrast = 1.6f;
  s.wild.brightness = -0.02f;
  s.wild.gamma = 2.2f;
  s.wild.blur_radius = 0;
  s.wild.noise_sigma = 0.05f;
  return s;
}

const DatasetSplit& Benchmark::split(SplitRole role) const {
  switch (role) {
    case SplitRole::kSourceTrain: return source_train;
    case SplitRole::kTargetTrain: return target_train;
    case SplitRole::kTargetVal: return target_val;
    case SplitRole::kWildVal: return wild_val;
  }
  throw DataError("unknown split role");
}

Scene generate_scene(const SceneSpec& spec, std::uint64_t scene_seed) {
  if (spec.num_classes < 2 || spec.num_classes > 254) {
    throw DataError("num_classes must lie in [2, 254]");
  }
  if (spec.height < 4 || spec.width < 4) throw DataError("scene must be at least 4x4");
  std::mt19937_64 rng(scene_seed);
  const int h = spec.height, w = spec.width;
  Scene scene;
  scene.labels = SegmentationMap(h, w, 0);
  scene.instance.assign(static_cast<std::size_t>(h) * w, 0);

  std::uniform_int_distribution<int> horizon_dist(h * 3 / 10, h * 6 / 10);
  const int horizon = horizon_dist(rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      scene.labels.at(y, x) = y < horizon ? 1 : 0;
      scene.instance[static_cast<std::size_t>(y) * w + x] = y < horizon ? 1 : 0;
    }
  scene.num_instances = 2;
  if (spec.num_classes == 2) return scene;

  std::uniform_int_distribution<int> count_dist(spec.min_objects, spec.max_objects);
  std::uniform_int_distribution<int> class_dist(2, spec.num_classes - 1);
  std::uniform_int_distribution<int> size_dist(spec.min_object_size, spec.max_object_size);
  std::uniform_int_distribution<int> cx_dist(0, w - 1);
  std::uniform_int_distribution<int> cy_dist(h / 5, h - 1);
  const int objects = count_dist(rng);
  for (int i = 0; i < objects; ++i) {
    const int cls = class_dist(rng);
    const int size = size_dist(rng);
    const int aspect = size_dist(rng);
    const int cx = cx_dist(rng);
    const int cy = cy_dist(rng);
    const int inst = scene.num_instances++;
    const int kind = (cls - 2) % 3;
    int half_w = std::max(2, size / 2);
    int half_h = std::max(2, aspect / 2);
    if (kind == 2) {
      half_w = std::max(1, size / 10);
      half_h = std::max(4, (size + aspect) / 2);
    }
    for (int y = std::max(0, cy - half_h); y <= std::min(h - 1, cy + half_h); ++y) {
      for (int x = std::max(0, cx - half_w); x <= std::min(w - 1, cx + half_w); ++x) {
        bool inside = true;
        if (kind == 1) {
          const float dx = static_cast<float>(x - cx) / static_cast<float>(half_w);
          const float dy = static_cast<float>(y - cy) / static_cast<float>(half_h);
          inside = dx * dx + dy * dy <= 1.0f;
        }
        if (inside) {
          scene.labels.at(y, x) = static_cast<std::uint8_t>(cls);
          scene.instance[static_cast<std::size_t>(y) * w + x] = inst;
        }
      }
    }
  }
  return scene;
}

Image render_scene(const Scene& scene, const DomainStyle& style, std::uint64_t render_seed) {
  const int h = scene.labels.height, w = scene.labels.width;
  if (style.class_colors.empty()) throw DataError("style '" + style.name + "' has no class colors");
  std::mt19937_64 rng(render_seed);
  std::uniform_real_distribution<float> jitter(-style.instance_jitter, style.instance_jitter);
  std::vector<std::array<float, 3>> offsets(static_cast<std::size_t>(scene.num_instances));
  for (auto& o : offsets) o = {jitter(rng), jitter(rng), jitter(rng)};

  Image image(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int cls = scene.labels.at(y, x);
      if (cls >= static_cast<int>(style.class_colors.size())) {
        throw DataError("style '" + style.name + "' has no color for class " + std::to_string(cls));
      }
      const auto& base = style.class_colors[cls];
      const float tex = texture(cls, x, y, h);
      const auto& off = offsets[scene.instance[static_cast<std::size_t>(y) * w + x]];
      for (int c = 0; c < 3; ++c) {
        float v = base[c] * (1.0f + style.texture_amplitude * tex) + off[c];
        v = (v - 0.5f) * style.contrast + 0.5f + style.brightness;
        v = std::pow(std::clamp(v, 0.0f, 1.0f), style.gamma);
        image.at(y, x, c) = v;
      }
    }
  }
  box_blur(image, style.blur_radius);
  if (style.noise_sigma > 0.0f) {
    std::normal_distribution<float> noise(0.0f, style.noise_sigma);
    for (auto& v : image.pixels) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
  }
  quantize_8bit(image);
  return image;
}

Benchmark generate_benchmark(const SceneSpec& spec, const BenchmarkStyles& styles,
                             const SplitCounts& counts) {
  if (counts.source_train < 1 || counts.target_train < 1 || counts.target_val < 1 ||
      counts.wild_val < 1) {
    throw DataError("every split count must be >= 1");
  }
  if (styles.source == styles.target || styles.source == styles.wild ||
      styles.target == styles.wild) {
    throw DataError("source, target and wild styles must be pairwise distinct");
  }
  Benchmark bench;
  bench.spec = spec;
  auto fill = [&](DatasetSplit& split, int count, const DomainStyle& style) {
    const SplitRole role = split.role();
    for (int i = 0; i < count; ++i) {
      const std::uint64_t sample_seed =
          derive_seed(spec.seed, {role_tag(role), static_cast<std::uint64_t>(i)});
      Scene scene = generate_scene(spec, sample_seed);
      DomainSample sample;
      sample.id = std::string(to_string(role)) + "_" + std::to_string(i);
      sample.seed = sample_seed;
      sample.image = render_scene(scene, style, derive_seed(sample_seed, {0x5717u}));
      if (role_is_labeled(role)) sample.labels = std::move(scene.labels);
      split.add(std::move(sample));
    }
  };
  fill(bench.source_train, counts.source_train, styles.source);
  fill(bench.target_train, counts.target_train, styles.target);
  fill(bench.target_val, counts.target_val, styles.target);
  fill(bench.wild_val, counts.wild_val, styles.wild);
  return bench;
}

void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = nlohmann::json{{"seed", s.seed},
                     {"num_classes", s.num_classes},
                     {"height", s.height},
                     {"width", s.width},
                     {"min_objects", s.min_objects},
                     {"max_objects", s.max_objects},
                     {"min_object_size", s.min_object_size},
                     {"max_object_size", s.max_object_size}};
}

void from_json(const nlohmann::json& j, SceneSpec& s) {
  SceneSpec d;
  s.seed = j.value("seed", d.seed);
  s.num_classes = j.value("num_classes", d.num_classes);
  s.height = j.value("height", d.height);
  s.width = j.value("width", d.width);
  s.min_objects = j.value("min_objects", d.min_objects);
  s.max_objects = j.value("max_objects", d.max_objects);
  s.min_object_size = j.value("min_object_size", d.min_object_size);
  s.max_object_size = j.value("max_object_size", d.max_object_size);
}

void to_json(nlohmann::json& j, const SplitCounts& c) {
  j = nlohmann::json{{"source_train", c.source_train},
                     {"target_train", c.target_train},
                     {"target_val", c.target_val},
                     {"wild_val", c.wild_val}};
}

void from_json(const nlohmann::json& j, SplitCounts& c) {
  SplitCounts d;
  c.source_train = j.value("source_train", d.source_train);
  c.target_train = j.value("target_train", d.target_train);
  c.target_val = j.value("target_val", d.target_val);
  c.wild_val = j.value("wild_val", d.wild_val);
}

}  // namespace essuda::data
