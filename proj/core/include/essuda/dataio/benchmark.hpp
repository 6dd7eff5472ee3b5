#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/dataio/dataset.hpp"

namespace essuda::data {

/// Scene layout parameters. Class 0 is ground, class 1 sky, classes >= 2 are
/// objects drawn as boxes, blobs or poles.
struct SceneSpec {
  std::uint64_t seed = 7;
  int num_classes = 5;
  int height = 64;
  int width = 64;
  int min_objects = 3;
  int max_objects = 7;
  int min_object_size = 8;
  int max_object_size = 28;
};

/// Appearance of one domain. Applied in order: class color with texture and
/// per-instance jitter, contrast/brightness, gamma, blur, noise, 8-bit
/// quantization.
struct DomainStyle {
  std::string name;
  std::vector<std::array<float, 3>> class_colors;
  float texture_amplitude = 0.25f;
  float instance_jitter = 0.06f;
  float contrast = 1.0f;
  float brightness = 0.0f;
  float gamma = 1.0f;
  int blur_radius = 0;
  float noise_sigma = 0.02f;

  bool operator==(const DomainStyle&) const = default;
};

struct BenchmarkStyles {
  DomainStyle source;
  DomainStyle target;
  DomainStyle wild;

  static BenchmarkStyles defaults(int num_classes);
};

struct SplitCounts {
  int source_train = 300;
  int target_train = 300;
  int target_val = 100;
  int wild_val = 100;
};

struct Benchmark {
  SceneSpec spec;
  DatasetSplit source_train{SplitRole::kSourceTrain};
  DatasetSplit target_train{SplitRole::kTargetTrain};
  DatasetSplit target_val{SplitRole::kTargetVal};
  DatasetSplit wild_val{SplitRole::kWildVal};

  const DatasetSplit& split(SplitRole role) const;
};

/// Label layout of one scene; depends only on the spec and `scene_seed`.
struct Scene {
  SegmentationMap labels;
  std::vector<int> instance;  // per-pixel instance index, 0 = background regions
  int num_instances = 0;
};

Scene generate_scene(const SceneSpec& spec, std::uint64_t scene_seed);
Image render_scene(const Scene& scene, const DomainStyle& style, std::uint64_t render_seed);

/// Builds all four splits. Sample seeds derive from spec.seed and the split
/// role, so the result is a pure function of the arguments.
Benchmark generate_benchmark(const SceneSpec& spec, const BenchmarkStyles& styles,
                             const SplitCounts& counts);

void to_json(nlohmann::json& j, const SceneSpec& spec);
void from_json(const nlohmann::json& j, SceneSpec& spec);
void to_json(nlohmann::json& j, const SplitCounts& counts);
void from_json(const nlohmann::json& j, SplitCounts& counts);

}  // namespace essuda::data
