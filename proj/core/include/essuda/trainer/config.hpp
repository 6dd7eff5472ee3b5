#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "essuda/dataio/benchmark.hpp"
#include "essuda/ensemble/meta_learner.hpp"
#include "essuda/ensemble/pseudo_labels.hpp"
#include "essuda/losses/losses.hpp"
#include "essuda/nets/networks.hpp"
#include "essuda/translate/translator.hpp"

namespace essuda::trainer {

/// Invalid or inconsistent run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Method { kOurs, kSed, kMtri };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct RunConfig {
  std::uint64_t seed = 0;
  Method method = Method::kOurs;
  losses::LossWeights loss;

  double lr0 = 2.5e-4;
  double poly_power = 0.9;
  double momentum = 0.9;
  double d_lr = 1e-5;
  double d_momentum = 0.9;
  int batch_size = 4;
  int stage1_iters = 3000;
  int ssl_iters_per_round = 2000;
  int max_rounds = 2;
  /// Early stop once mIoU(C_m) - max_k mIoU(C_k) on target-val drops below
  /// this many mIoU points. Negative values only stop when C_m trails the
  /// best head by more than that.
  double stop_gap = 0.3;

  ensemble::PseudoLabelConfig pseudo;
  ensemble::MetaFitOptions meta;

  bool entropy_enabled = true;
  bool ssl_uses_translation = false;
  bool retrain_from_scratch = false;
  bool non_saturating = true;

  /// MTri baseline: weight of the cosine discrepancy and its single input
  /// representation (1 = raw source).
  double discrepancy_weight = 1.0;
  int mtri_representation = 1;
  translate::AlignmentRep alignment_rep = translate::AlignmentRep::kTargetStyled;

  nets::NetworkConfig network;

  /// Benchmark generated in memory when `data_dir` is empty.
  data::SceneSpec scene;
  data::SplitCounts counts;
  std::string data_dir;

  int log_every = 50;
  int checkpoint_every = 500;
  int eval_batch = 16;

  void validate() const;
  int num_heads() const { return method == Method::kSed ? 1 : 3; }
  /// Short hex digest of the canonical JSON form.
  std::string fingerprint() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Unknown keys are rejected with ConfigError.
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace essuda::trainer
