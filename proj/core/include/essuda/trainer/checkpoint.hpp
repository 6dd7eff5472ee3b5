#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/ensemble/meta_learner.hpp"
#include "essuda/nets/networks.hpp"
#include "essuda/trainer/config.hpp"
#include "essuda/translate/translator.hpp"

namespace essuda::trainer {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Phase { kStage1, kSsl, kDone };

std::string_view to_string(Phase p);
Phase parse_phase(std::string_view name);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to continue a run at an iteration boundary.
struct TrainState {
  RunConfig config;
  Phase phase = Phase::kStage1;
  int round = 0;               // SSL round in progress (1-based) while phase == kSsl
  long iteration = 0;          // completed iterations of the current stage
  long global_iteration = 0;   // completed iterations over the whole run
  nets::SegmentationNetwork<float> net;
  std::vector<std::vector<float>> net_momentum;   // aligned with net.segmentation_parameters()
  std::vector<std::vector<float>> disc_momentum;  // aligned with net.discriminator_parameters()
  std::optional<ensemble::MetaWeights> meta;
  translate::AffineColorTranslator translator;
  /// Batch samplers are pure functions of (seed, iteration); this is the seed
  /// of the stage in progress.
  std::uint64_t sampler_seed = 0;
  /// Length of metrics.jsonl when the state was captured.
  std::uint64_t metrics_offset = 0;
  /// Evaluation records produced so far.
  nlohmann::json history = nlohmann::json::array();
};

/// Layout: "ESSUDACK", u32 version, u64 header size, JSON header (config,
/// counters, tensor table), raw little-endian f32 payload, u64 FNV-1a of all
/// preceding bytes. Written to a temporary file and renamed into place.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

/// Strict: wrong magic, version, checksum or tensor table throws
/// CheckpointError and nothing is returned.
TrainState load_checkpoint(const std::filesystem::path& path);

/// As above, and additionally requires the stored network to match `expected`;
/// the error names the first differing field.
TrainState load_checkpoint(const std::filesystem::path& path, const nets::NetworkConfig& expected);

}  // namespace essuda::trainer
