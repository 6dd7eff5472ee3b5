#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/dataio/benchmark.hpp"
#include "essuda/trainer/checkpoint.hpp"
#include "essuda/trainer/config.hpp"

namespace essuda::trainer {

struct PipelineOptions {
  std::filesystem::path run_dir;
  /// Continue from this checkpoint instead of starting fresh; its stored
  /// config takes precedence.
  std::optional<std::filesystem::path> resume;
  /// Save checkpoints/latest.ckpt and return once this many iterations have
  /// completed in total (negative: never).
  long halt_at_iteration = -1;
  /// Return after stage 1, the source meta fit and the first pseudo-labels.
  bool stop_after_stage1 = false;
  /// Progress lines; nullptr keeps quiet.
  std::ostream* log = nullptr;
};

struct PipelineResult {
  bool halted = false;
  TrainState state;
  std::filesystem::path last_checkpoint;

  /// Evaluation records, one per (stage/round, split).
  const nlohmann::json& history() const { return state.history; }
  /// mIoU (in [0, 1]) of `head` on `split` after `round` (0 = stage 1).
  std::optional<double> miou(int round, const std::string& split, const std::string& head) const;
  int rounds_completed() const;
};

/// Benchmark from config.data_dir, or generated from config.scene/counts.
data::Benchmark load_or_generate_benchmark(const RunConfig& config);

/// Stage 1, meta fit on source predictions, pseudo-labels, then SSL rounds
/// (stage 2, meta refit, new pseudo-labels, evaluation) until the C_m gap
/// falls below stop_gap or max_rounds is reached. Baselines stop after
/// stage 1. Layout under run_dir: config.json, metrics.jsonl,
/// checkpoints/*.ckpt, pseudo/round_<i>/, eval/*.json, weights/*.csv.
PipelineResult run_full_pipeline(const RunConfig& config, const data::Benchmark& bench,
                                 const PipelineOptions& options);

}  // namespace essuda::trainer
