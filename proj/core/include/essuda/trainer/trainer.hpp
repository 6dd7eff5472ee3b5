#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "essuda/dataio/dataset.hpp"
#include "essuda/losses/losses.hpp"
#include "essuda/trainer/checkpoint.hpp"
#include "essuda/trainer/optim.hpp"
#include "essuda/translate/translator.hpp"

namespace essuda::trainer {

/// A training step failed; carries the ids of the offending batch.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::vector<std::string> source_ids,
                std::vector<std::string> target_ids, long iteration)
      : std::runtime_error(what),
        source_ids(std::move(source_ids)),
        target_ids(std::move(target_ids)),
        iteration(iteration) {}

  std::vector<std::string> source_ids;
  std::vector<std::string> target_ids;
  long iteration;
};

/// Training inputs held in memory. Source images come with their three
/// translations; target images with theirs only when SSL uses translation.
struct TrainingData {
  std::vector<std::string> source_ids;
  std::vector<translate::TranslationTriple> source;
  std::vector<data::SegmentationMap> source_labels;
  std::vector<std::string> target_ids;
  std::vector<translate::TranslationTriple> target;  // t1 always; t2, t3 only if requested

  const data::Image& target_image(std::size_t i) const { return target[i].t1; }
};

/// Target triples are (X_T, T(T^-1(X_T)), T^-1(X_T)). Throws if the target
/// split carries labels.
TrainingData prepare_training_data(const data::DatasetSplit& source, const data::DatasetSplit& target,
                                   const translate::Translator& translator, bool target_translations);

/// Which representation feeds each head for `method` at `iteration`
/// (1 = identity, 2 = reconstruction, 3 = target-styled).
std::vector<int> head_routes(const RunConfig& config, long iteration);

struct StepResult {
  std::map<std::string, double> components;
  double lr = 0.0;
  std::vector<int> routes;
};

/// Runs single iterations of stage 1 or stage 2 on a TrainState, alternating
/// one network update and one discriminator update.
class Trainer {
 public:
  Trainer(TrainState& state, const TrainingData& data);

  /// One iteration at state.iteration of a stage lasting `stage_iters`;
  /// advances the counters. `pseudo` holds one map per target image (stage 2).
  StepResult step(losses::StageMode mode, long stage_iters,
                  const std::vector<data::SegmentationMap>* pseudo = nullptr);

  /// Copies optimizer buffers into the state (before checkpointing).
  void sync_state();
  /// Fresh parameters and zeroed optimizer buffers.
  void reinitialize(std::uint64_t seed);

 private:
  void bind();

  TrainState& state_;
  const TrainingData& data_;
  SgdMomentum<float> net_opt_;
  SgdMomentum<float> disc_opt_;
};

}  // namespace essuda::trainer
