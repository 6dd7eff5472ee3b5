#include "essuda/trainer/trainer.hpp"

#include <algorithm>
#include <map>

#include "essuda/autodiff/ops.hpp"
#include "essuda/dataio/batches.hpp"
#include "essuda/rng.hpp"

namespace essuda::trainer {

TrainingData prepare_training_data(const data::DatasetSplit& source, const data::DatasetSplit& target,
                                   const translate::Translator& translator, bool target_translations) {
  if (source.empty() || target.empty()) throw std::invalid_argument("training needs non-empty source and target splits");
  TrainingData d;
  for (std::size_t i = 0; i < source.size(); ++i) {
    auto s = source.at(i);
    if (!s.labels) throw data::DataError("source sample '" + s.id + "' has no labels");
    d.source_ids.push_back(s.id);
    d.source.push_back(translate::make_triple(s.image, translator));
    d.source_labels.push_back(std::move(*s.labels));
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto s = target.at(i);
    if (s.labels) throw data::DataError("target training sample '" + s.id + "' carries labels");
    translate::TranslationTriple t;
    if (target_translations) {
      t.t3 = translator.inverse(s.image);
      t.t2 = translator.forward(t.t3);
    }
    t.t1 = std::move(s.image);
    d.target_ids.push_back(s.id);
    d.target.push_back(std::move(t));
  }
  return d;
}

std::vector<int> head_routes(const RunConfig& config, long iteration) {
  switch (config.method) {
    case Method::kOurs: return {1, 2, 3};
    case Method::kSed: return {static_cast<int>(iteration % 3) + 1};
    case Method::kMtri: {
      const int r = config.mtri_representation;
      return {r, r, r};
    }
  }
  return {};
}

namespace {

constexpr std::uint64_t kSourceStream = 1;
constexpr std::uint64_t kTargetStream = 2;

void check_routes(const RunConfig& config, const std::vector<int>& routes, long iteration) {
  if (config.method != Method::kOurs) return;
  for (std::size_t k = 0; k < routes.size(); ++k) {
    if (routes[k] != static_cast<int>(k) + 1) {
      throw std::logic_error("routing violated at iteration " + std::to_string(iteration) + ": head " +
                             std::to_string(k + 1) + " fed representation " + std::to_string(routes[k]));
    }
  }
}

ad::Tensor<float> batch_tensor(const std::vector<translate::TranslationTriple>& triples,
                               const data::Batch& idx, int rep) {
  std::vector<const data::Image*> images;
  images.reserve(idx.size());
  for (auto i : idx) images.push_back(&triples[i].get(rep));
  return nets::images_to_tensor<float>(images);
}

void zero_all(const nets::SegmentationNetwork<float>& net) {
  for (auto& [name, t] : net.named_parameters()) t.zero_grad();
}

}  // namespace

Trainer::Trainer(TrainState& state, const TrainingData& data) : state_(state), data_(data) { bind(); }

void Trainer::bind() {
  net_opt_ = SgdMomentum<float>(state_.net.segmentation_parameters(), state_.config.momentum);
  disc_opt_ = SgdMomentum<float>(state_.net.discriminator_parameters(), state_.config.d_momentum);
  if (!state_.net_momentum.empty()) net_opt_.set_buffers(state_.net_momentum);
  if (!state_.disc_momentum.empty()) disc_opt_.set_buffers(state_.disc_momentum);
}

void Trainer::sync_state() {
  state_.net_momentum = net_opt_.buffers();
  state_.disc_momentum = disc_opt_.buffers();
}

void Trainer::reinitialize(std::uint64_t seed) {
  state_.net = nets::init_params<float>(state_.config.network, seed);
  state_.net_momentum.clear();
  state_.disc_momentum.clear();
  bind();
}

StepResult Trainer::step(losses::StageMode mode, long stage_iters,
                         const std::vector<data::SegmentationMap>* pseudo) {
  const RunConfig& cfg = state_.config;
  const long it = state_.iteration;
  if (it >= stage_iters) throw std::logic_error("stage already complete");
  const bool stage2 = mode == losses::StageMode::kStage2;
  if (stage2 && (pseudo == nullptr || pseudo->size() != data_.target.size())) {
    throw std::invalid_argument("stage 2 requires one pseudo-label map per target image");
  }
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const data::BatchSampler src_sampler(data_.source.size(), bs, derive_seed(state_.sampler_seed, {kSourceStream}));
  const data::BatchSampler tgt_sampler(data_.target.size(), bs, derive_seed(state_.sampler_seed, {kTargetStream}));
  const auto src_idx = src_sampler.batch(static_cast<std::uint64_t>(it));
  const auto tgt_idx = tgt_sampler.batch(static_cast<std::uint64_t>(it));

  StepResult result;
  result.lr = poly_lr(it, stage_iters, cfg.lr0, cfg.poly_power);
  result.routes = head_routes(cfg, it);
  check_routes(cfg, result.routes, it);

  std::vector<const data::SegmentationMap*> src_labels;
  for (auto i : src_idx) src_labels.push_back(&data_.source_labels[i]);
  std::vector<const data::SegmentationMap*> tgt_pseudo;
  if (stage2)
    for (auto i : tgt_idx) tgt_pseudo.push_back(&(*pseudo)[i]);

  const auto& net = state_.net;
  const bool adversarial = cfg.loss.lambda_adv > 0.0;
  const int align_rep = cfg.method == Method::kMtri ? cfg.mtri_representation : static_cast<int>(cfg.alignment_rep);
  const bool target_translated = stage2 && cfg.ssl_uses_translation;
  const bool need_target_heads = cfg.entropy_enabled || stage2;

  try {
    ad::Tensor<float> align_features, target_features;
    {
      ad::Tape<float> tape;
      ad::TapeScope<float> scope(tape);
      std::map<int, ad::Tensor<float>> src_feats, tgt_feats;
      for (int rep : result.routes)
        if (!src_feats.count(rep)) src_feats[rep] = net.encoder.forward(batch_tensor(data_.source, src_idx, rep));
      tgt_feats[1] = net.encoder.forward(batch_tensor(data_.target, tgt_idx, 1));
      if (target_translated)
        for (int rep : result.routes)
          if (!tgt_feats.count(rep)) tgt_feats[rep] = net.encoder.forward(batch_tensor(data_.target, tgt_idx, rep));

      losses::StageInputs<float> in;
      in.non_saturating = cfg.non_saturating;
      in.entropy_enabled = cfg.entropy_enabled;
      for (std::size_t h = 0; h < result.routes.size(); ++h) {
        const int rep = result.routes[h];
        losses::HeadTerms<float> terms;
        terms.source_probs = net.heads[h].forward(src_feats.at(rep)).probs;
        terms.source_labels = src_labels;
        if (need_target_heads) {
          terms.target_probs = net.heads[h].forward(tgt_feats.at(target_translated ? rep : 1)).probs;
          terms.pseudo_labels = tgt_pseudo;
        }
        in.heads.push_back(std::move(terms));
      }
      if (adversarial) in.d_logits_target = net.discriminator.forward(tgt_feats.at(1));
      if (cfg.method == Method::kMtri && cfg.discrepancy_weight > 0.0) {
        in.extra = losses::cosine_discrepancy(net.head_weights(0), net.head_weights(1));
        in.extra_weight = cfg.discrepancy_weight;
      }
      const auto losses = losses::stage_losses(mode, in, cfg.loss);
      tape.backward(losses.total);
      result.components = losses.components;
      if (adversarial) {
        if (src_feats.count(align_rep)) {
          align_features = src_feats.at(align_rep).detach();
        } else {
          ad::NoGradScope<float> no_grad;
          align_features = net.encoder.forward(batch_tensor(data_.source, src_idx, align_rep)).detach();
        }
        target_features = tgt_feats.at(1).detach();
      }
    }
    {
      ad::NoGradScope<float> no_grad;
      net_opt_.step(result.lr);
    }
    zero_all(net);

    if (adversarial) {
      ad::Tape<float> tape;
      ad::TapeScope<float> scope(tape);
      const auto d_loss = losses::discriminator_loss(net.discriminator.forward(align_features),
                                                     net.discriminator.forward(target_features));
      tape.backward(d_loss);
      result.components["adv_d"] = static_cast<double>(d_loss.item());
      {
        ad::NoGradScope<float> no_grad;
        disc_opt_.step(cfg.d_lr);
      }
      zero_all(net);
    }
  } catch (const ad::NumericError& e) {
    std::vector<std::string> sids, tids;
    for (auto i : src_idx) sids.push_back(data_.source_ids[i]);
    for (auto i : tgt_idx) tids.push_back(data_.target_ids[i]);
    throw TrainingError(std::string("non-finite value at iteration ") + std::to_string(it) + ": " + e.what(),
                        std::move(sids), std::move(tids), it);
  }
  ++state_.iteration;
  ++state_.global_iteration;
  return result;
}

}  // namespace essuda::trainer
