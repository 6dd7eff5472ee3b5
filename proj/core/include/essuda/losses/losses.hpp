#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/autodiff/tensor.hpp"
#include "essuda/dataio/image.hpp"

namespace essuda::losses {

using ad::Tensor;

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kCharbonnierEps = 1e-3;

struct LossWeights {
  double lambda_adv = 0.001;
  double lambda_ent = 0.005;
  double eta = 2.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

template <typename T>
struct SegLoss {
  Tensor<T> value;            // scalar
  std::size_t counted = 0;    // non-ignored pixels
  bool all_ignored() const { return counted == 0; }
};

/// Mean of -log p[target] over non-ignored pixels. `probs` is N x K x H x W,
/// `targets` holds one map per image. All-ignored input yields 0 with no
/// gradient path.
template <typename T>
SegLoss<T> seg_cross_entropy(const Tensor<T>& probs, const std::vector<const data::SegmentationMap*>& targets);

template <typename T>
SegLoss<T> seg_cross_entropy(const Tensor<T>& probs, const std::vector<data::SegmentationMap>& targets);

template <typename T>
struct AdversarialLosses {
  Tensor<T> d_loss;
  Tensor<T> g_loss;
};

/// Discriminator objective: source-side (translated) features are labelled 1,
/// target features 0.
template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& d_logits_source, const Tensor<T>& d_logits_target);

/// Generator objective on target logits. Non-saturating: -mean log sigma(d);
/// minimax: mean log(1 - sigma(d)).
template <typename T>
Tensor<T> generator_loss(const Tensor<T>& d_logits_target, bool non_saturating = true);

template <typename T>
AdversarialLosses<T> adversarial_losses(const Tensor<T>& d_logits_source,
                                        const Tensor<T>& d_logits_target,
                                        bool non_saturating = true);

/// Mean over pixels of ((h / log K)^2 + 0.001^2)^eta where h is the Shannon
/// entropy of the per-pixel distribution along axis 1.
template <typename T>
Tensor<T> entropy_charbonnier(const Tensor<T>& probs, T eta);

/// |<v1, v2>| / (|v1| |v2|) over two parameter sets flattened in order.
template <typename T>
Tensor<T> cosine_discrepancy(const std::vector<Tensor<T>>& params_a,
                             const std::vector<Tensor<T>>& params_b);

enum class StageMode { kStage1, kStage2 };

/// Per-head terms entering the stage objectives.
template <typename T>
struct HeadTerms {
  Tensor<T> source_probs;                                   // C_k on its routed representation
  std::vector<const data::SegmentationMap*> source_labels;  // Y_S
  Tensor<T> target_probs;                                   // C_k(E(X_T))
  std::vector<const data::SegmentationMap*> pseudo_labels;  // stage 2 only
};

template <typename T>
struct StageInputs {
  std::vector<HeadTerms<T>> heads;
  Tensor<T> d_logits_target;  // discriminator on live target features (generator side)
  Tensor<T> d_logits_source;  // optional: detached source features, for reporting d_loss
  Tensor<T> extra;            // optional additional weighted term (e.g. discrepancy)
  double extra_weight = 0.0;
  std::string extra_name = "discrepancy";
  bool non_saturating = true;
  bool entropy_enabled = true;
};

template <typename T>
struct StageLosses {
  Tensor<T> total;   // network objective
  Tensor<T> d_loss;  // undefined unless d_logits_source was given
  /// Every component (unweighted) plus "total", as plain numbers.
  std::map<std::string, double> components;
  /// Sum of weighted components recomputed from `components`.
  double weighted_sum = 0.0;
};

/// total = sum_k [ seg(C_k(E(X^{T_k}_S)), Y_S) + lambda_ent ent(C_k(E(X_T)))
///                 + seg(C_k(E(X_T)), pseudo) (stage 2) ]
///         + lambda_adv * g_loss + extra_weight * extra
/// The adversarial term does not depend on k and enters once.
template <typename T>
StageLosses<T> stage_losses(StageMode mode, const StageInputs<T>& inputs, const LossWeights& weights);

}  // namespace essuda::losses
