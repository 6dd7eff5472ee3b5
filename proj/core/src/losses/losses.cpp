#include "essuda/losses/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "essuda/autodiff/ops.hpp"

namespace essuda::losses {

void LossWeights::validate() const {
  if (lambda_adv < 0.0 || lambda_ent < 0.0 || eta < 0.0) {
    throw std::invalid_argument("loss weights lambda_adv, lambda_ent and eta must be >= 0");
  }
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"lambda_adv", w.lambda_adv}, {"lambda_ent", w.lambda_ent}, {"eta", w.eta}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  LossWeights d;
  w.lambda_adv = j.value("lambda_adv", d.lambda_adv);
  w.lambda_ent = j.value("lambda_ent", d.lambda_ent);
  w.eta = j.value("eta", d.eta);
}

template <typename T>
SegLoss<T> seg_cross_entropy(const Tensor<T>& probs,
                             const std::vector<const data::SegmentationMap*>& targets) {
  if (probs.rank() != 4 || probs.dim(0) != targets.size()) {
    throw ad::ShapeError("seg_cross_entropy: probabilities " + ad::shape_str(probs.shape()) +
                         " do not match " + std::to_string(targets.size()) + " target maps");
  }
  const std::size_t n = probs.dim(0), k = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  const std::size_t plane = h * w;
  std::vector<T> mask(probs.numel(), T(0));
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = *targets[i];
    if (static_cast<std::size_t>(t.height) != h || static_cast<std::size_t>(t.width) != w) {
      throw ad::ShapeError("seg_cross_entropy: target map " + std::to_string(t.height) + "x" +
                           std::to_string(t.width) + " does not match prediction " +
                           ad::shape_str(probs.shape()));
    }
    for (std::size_t p = 0; p < plane; ++p) {
      const std::uint8_t label = t.labels[p];
      if (label == data::kIgnoreLabel) continue;
      if (label >= k) {
        throw std::invalid_argument("seg_cross_entropy: label " + std::to_string(label) +
                                    " outside [0, " + std::to_string(k) + ")");
      }
      mask[(i * k + label) * plane + p] = T(1);
      ++counted;
    }
  }
  SegLoss<T> out;
  out.counted = counted;
  if (counted == 0) {
    out.value = Tensor<T>::scalar(T(0));
    return out;
  }
  const Tensor<T> mask_t(probs.shape(), std::move(mask));
  const auto logp = ad::log(ad::clamp_min(probs, static_cast<T>(kProbFloor)), "seg_cross_entropy");
  out.value = ad::scale(ad::reduce_sum(ad::mul(mask_t, logp)), T(-1) / static_cast<T>(counted));
  return out;
}

template <typename T>
SegLoss<T> seg_cross_entropy(const Tensor<T>& probs, const std::vector<data::SegmentationMap>& targets) {
  std::vector<const data::SegmentationMap*> ptrs;
  for (const auto& t : targets) ptrs.push_back(&t);
  return seg_cross_entropy(probs, ptrs);
}

template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& d_logits_source, const Tensor<T>& d_logits_target) {
  const T floor = static_cast<T>(kProbFloor);
  const auto log_real = ad::log(ad::clamp_min(ad::sigmoid(d_logits_source), floor), "d_loss/source");
  const auto log_fake =
      ad::log(ad::clamp_min(ad::sigmoid(ad::scale(d_logits_target, T(-1))), floor), "d_loss/target");
  return ad::scale(ad::add(ad::reduce_mean(log_real), ad::reduce_mean(log_fake)), T(-1));
}

template <typename T>
Tensor<T> generator_loss(const Tensor<T>& d_logits_target, bool non_saturating) {
  const T floor = static_cast<T>(kProbFloor);
  if (non_saturating) {
    return ad::scale(
        ad::reduce_mean(ad::log(ad::clamp_min(ad::sigmoid(d_logits_target), floor), "g_loss")), T(-1));
  }
  return ad::reduce_mean(
      ad::log(ad::clamp_min(ad::sigmoid(ad::scale(d_logits_target, T(-1))), floor), "g_loss"));
}

template <typename T>
AdversarialLosses<T> adversarial_losses(const Tensor<T>& d_logits_source,
                                        const Tensor<T>& d_logits_target, bool non_saturating) {
  return {discriminator_loss(d_logits_source, d_logits_target),
          generator_loss(d_logits_target, non_saturating)};
}

template <typename T>
Tensor<T> entropy_charbonnier(const Tensor<T>& probs, T eta) {
  if (probs.rank() < 2 || probs.dim(1) < 2) {
    throw ad::ShapeError("entropy_charbonnier: need at least two classes along axis 1, got " +
                         ad::shape_str(probs.shape()));
  }
  if (!(eta > T(0))) throw std::invalid_argument("entropy_charbonnier: eta must be > 0");
  const T inv_log_k = T(1) / std::log(static_cast<T>(probs.dim(1)));
  const auto logp = ad::log(ad::clamp_min(probs, static_cast<T>(kProbFloor)), "entropy");
  const auto neg_h = ad::reduce_sum(ad::mul(probs, logp), {1});
  const auto h_norm = ad::scale(neg_h, -inv_log_k);
  const auto phi = ad::pow(
      ad::add_scalar(ad::mul(h_norm, h_norm), static_cast<T>(kCharbonnierEps * kCharbonnierEps)), eta);
  return ad::reduce_mean(phi);
}

template <typename T>
Tensor<T> cosine_discrepancy(const std::vector<Tensor<T>>& params_a,
                             const std::vector<Tensor<T>>& params_b) {
  if (params_a.size() != params_b.size() || params_a.empty()) {
    throw ad::ShapeError("cosine_discrepancy: parameter sets differ in length");
  }
  Tensor<T> dot, na, nb;
  for (std::size_t i = 0; i < params_a.size(); ++i) {
    if (params_a[i].numel() != params_b[i].numel()) {
      throw ad::ShapeError("cosine_discrepancy: parameter " + std::to_string(i) + " has shape " +
                           ad::shape_str(params_a[i].shape()) + " vs " +
                           ad::shape_str(params_b[i].shape()));
    }
    const auto a = ad::flatten(params_a[i]);
    const auto b = ad::flatten(params_b[i]);
    const auto d = ad::reduce_sum(ad::mul(a, b));
    const auto sa = ad::reduce_sum(ad::mul(a, a));
    const auto sb = ad::reduce_sum(ad::mul(b, b));
    dot = dot.defined() ? ad::add(dot, d) : d;
    na = na.defined() ? ad::add(na, sa) : sa;
    nb = nb.defined() ? ad::add(nb, sb) : sb;
  }
  if (na.item() == T(0) || nb.item() == T(0)) {
    throw std::invalid_argument("cosine_discrepancy: zero-norm parameter vector");
  }
  return ad::abs(ad::div(dot, ad::pow(ad::mul(na, nb), T(0.5))));
}

template <typename T>
StageLosses<T> stage_losses(StageMode mode, const StageInputs<T>& inputs, const LossWeights& weights) {
  weights.validate();
  if (inputs.heads.empty()) throw std::invalid_argument("stage_losses: no classifier heads");
  StageLosses<T> out;
  double weighted = 0.0;
  Tensor<T> total;
  auto accumulate = [&](const Tensor<T>& term, double w) {
    const auto scaled = ad::scale(term, static_cast<T>(w));
    total = total.defined() ? ad::add(total, scaled) : scaled;
  };

  for (std::size_t k = 0; k < inputs.heads.size(); ++k) {
    const auto& head = inputs.heads[k];
    const std::string tag = std::to_string(k + 1);
    if (head.source_probs.defined()) {
      const auto seg = seg_cross_entropy(head.source_probs, head.source_labels);
      out.components["seg_src_" + tag] = static_cast<double>(seg.value.item());
      weighted += out.components["seg_src_" + tag];
      accumulate(seg.value, 1.0);
    }
    if (inputs.entropy_enabled && head.target_probs.defined()) {
      const auto ent = entropy_charbonnier(head.target_probs, static_cast<T>(weights.eta));
      out.components["ent_" + tag] = static_cast<double>(ent.item());
      weighted += weights.lambda_ent * out.components["ent_" + tag];
      accumulate(ent, weights.lambda_ent);
    }
    if (mode == StageMode::kStage2) {
      if (head.pseudo_labels.empty() || !head.target_probs.defined()) {
        throw std::invalid_argument("stage_losses: stage 2 requires pseudo-labels for every head");
      }
      const auto seg = seg_cross_entropy(head.target_probs, head.pseudo_labels);
      out.components["seg_pseudo_" + tag] = static_cast<double>(seg.value.item());
      weighted += out.components["seg_pseudo_" + tag];
      accumulate(seg.value, 1.0);
    }
  }
  if (inputs.d_logits_target.defined()) {
    const auto g = generator_loss(inputs.d_logits_target, inputs.non_saturating);
    out.components["adv_g"] = static_cast<double>(g.item());
    weighted += weights.lambda_adv * out.components["adv_g"];
    accumulate(g, weights.lambda_adv);
  }
  if (inputs.extra.defined()) {
    out.components[inputs.extra_name] = static_cast<double>(inputs.extra.item());
    weighted += inputs.extra_weight * out.components[inputs.extra_name];
    accumulate(inputs.extra, inputs.extra_weight);
  }
  if (inputs.d_logits_source.defined() && inputs.d_logits_target.defined()) {
    out.d_loss = discriminator_loss(inputs.d_logits_source.detach(), inputs.d_logits_target.detach());
    out.components["adv_d"] = static_cast<double>(out.d_loss.item());
  }
  out.total = total;
  out.components["total"] = static_cast<double>(total.item());
  out.weighted_sum = weighted;
  return out;
}

#define ESSUDA_INSTANTIATE_LOSSES(T)                                                                 \
  template SegLoss<T> seg_cross_entropy(const Tensor<T>&,                                            \
                                        const std::vector<const data::SegmentationMap*>&);           \
  template SegLoss<T> seg_cross_entropy(const Tensor<T>&, const std::vector<data::SegmentationMap>&); \
  template Tensor<T> discriminator_loss(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> generator_loss(const Tensor<T>&, bool);                                         \
  template AdversarialLosses<T> adversarial_losses(const Tensor<T>&, const Tensor<T>&, bool);        \
  template Tensor<T> entropy_charbonnier(const Tensor<T>&, T);                                       \
  template Tensor<T> cosine_discrepancy(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&); \
  template StageLosses<T> stage_losses(StageMode, const StageInputs<T>&, const LossWeights&);

ESSUDA_INSTANTIATE_LOSSES(float)
ESSUDA_INSTANTIATE_LOSSES(double)

#undef ESSUDA_INSTANTIATE_LOSSES

}  // namespace essuda::losses
