#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/dataio/image.hpp"

namespace essuda::translate {

using data::Image;

/// Image-to-image model between the source and target appearance. Any learned
/// model can stand in as long as it provides both directions.
class Translator {
 public:
  virtual ~Translator() = default;
  /// Source appearance to target appearance.
  virtual Image forward(const Image& image) const = 0;
  /// Target appearance back to source appearance.
  virtual Image inverse(const Image& image) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

struct ChannelMap {
  double scale = 1.0;
  double shift = 0.0;

  bool operator==(const ChannelMap&) const = default;
};

/// Per-channel affine color map y = scale * x + shift, clipped to [0, 1],
/// with its exact analytic inverse.
class AffineColorTranslator final : public Translator {
 public:
  AffineColorTranslator() = default;
  explicit AffineColorTranslator(std::array<ChannelMap, 3> channels) : channels_(channels) {}

  Image forward(const Image& image) const override;
  Image inverse(const Image& image) const override;
  nlohmann::json to_json() const override;
  static AffineColorTranslator from_json(const nlohmann::json& j);

  const std::array<ChannelMap, 3>& channels() const noexcept { return channels_; }
  /// Messages produced while fitting (degenerate channels).
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  bool operator==(const AffineColorTranslator& other) const { return channels_ == other.channels_; }

 private:
  friend AffineColorTranslator fit_translator(std::span<const Image>, std::span<const Image>);
  std::array<ChannelMap, 3> channels_{};
  std::vector<std::string> warnings_;
};

/// Moment-matches per-channel mean and standard deviation of the source
/// corpus onto the target corpus. Uses images only.
AffineColorTranslator fit_translator(std::span<const Image> source, std::span<const Image> target);

/// The three source representations: identity, reconstruction through the
/// target appearance, and target-styled.
struct TranslationTriple {
  Image t1;
  Image t2;
  Image t3;

  const Image& get(int k) const;
};

TranslationTriple make_triple(const Image& image, const Translator& translator);

enum class AlignmentRep { kIdentity = 1, kReconstruction = 2, kTargetStyled = 3 };

/// Representation whose features the discriminator sees on the source side.
const Image& select_alignment_rep(const TranslationTriple& triple,
                                  AlignmentRep rep = AlignmentRep::kTargetStyled);

/// Per-channel mean and standard deviation over a corpus.
struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};
};
ChannelStats channel_stats(std::span<const Image> images);

}  // namespace essuda::translate
