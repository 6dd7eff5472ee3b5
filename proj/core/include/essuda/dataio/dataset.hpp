#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "essuda/dataio/image.hpp"

namespace essuda::data {

enum class SplitRole { kSourceTrain, kTargetTrain, kTargetVal, kWildVal };

std::string_view to_string(SplitRole role);
SplitRole parse_split_role(std::string_view name);

/// Whether samples of this role carry labels. Target-train never does.
bool role_is_labeled(SplitRole role);

struct DomainSample {
  std::string id;
  std::uint64_t seed = 0;
  Image image;
  std::optional<SegmentationMap> labels;
};

/// Ordered collection of samples for one role. Entries are either resident or
/// produced on demand by a loader; either way the role's label policy holds.
class DatasetSplit {
 public:
  using Loader = std::function<DomainSample()>;

  DatasetSplit() = default;
  explicit DatasetSplit(SplitRole role) : role_(role) {}

  SplitRole role() const noexcept { return role_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Throws DataError if the sample's labels violate the role's policy.
  void add(DomainSample sample);
  void add_lazy(std::string id, std::uint64_t seed, Loader loader);

  /// Materializes sample `i` (loading it if necessary).
  DomainSample at(std::size_t i) const;
  const std::string& id(std::size_t i) const { return entries_.at(i).id; }
  std::uint64_t seed(std::size_t i) const { return entries_.at(i).seed; }

 private:
  struct Entry {
    std::string id;
    std::uint64_t seed = 0;
    std::optional<DomainSample> resident;
    Loader loader;
  };

  void check_policy(const DomainSample& sample) const;

  SplitRole role_ = SplitRole::kSourceTrain;
  std::vector<Entry> entries_;
};

}  // namespace essuda::data
