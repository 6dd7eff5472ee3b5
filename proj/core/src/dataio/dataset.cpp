#include "essuda/dataio/dataset.hpp"

namespace essuda::data {

std::string_view to_string(SplitRole role) {
  switch (role) {
    case SplitRole::kSourceTrain: return "source-train";
    case SplitRole::kTargetTrain: return "target-train";
    case SplitRole::kTargetVal: return "target-val";
    case SplitRole::kWildVal: return "wild-val";
  }
  return "unknown";
}

SplitRole parse_split_role(std::string_view name) {
  for (auto role : {SplitRole::kSourceTrain, SplitRole::kTargetTrain, SplitRole::kTargetVal,
                    SplitRole::kWildVal}) {
    if (to_string(role) == name) return role;
  }
  throw DataError("unknown split role '" + std::string(name) +
                  "' (expected source-train, target-train, target-val or wild-val)");
}

bool role_is_labeled(SplitRole role) { return role != SplitRole::kTargetTrain; }

void DatasetSplit::check_policy(const DomainSample& sample) const {
  if (!role_is_labeled(role_) && sample.labels.has_value()) {
    throw DataError("sample '" + sample.id + "' carries labels but split role " +
                    std::string(to_string(role_)) + " is unlabeled");
  }
  if (sample.labels && (sample.labels->height != sample.image.height || sample.labels->width != sample.image.width)) {
    throw DataError("sample '" + sample.id + "' has labels that do not match its image size");
  }
}

void DatasetSplit::add(DomainSample sample) {
  check_policy(sample);
  Entry e;
  e.id = sample.id;
  e.seed = sample.seed;
  e.resident = std::move(sample);
  entries_.push_back(std::move(e));
}

void DatasetSplit::add_lazy(std::string id, std::uint64_t seed, Loader loader) {
  Entry e;
  e.id = std::move(id);
  e.seed = seed;
  e.loader = std::move(loader);
  entries_.push_back(std::move(e));
}

DomainSample DatasetSplit::at(std::size_t i) const {
  const Entry& e = entries_.at(i);
  if (e.resident) return *e.resident;
  DomainSample s = e.loader();
  check_policy(s);
  return s;
}

}  // namespace essuda::data
