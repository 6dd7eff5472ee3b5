#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>

#include "essuda/dataio/dataset.hpp"

namespace essuda::data {

struct CityscapesOptions {
  int num_classes = 19;
  /// Optional center crop (height, width) applied to image and labels.
  std::optional<std::pair<int, int>> crop;
};

/// Reads <root>/leftImg8bit/<split>/<city>/<stem>_leftImg8bit.png with labels
/// from <root>/gtFine/<split>/<city>/<stem>_gtFine_labelTrainIds.png. Label
/// files are required for labeled roles and never read for target-train.
/// Pixels are decoded lazily, on first access of each sample.
DatasetSplit load_cityscapes_layout(const std::filesystem::path& root, const std::string& split,
                                    SplitRole role, const CityscapesOptions& options = {});

/// Writes a split in the same layout under a single city directory.
void save_cityscapes_layout(const DatasetSplit& split, const std::filesystem::path& root,
                            const std::string& split_name, const std::string& city = "synthetic");

}  // namespace essuda::data
