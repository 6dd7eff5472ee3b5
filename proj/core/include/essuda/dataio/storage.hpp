#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "essuda/dataio/benchmark.hpp"
#include "essuda/dataio/dataset.hpp"

// On-disk layout:
//   <root>/<split>/images/<id>.png   8-bit RGB
//   <root>/<split>/labels/<id>.png   8-bit single channel (labeled splits only)
//   <root>/index.json                sample ids, roles and seeds per split
namespace essuda::data {

/// Writes the split's rasters and records it in <root>/index.json, replacing
/// any previous entry for the same role.
void save_split(const DatasetSplit& split, const std::filesystem::path& root);

/// Loads a split recorded in <root>/index.json. Images are read eagerly.
DatasetSplit load_split(const std::filesystem::path& root, SplitRole role);

void save_benchmark(const Benchmark& bench, const std::filesystem::path& root);
Benchmark load_benchmark(const std::filesystem::path& root);

/// Writes a single set of label rasters, e.g. pseudo-labels of one round.
void save_label_maps(const std::filesystem::path& dir, const std::vector<std::string>& ids,
                     const std::vector<SegmentationMap>& maps);
std::vector<SegmentationMap> load_label_maps(const std::filesystem::path& dir,
                                             const std::vector<std::string>& ids);

}  // namespace essuda::data
