#pragma once

#include <filesystem>

#include "essuda/dataio/image.hpp"

namespace essuda::data {

void write_image_png(const std::filesystem::path& path, const Image& image);
void write_labels_png(const std::filesystem::path& path, const SegmentationMap& labels);

/// Reads any 8-bit PNG and converts to RGB.
Image read_image_png(const std::filesystem::path& path);
/// Reads a PNG as single-channel 8-bit values without conversion of ids.
SegmentationMap read_labels_png(const std::filesystem::path& path);

}  // namespace essuda::data
