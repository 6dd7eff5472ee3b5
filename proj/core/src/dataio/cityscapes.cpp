#include "essuda/dataio/cityscapes.hpp"

#include <algorithm>
#include <vector>

#include "essuda/dataio/png_io.hpp"

namespace essuda::data {
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kImageSuffix = "_leftImg8bit.png";
constexpr std::string_view kLabelSuffix = "_gtFine_labelTrainIds.png";

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

DatasetSplit load_cityscapes_layout(const fs::path& root, const std::string& split, SplitRole role,
                                    const CityscapesOptions& options) {
  DatasetSplit out(role);
  const fs::path image_root = root / "leftImg8bit" / split;
  if (!fs::exists(image_root)) return out;

  std::vector<fs::path> images;
  for (const auto& entry : fs::recursive_directory_iterator(image_root)) {
    if (entry.is_regular_file() && ends_with(entry.path().filename().string(), kImageSuffix)) {
      images.push_back(entry.path());
    }
  }
  std::sort(images.begin(), images.end());

  const bool labeled = role_is_labeled(role);
  for (const auto& image_path : images) {
    const std::string file = image_path.filename().string();
    const std::string stem = file.substr(0, file.size() - kImageSuffix.size());
    const fs::path city = image_path.parent_path().lexically_relative(image_root);
    const fs::path label_path =
        root / "gtFine" / split / city / (stem + std::string(kLabelSuffix));
    if (labeled && !fs::exists(label_path)) {
      throw DataError("missing label file " + label_path.string() + " for image " +
                      image_path.string());
    }
    const int num_classes = options.num_classes;
    const auto crop = options.crop;
    out.add_lazy(stem, 0, [=]() {
      DomainSample s;
      s.id = stem;
      s.image = read_image_png(image_path);
      if (crop) s.image = center_crop(s.image, crop->first, crop->second);
      if (labeled) {
        SegmentationMap labels = read_labels_png(label_path);
        for (auto id : labels.labels) {
          if (id != kIgnoreLabel && id >= num_classes) {
            throw DataError("unknown class id " + std::to_string(id) + " in " + label_path.string());
          }
        }
        if (labels.height != s.image.height && !crop) {
          throw DataError("label raster " + label_path.string() + " does not match its image size");
        }
        if (crop) labels = center_crop(labels, crop->first, crop->second);
        s.labels = std::move(labels);
      }
      return s;
    });
  }
  return out;
}

void save_cityscapes_layout(const DatasetSplit& split, const fs::path& root,
                            const std::string& split_name, const std::string& city) {
  const fs::path image_dir = root / "leftImg8bit" / split_name / city;
  const fs::path label_dir = root / "gtFine" / split_name / city;
  fs::create_directories(image_dir);
  for (std::size_t i = 0; i < split.size(); ++i) {
    const DomainSample s = split.at(i);
    write_image_png(image_dir / (s.id + std::string(kImageSuffix)), s.image);
    if (s.labels) write_labels_png(label_dir / (s.id + std::string(kLabelSuffix)), *s.labels);
  }
}

}  // namespace essuda::data
