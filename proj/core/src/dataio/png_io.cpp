#include "essuda/dataio/png_io.hpp"

#include <png.h>

#include <cstring>
#include <vector>

namespace essuda::data {
namespace {

void write_png(const std::filesystem::path& path, int height, int width, png_uint_32 format,
               const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw DataError("failed to write " + path.string() + ": " + img.message);
  }
}

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format,
                                   int& height, int& width) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("failed to open " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError("failed to decode " + path.string() + ": " + img.message);
  }
  height = static_cast<int>(img.height);
  width = static_cast<int>(img.width);
  return bytes;
}

}  // namespace

void write_image_png(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(image.pixels[i]);
  write_png(path, image.height, image.width, PNG_FORMAT_RGB, bytes);
}

void write_labels_png(const std::filesystem::path& path, const SegmentationMap& labels) {
  write_png(path, labels.height, labels.width, PNG_FORMAT_GRAY, labels.labels);
}

Image read_image_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto bytes = read_png(path, PNG_FORMAT_RGB, h, w);
  Image image(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) image.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
  return image;
}

SegmentationMap read_labels_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto bytes = read_png(path, PNG_FORMAT_GRAY, h, w);
  SegmentationMap labels;
  labels.height = h;
  labels.width = w;
  labels.labels = std::move(bytes);
  return labels;
}

}  // namespace essuda::data
