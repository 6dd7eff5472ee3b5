#include "essuda/dataio/storage.hpp"

#include <fstream>

#include "essuda/dataio/png_io.hpp"

namespace essuda::data {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_index(const fs::path& root) {
  const fs::path path = root / "index.json";
  if (!fs::exists(path)) return json{{"version", 1}, {"splits", json::object()}};
  std::ifstream in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed " + path.string() + ": " + e.what());
  }
  return j;
}

void write_index(const fs::path& root, const json& j) {
  fs::create_directories(root);
  std::ofstream out(root / "index.json");
  out << j.dump(2) << '\n';
}

}  // namespace

void save_split(const DatasetSplit& split, const fs::path& root) {
  const std::string name(to_string(split.role()));
  const fs::path dir = root / name;
  fs::create_directories(dir / "images");
  json entries = json::array();
  for (std::size_t i = 0; i < split.size(); ++i) {
    const DomainSample s = split.at(i);
    write_image_png(dir / "images" / (s.id + ".png"), s.image);
    if (s.labels) write_labels_png(dir / "labels" / (s.id + ".png"), *s.labels);
    entries.push_back({{"id", s.id}, {"seed", s.seed}, {"labeled", s.labels.has_value()}});
  }
  json index = read_index(root);
  index["splits"][name] = {{"role", name}, {"samples", entries}};
  write_index(root, index);
}

DatasetSplit load_split(const fs::path& root, SplitRole role) {
  const std::string name(to_string(role));
  const json index = read_index(root);
  if (!index.contains("splits") || !index["splits"].contains(name)) {
    throw DataError("split " + name + " is not recorded in " + (root / "index.json").string());
  }
  DatasetSplit split(role);
  const fs::path dir = root / name;
  for (const auto& e : index["splits"][name]["samples"]) {
    DomainSample s;
    s.id = e.at("id").get<std::string>();
    s.seed = e.at("seed").get<std::uint64_t>();
    s.image = read_image_png(dir / "images" / (s.id + ".png"));
    if (e.value("labeled", false) && role_is_labeled(role)) {
      const fs::path lp = dir / "labels" / (s.id + ".png");
      if (!fs::exists(lp)) throw DataError("missing label file " + lp.string());
      s.labels = read_labels_png(lp);
    }
    split.add(std::move(s));
  }
  return split;
}

void save_benchmark(const Benchmark& bench, const fs::path& root) {
  for (auto role : {SplitRole::kSourceTrain, SplitRole::kTargetTrain, SplitRole::kTargetVal,
                    SplitRole::kWildVal}) {
    save_split(bench.split(role), root);
  }
  json index = read_index(root);
  index["scene_spec"] = bench.spec;
  write_index(root, index);
}

Benchmark load_benchmark(const fs::path& root) {
  Benchmark bench;
  const json index = read_index(root);
  if (index.contains("scene_spec")) bench.spec = index["scene_spec"].get<SceneSpec>();
  bench.source_train = load_split(root, SplitRole::kSourceTrain);
  bench.target_train = load_split(root, SplitRole::kTargetTrain);
  bench.target_val = load_split(root, SplitRole::kTargetVal);
  bench.wild_val = load_split(root, SplitRole::kWildVal);
  return bench;
}

void save_label_maps(const fs::path& dir, const std::vector<std::string>& ids,
                     const std::vector<SegmentationMap>& maps) {
  if (ids.size() != maps.size()) throw DataError("save_label_maps: ids and maps differ in count");
  fs::create_directories(dir);
  for (std::size_t i = 0; i < ids.size(); ++i) write_labels_png(dir / (ids[i] + ".png"), maps[i]);
}

std::vector<SegmentationMap> load_label_maps(const fs::path& dir,
                                             const std::vector<std::string>& ids) {
  std::vector<SegmentationMap> maps;
  maps.reserve(ids.size());
  for (const auto& id : ids) {
    const fs::path p = dir / (id + ".png");
    if (!fs::exists(p)) throw DataError("missing label file " + p.string());
    maps.push_back(read_labels_png(p));
  }
  return maps;
}

}  // namespace essuda::data
