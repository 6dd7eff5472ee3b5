#include "essuda/trainer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace essuda::trainer {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian");

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::kStage1: return "stage1";
    case Phase::kSsl: return "ssl";
    case Phase::kDone: return "done";
  }
  return "stage1";
}

Phase parse_phase(std::string_view name) {
  if (name == "stage1") return Phase::kStage1;
  if (name == "ssl") return Phase::kSsl;
  if (name == "done") return Phase::kDone;
  throw CheckpointError("unknown phase '" + std::string(name) + "'");
}

namespace {

constexpr char kMagic[8] = {'E', 'S', 'S', 'U', 'D', 'A', 'C', 'K'};

struct Blob {
  std::string name;
  ad::Shape shape;
  std::span<const float> values;
};

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw CheckpointError("checkpoint truncated");
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

std::vector<Blob> blobs(const TrainState& s) {
  std::vector<Blob> out;
  for (const auto& [name, t] : s.net.named_parameters()) out.push_back({name, t.shape(), t.data()});
  const auto seg = s.net.segmentation_parameters();
  if (!s.net_momentum.empty()) {
    if (s.net_momentum.size() != seg.size()) throw CheckpointError("momentum buffers do not match network");
    for (std::size_t i = 0; i < seg.size(); ++i)
      out.push_back({"momentum.net." + std::to_string(i), seg[i].shape(), s.net_momentum[i]});
  }
  const auto disc = s.net.discriminator_parameters();
  if (!s.disc_momentum.empty()) {
    if (s.disc_momentum.size() != disc.size()) throw CheckpointError("momentum buffers do not match discriminator");
    for (std::size_t i = 0; i < disc.size(); ++i)
      out.push_back({"momentum.disc." + std::to_string(i), disc[i].shape(), s.disc_momentum[i]});
  }
  return out;
}

void check_network(const nets::NetworkConfig& stored, const nets::NetworkConfig& expected) {
  auto fail = [](const std::string& field, const std::string& got, const std::string& want) {
    throw CheckpointError("checkpoint field '" + field + "' is " + got + ", expected " + want);
  };
  const nlohmann::json a = stored, b = expected;
  if (stored.num_classes != expected.num_classes) {
    fail("num_classes", std::to_string(stored.num_classes), std::to_string(expected.num_classes));
  }
  for (const auto& [key, value] : b.items()) {
    if (a.at(key) != value) fail(key, a.at(key).dump(), value.dump());
  }
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const auto table = blobs(state);
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& b : table) {
    tensors.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", offset}, {"count", b.values.size()}});
    offset += b.values.size();
  }
  nlohmann::json header = {{"format", "essuda-checkpoint"},
                           {"dtype", "f32"},
                           {"config", state.config},
                           {"phase", std::string(to_string(state.phase))},
                           {"round", state.round},
                           {"iteration", state.iteration},
                           {"global_iteration", state.global_iteration},
                           {"meta", state.meta ? nlohmann::json(*state.meta) : nlohmann::json(nullptr)},
                           {"translator", state.translator.to_json()},
                           {"rng", {{"sampler_seed", state.sampler_seed}}},
                           {"metrics_offset", state.metrics_offset},
                           {"history", state.history},
                           {"has_net_momentum", !state.net_momentum.empty()},
                           {"has_disc_momentum", !state.disc_momentum.empty()},
                           {"tensors", tensors}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& b : table)
    out.append(reinterpret_cast<const char*>(b.values.data()), b.values.size() * sizeof(float));
  put<std::uint64_t>(out, fnv1a(out));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < sizeof kMagic + 4 + 8 + 8 || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint file");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get<std::uint32_t>(in, pos);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  std::size_t tail = in.size() - 8;
  const auto stored_sum = get<std::uint64_t>(in, tail);
  if (fnv1a(std::string_view(in.data(), in.size() - 8)) != stored_sum) {
    throw CheckpointError("checkpoint " + path.string() + " is corrupted (checksum mismatch)");
  }
  const auto header_size = get<std::uint64_t>(in, pos);
  if (pos + header_size > in.size() - 8) throw CheckpointError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.begin() + static_cast<std::ptrdiff_t>(pos),
                                   in.begin() + static_cast<std::ptrdiff_t>(pos + header_size));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header unreadable: ") + e.what());
  }
  pos += header_size;
  const std::size_t payload_floats = (in.size() - 8 - pos) / sizeof(float);
  if ((in.size() - 8 - pos) % sizeof(float) != 0) throw CheckpointError("checkpoint payload misaligned");
  const char* payload = in.data() + pos;

  TrainState s;
  try {
    s.config = header.at("config").get<RunConfig>();
    s.phase = parse_phase(header.at("phase").get<std::string>());
    s.round = header.at("round").get<int>();
    s.iteration = header.at("iteration").get<long>();
    s.global_iteration = header.at("global_iteration").get<long>();
    if (!header.at("meta").is_null()) s.meta = header.at("meta").get<ensemble::MetaWeights>();
    s.translator = translate::AffineColorTranslator::from_json(header.at("translator"));
    s.sampler_seed = header.at("rng").at("sampler_seed").get<std::uint64_t>();
    s.metrics_offset = header.at("metrics_offset").get<std::uint64_t>();
    s.history = header.at("history");
    s.net = nets::init_params<float>(s.config.network, 0);
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint header invalid: ") + e.what());
  }
  if (header.value("has_net_momentum", false)) {
    for (const auto& p : s.net.segmentation_parameters()) s.net_momentum.emplace_back(p.numel());
  }
  if (header.value("has_disc_momentum", false)) {
    for (const auto& p : s.net.discriminator_parameters()) s.disc_momentum.emplace_back(p.numel());
  }

  // Writable views in the same order as blobs().
  std::vector<std::pair<std::string, std::span<float>>> slots;
  std::vector<ad::Shape> shapes;
  for (auto& [name, t] : s.net.named_parameters()) {
    slots.emplace_back(name, t.data());
    shapes.push_back(t.shape());
  }
  const auto seg = s.net.segmentation_parameters();
  for (std::size_t i = 0; i < s.net_momentum.size(); ++i) {
    slots.emplace_back("momentum.net." + std::to_string(i), s.net_momentum[i]);
    shapes.push_back(seg[i].shape());
  }
  const auto disc = s.net.discriminator_parameters();
  for (std::size_t i = 0; i < s.disc_momentum.size(); ++i) {
    slots.emplace_back("momentum.disc." + std::to_string(i), s.disc_momentum[i]);
    shapes.push_back(disc[i].shape());
  }
  const auto& table = header.at("tensors");
  if (table.size() != slots.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(table.size()) + " tensors, expected " +
                          std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& e = table[i];
    const auto name = e.at("name").get<std::string>();
    if (name != slots[i].first) {
      throw CheckpointError("checkpoint tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                            slots[i].first + "'");
    }
    if (e.at("shape").get<ad::Shape>() != shapes[i]) {
      throw CheckpointError("checkpoint tensor '" + name + "' has shape " +
                            ad::shape_str(e.at("shape").get<ad::Shape>()) + ", expected " +
                            ad::shape_str(shapes[i]));
    }
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto count = e.at("count").get<std::uint64_t>();
    if (count != slots[i].second.size() || offset + count > payload_floats) {
      throw CheckpointError("checkpoint tensor '" + name + "' has an invalid extent");
    }
    std::memcpy(slots[i].second.data(), payload + offset * sizeof(float), count * sizeof(float));
  }
  return s;
}

TrainState load_checkpoint(const std::filesystem::path& path, const nets::NetworkConfig& expected) {
  TrainState s = load_checkpoint(path);
  check_network(s.config.network, expected);
  return s;
}

}  // namespace essuda::trainer
