#include "essuda/trainer/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace essuda::trainer {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kOurs: return "ours";
    case Method::kSed: return "sed";
    case Method::kMtri: return "mtri";
  }
  return "ours";
}

Method parse_method(std::string_view name) {
  if (name == "ours") return Method::kOurs;
  if (name == "sed") return Method::kSed;
  if (name == "mtri") return Method::kMtri;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected ours, sed or mtri)");
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void RunConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be > 0");
  };
  positive(lr0, "lr0");
  positive(d_lr, "d_lr");
  positive(poly_power, "poly_power");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(d_momentum >= 0.0 && d_momentum < 1.0)) throw ConfigError("d_momentum must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (stage1_iters < 1) throw ConfigError("stage1_iters must be >= 1");
  if (ssl_iters_per_round < 1) throw ConfigError("ssl_iters_per_round must be >= 1");
  if (max_rounds < 0) throw ConfigError("max_rounds must be >= 0");
  if (!std::isfinite(stop_gap)) throw ConfigError("stop_gap must be finite");
  if (discrepancy_weight < 0.0) throw ConfigError("discrepancy_weight must be >= 0");
  if (mtri_representation < 1 || mtri_representation > 3) {
    throw ConfigError("mtri_representation must be 1, 2 or 3");
  }
  if (log_every < 1 || checkpoint_every < 1 || eval_batch < 1) {
    throw ConfigError("log_every, checkpoint_every and eval_batch must be >= 1");
  }
  try {
    loss.validate();
    pseudo.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (network.num_classes != scene.num_classes) {
    throw ConfigError("network.num_classes (" + std::to_string(network.num_classes) +
                      ") differs from scene.num_classes (" + std::to_string(scene.num_classes) + ")");
  }
  if (network.num_heads != num_heads()) {
    throw ConfigError("network.num_heads must be " + std::to_string(num_heads()) + " for method " +
                      std::string(to_string(method)));
  }
}

std::string RunConfig::fingerprint() const {
  const nlohmann::json j = *this;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"method", std::string(to_string(c.method))},
                     {"loss", c.loss},
                     {"lr0", c.lr0},
                     {"poly_power", c.poly_power},
                     {"momentum", c.momentum},
                     {"d_lr", c.d_lr},
                     {"d_momentum", c.d_momentum},
                     {"batch_size", c.batch_size},
                     {"stage1_iters", c.stage1_iters},
                     {"ssl_iters_per_round", c.ssl_iters_per_round},
                     {"max_rounds", c.max_rounds},
                     {"stop_gap", c.stop_gap},
                     {"pseudo", c.pseudo},
                     {"meta", c.meta},
                     {"entropy_enabled", c.entropy_enabled},
                     {"ssl_uses_translation", c.ssl_uses_translation},
                     {"retrain_from_scratch", c.retrain_from_scratch},
                     {"non_saturating", c.non_saturating},
                     {"discrepancy_weight", c.discrepancy_weight},
                     {"mtri_representation", c.mtri_representation},
                     {"alignment_rep", static_cast<int>(c.alignment_rep)},
                     {"network", c.network},
                     {"scene", c.scene},
                     {"counts", c.counts},
                     {"data_dir", c.data_dir},
                     {"log_every", c.log_every},
                     {"checkpoint_every", c.checkpoint_every},
                     {"eval_batch", c.eval_batch}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  static const std::set<std::string> known = {
      "seed", "method", "loss", "lr0", "poly_power", "momentum", "d_lr", "d_momentum",
      "batch_size", "stage1_iters", "ssl_iters_per_round", "max_rounds", "stop_gap", "pseudo",
      "meta", "entropy_enabled", "ssl_uses_translation", "retrain_from_scratch", "non_saturating",
      "discrepancy_weight", "mtri_representation", "alignment_rep", "network", "scene", "counts",
      "data_dir", "log_every", "checkpoint_every", "eval_batch"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    const RunConfig d;
    c.seed = j.value("seed", d.seed);
    c.method = parse_method(j.value("method", std::string("ours")));
    c.loss = j.value("loss", d.loss);
    c.lr0 = j.value("lr0", d.lr0);
    c.poly_power = j.value("poly_power", d.poly_power);
    c.momentum = j.value("momentum", d.momentum);
    c.d_lr = j.value("d_lr", d.d_lr);
    c.d_momentum = j.value("d_momentum", d.d_momentum);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.stage1_iters = j.value("stage1_iters", d.stage1_iters);
    c.ssl_iters_per_round = j.value("ssl_iters_per_round", d.ssl_iters_per_round);
    c.max_rounds = j.value("max_rounds", d.max_rounds);
    c.stop_gap = j.value("stop_gap", d.stop_gap);
    c.pseudo = j.value("pseudo", d.pseudo);
    c.meta = j.value("meta", d.meta);
    c.entropy_enabled = j.value("entropy_enabled", d.entropy_enabled);
    c.ssl_uses_translation = j.value("ssl_uses_translation", d.ssl_uses_translation);
    c.retrain_from_scratch = j.value("retrain_from_scratch", d.retrain_from_scratch);
    c.non_saturating = j.value("non_saturating", d.non_saturating);
    c.discrepancy_weight = j.value("discrepancy_weight", d.discrepancy_weight);
    c.mtri_representation = j.value("mtri_representation", d.mtri_representation);
    const int rep = j.value("alignment_rep", static_cast<int>(d.alignment_rep));
    if (rep < 1 || rep > 3) throw ConfigError("alignment_rep must be 1, 2 or 3");
    c.alignment_rep = static_cast<translate::AlignmentRep>(rep);
    c.network = d.network;
    c.network.num_heads = c.num_heads();
    if (j.contains("network")) {
      c.network = j.at("network").get<nets::NetworkConfig>();
      if (!j.at("network").contains("num_heads")) c.network.num_heads = c.num_heads();
    }
    c.scene = j.value("scene", d.scene);
    if (!j.contains("network") || !j.at("network").contains("num_classes")) {
      c.network.num_classes = c.scene.num_classes;
    }
    c.counts = j.value("counts", d.counts);
    c.data_dir = j.value("data_dir", d.data_dir);
    c.log_every = j.value("log_every", d.log_every);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
    c.eval_batch = j.value("eval_batch", d.eval_batch);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c = j.get<RunConfig>();
  c.validate();
  return c;
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << nlohmann::json(config).dump(2) << "\n";
}

}  // namespace essuda::trainer
