#include "essuda/trainer/pipeline.hpp"

#include <chrono>
#include <fstream>

#include "essuda/dataio/storage.hpp"
#include "essuda/ensemble/pseudo_labels.hpp"
#include "essuda/ensemble/weight_report.hpp"
#include "essuda/evalkit/evaluate.hpp"
#include "essuda/rng.hpp"
#include "essuda/trainer/trainer.hpp"

namespace essuda::trainer {

namespace fs = std::filesystem;

std::optional<double> PipelineResult::miou(int round, const std::string& split, const std::string& head) const {
  for (const auto& rec : state.history) {
    if (rec.at("round").get<int>() != round || rec.at("split").get<std::string>() != split) continue;
    for (const auto& h : rec.at("heads"))
      if (h.at("head").get<std::string>() == head) return h.at("miou").get<double>();
  }
  return std::nullopt;
}

int PipelineResult::rounds_completed() const {
  int r = -1;
  for (const auto& rec : state.history) r = std::max(r, rec.at("round").get<int>());
  return r;
}

data::Benchmark load_or_generate_benchmark(const RunConfig& config) {
  if (!config.data_dir.empty()) return data::load_benchmark(config.data_dir);
  return data::generate_benchmark(config.scene, data::BenchmarkStyles::defaults(config.scene.num_classes),
                                   config.counts);
}

namespace {

constexpr std::uint64_t kInitTag = 0x1;
constexpr std::uint64_t kStage1Tag = 0x51;
constexpr std::uint64_t kSslTag = 0x52;

class Run {
 public:
  Run(const data::Benchmark& bench, const PipelineOptions& opt, TrainState state)
      : bench_(bench), opt_(opt), state_(std::move(state)) {}

  PipelineResult execute();

 private:
  void log(const std::string& msg) const {
    if (opt_.log) *opt_.log << msg << std::endl;
  }
  void emit(const nlohmann::json& record) {
    metrics_ << record.dump() << "\n";
    metrics_.flush();
  }
  void checkpoint(const std::string& name);
  bool train_stage(losses::StageMode mode, long iters, const std::vector<data::SegmentationMap>* pseudo);
  void finish_stage1();
  void finish_round();
  void evaluate_all(int round);
  fs::path pseudo_dir(int round) const { return opt_.run_dir / "pseudo" / ("round_" + std::to_string(round)); }
  std::vector<const data::Image*> target_images() const;

  const data::Benchmark& bench_;
  const PipelineOptions& opt_;
  TrainState state_;
  std::unique_ptr<TrainingData> data_;
  std::unique_ptr<Trainer> trainer_;
  std::ofstream metrics_;
  fs::path last_checkpoint_;
  bool halted_ = false;
};

std::vector<const data::Image*> Run::target_images() const {
  std::vector<const data::Image*> images;
  for (std::size_t i = 0; i < data_->target.size(); ++i) images.push_back(&data_->target_image(i));
  return images;
}

void Run::checkpoint(const std::string& name) {
  trainer_->sync_state();
  metrics_.flush();
  state_.metrics_offset = fs::file_size(opt_.run_dir / "metrics.jsonl");
  last_checkpoint_ = opt_.run_dir / "checkpoints" / (name + ".ckpt");
  save_checkpoint(state_, last_checkpoint_);
  if (name != "latest") save_checkpoint(state_, opt_.run_dir / "checkpoints" / "latest.ckpt");
}

bool Run::train_stage(losses::StageMode mode, long iters, const std::vector<data::SegmentationMap>* pseudo) {
  const auto& cfg = state_.config;
  const std::string stage = mode == losses::StageMode::kStage1 ? "stage1" : "ssl";
  const auto start = std::chrono::steady_clock::now();
  const long first = state_.iteration;
  while (state_.iteration < iters) {
    StepResult r;
    try {
      r = trainer_->step(mode, iters, pseudo);
    } catch (const TrainingError& e) {
      nlohmann::json dump = {{"error", e.what()},
                             {"stage", stage},
                             {"round", state_.round},
                             {"iteration", e.iteration},
                             {"source_ids", e.source_ids},
                             {"target_ids", e.target_ids}};
      std::ofstream(opt_.run_dir / "diagnostics.json") << dump.dump(2) << "\n";
      throw;
    }
    const long done = state_.iteration;
    if (done % cfg.log_every == 0 || done == iters || done == 1) {
      emit({{"event", "train"},
            {"stage", stage},
            {"round", state_.round},
            {"iteration", done},
            {"global_iteration", state_.global_iteration},
            {"lr", r.lr},
            {"d_lr", cfg.d_lr},
            {"loss", r.components}});
    }
    if (done % cfg.log_every == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log(stage + " round " + std::to_string(state_.round) + " iter " + std::to_string(done) + "/" +
          std::to_string(iters) + " total=" + std::to_string(r.components.at("total")) + " (" +
          std::to_string(secs / static_cast<double>(done - first)) + " s/iter)");
    }
    if (opt_.halt_at_iteration >= 0 && state_.global_iteration >= opt_.halt_at_iteration) {
      checkpoint("latest");
      halted_ = true;
      return false;
    }
    if (done % cfg.checkpoint_every == 0 && done < iters) checkpoint("latest");
  }
  return true;
}

void Run::evaluate_all(int round) {
  const auto& cfg = state_.config;
  const std::string stage = round == 0 ? "stage1" : "round_" + std::to_string(round);
  fs::create_directories(opt_.run_dir / "eval");
  for (auto role : {data::SplitRole::kTargetVal, data::SplitRole::kWildVal}) {
    const auto& split = bench_.split(role);
    if (split.empty()) continue;
    const auto report = evalkit::evaluate(state_.net, state_.meta ? &*state_.meta : nullptr, split,
                                          cfg.eval_batch, cfg.meta.feature);
    auto j = report.to_json();
    j["config_fingerprint"] = cfg.fingerprint();
    std::ofstream(opt_.run_dir / "eval" / (stage + "_" + report.split + ".json")) << j.dump(2) << "\n";
    nlohmann::json heads = nlohmann::json::object();
    for (const auto& h : report.heads) heads[h.head] = h.scores.miou;
    emit({{"event", "eval"}, {"stage", stage}, {"round", round}, {"split", report.split}, {"miou", heads}});
    nlohmann::json rec = j;
    rec.erase("config_fingerprint");
    for (auto& h : rec["heads"]) h.erase("confusion");
    rec["round"] = round;
    state_.history.push_back(rec);
    std::string line = "eval " + stage + " " + report.split + ":";
    for (const auto& h : report.heads) line += " " + h.head + "=" + std::to_string(100.0 * h.scores.miou);
    log(line);
  }
}

void Run::finish_stage1() {
  const auto& cfg = state_.config;
  if (cfg.method == Method::kOurs) {
    ensemble::MetaFitResult fit;
    {
      evalkit::HeadMaps preds(3);
      for (int k = 0; k < 3; ++k) {
        std::vector<const data::Image*> images;
        for (const auto& t : data_->source) images.push_back(&t.get(k + 1));
        preds[static_cast<std::size_t>(k)] = evalkit::predict_head(state_.net, k, images, cfg.eval_batch);
      }
      std::vector<ensemble::MapTriple> triples;
      std::vector<const data::SegmentationMap*> labels;
      for (std::size_t i = 0; i < data_->source.size(); ++i) {
        triples.push_back({&preds[0][i], &preds[1][i], &preds[2][i]});
        labels.push_back(&data_->source_labels[i]);
      }
      fit = ensemble::meta_fit(triples, labels, cfg.meta);
    }
    state_.meta = fit.weights;
    emit({{"event", "meta_fit"}, {"round", 0}, {"loss", fit.final_loss()}, {"iterations", fit.iterations},
          {"pixels", fit.pixels}, {"weights", *state_.meta}});
    fs::create_directories(opt_.run_dir / "weights");
    std::ofstream(opt_.run_dir / "weights" / "meta_round_0.csv") << ensemble::weight_report(*state_.meta).to_csv();

    const auto heads = evalkit::predict_all_heads(state_.net, target_images(), cfg.eval_batch);
    const auto pseudo = ensemble::generate_pseudo_labels(evalkit::meta_predict(heads, *state_.meta, cfg.meta.feature),
                                                         cfg.pseudo);
    data::save_label_maps(pseudo_dir(0), data_->target_ids, pseudo);
    emit({{"event", "pseudo_labels"}, {"round", 0}, {"coverage", ensemble::label_coverage(pseudo)}});
  }
  evaluate_all(0);
  if (cfg.method != Method::kOurs || cfg.max_rounds == 0) {
    state_.phase = Phase::kDone;
  } else {
    state_.phase = Phase::kSsl;
    state_.round = 1;
    state_.iteration = 0;
    state_.sampler_seed = derive_seed(cfg.seed, {kSslTag, 1});
  }
  checkpoint("stage1");
}

void Run::finish_round() {
  const auto& cfg = state_.config;
  const int round = state_.round;
  const auto previous = data::load_label_maps(pseudo_dir(round - 1), data_->target_ids);
  const auto heads = evalkit::predict_all_heads(state_.net, target_images(), cfg.eval_batch);
  std::vector<ensemble::MapTriple> triples;
  std::vector<const data::SegmentationMap*> labels;
  for (std::size_t i = 0; i < previous.size(); ++i) {
    triples.push_back({&heads[0][i], &heads[1][i], &heads[2][i]});
    labels.push_back(&previous[i]);
  }
  const auto fit = ensemble::meta_refit(triples, labels, *state_.meta, cfg.meta);
  state_.meta = fit.weights;
  emit({{"event", "meta_fit"}, {"round", round}, {"loss", fit.final_loss()}, {"iterations", fit.iterations},
        {"pixels", fit.pixels}, {"weights", *state_.meta}});
  std::ofstream(opt_.run_dir / "weights" / ("meta_round_" + std::to_string(round) + ".csv"))
      << ensemble::weight_report(*state_.meta).to_csv();
  const auto pseudo = ensemble::generate_pseudo_labels(evalkit::meta_predict(heads, *state_.meta, cfg.meta.feature),
                                                       cfg.pseudo);
  data::save_label_maps(pseudo_dir(round), data_->target_ids, pseudo);
  emit({{"event", "pseudo_labels"}, {"round", round}, {"coverage", ensemble::label_coverage(pseudo)}});
  evaluate_all(round);

  PipelineResult probe;
  probe.state.history = state_.history;
  const auto cm = probe.miou(round, "target-val", "Cm");
  double best = -1.0;
  for (const char* h : {"C1", "C2", "C3"}) best = std::max(best, probe.miou(round, "target-val", h).value_or(-1.0));
  const double gap = cm ? 100.0 * (*cm - best) : 0.0;
  const bool stop = round >= cfg.max_rounds || gap < cfg.stop_gap;
  emit({{"event", "round_end"}, {"round", round}, {"gap", gap}, {"stop", stop}});
  if (stop) {
    state_.phase = Phase::kDone;
  } else {
    state_.round = round + 1;
    state_.iteration = 0;
    state_.sampler_seed = derive_seed(cfg.seed, {kSslTag, static_cast<std::uint64_t>(round + 1)});
  }
  checkpoint("round_" + std::to_string(round));
}

PipelineResult Run::execute() {
  const auto& cfg = state_.config;
  fs::create_directories(opt_.run_dir / "checkpoints");
  fs::create_directories(opt_.run_dir / "pseudo");
  save_config(cfg, opt_.run_dir / "config.json");
  const auto metrics_path = opt_.run_dir / "metrics.jsonl";
  if (opt_.resume) {
    if (!fs::exists(metrics_path)) throw std::runtime_error("cannot resume: " + metrics_path.string() + " is missing");
    fs::resize_file(metrics_path, state_.metrics_offset);
    metrics_.open(metrics_path, std::ios::binary | std::ios::app);
  } else {
    metrics_.open(metrics_path, std::ios::binary | std::ios::trunc);
  }
  if (!metrics_) throw std::runtime_error("cannot open " + metrics_path.string());

  data_ = std::make_unique<TrainingData>(
      prepare_training_data(bench_.source_train, bench_.target_train, state_.translator, cfg.ssl_uses_translation));
  trainer_ = std::make_unique<Trainer>(state_, *data_);

  if (state_.phase == Phase::kStage1) {
    if (!train_stage(losses::StageMode::kStage1, cfg.stage1_iters, nullptr)) return {true, state_, last_checkpoint_};
    finish_stage1();
    if (opt_.stop_after_stage1) return {false, state_, last_checkpoint_};
  }
  while (state_.phase == Phase::kSsl) {
    if (state_.iteration == 0 && cfg.retrain_from_scratch) {
      trainer_->reinitialize(derive_seed(cfg.seed, {kInitTag, static_cast<std::uint64_t>(state_.round)}));
    }
    const auto pseudo = data::load_label_maps(pseudo_dir(state_.round - 1), data_->target_ids);
    if (!train_stage(losses::StageMode::kStage2, cfg.ssl_iters_per_round, &pseudo)) {
      return {true, state_, last_checkpoint_};
    }
    finish_round();
  }
  checkpoint("final");
  return {false, state_, last_checkpoint_};
}

}  // namespace

PipelineResult run_full_pipeline(const RunConfig& config, const data::Benchmark& bench,
                                 const PipelineOptions& options) {
  TrainState state;
  if (options.resume) {
    state = load_checkpoint(*options.resume);
  } else {
    config.validate();
    state.config = config;
    std::vector<data::Image> src, tgt;
    for (std::size_t i = 0; i < bench.source_train.size(); ++i) src.push_back(bench.source_train.at(i).image);
    for (std::size_t i = 0; i < bench.target_train.size(); ++i) tgt.push_back(bench.target_train.at(i).image);
    state.translator = translate::fit_translator(src, tgt);
    state.net = nets::init_params<float>(config.network, derive_seed(config.seed, {kInitTag, 0}));
    state.sampler_seed = derive_seed(config.seed, {kStage1Tag});
  }
  Run run(bench, options, std::move(state));
  return run.execute();
}

}  // namespace essuda::trainer
