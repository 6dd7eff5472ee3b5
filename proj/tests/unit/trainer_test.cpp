#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "../support/tiny.hpp"
#include "essuda/autodiff/ops.hpp"
#include "essuda/losses/losses.hpp"
#include "essuda/trainer/checkpoint.hpp"
#include "essuda/trainer/optim.hpp"
#include "essuda/trainer/pipeline.hpp"
#include "essuda/trainer/trainer.hpp"

using namespace essuda;
using namespace essuda::trainer;
using essuda::testing::fresh_dir;
using essuda::testing::slurp;
using essuda::testing::tiny_bench;
using essuda::testing::tiny_config;
namespace fs = std::filesystem;

TEST(PolyLr, Examples) {
  EXPECT_EQ(poly_lr(0, 100, 2.5e-4, 0.9), 2.5e-4);
  EXPECT_EQ(poly_lr(100, 100, 2.5e-4, 0.9), 0.0);
  EXPECT_DOUBLE_EQ(poly_lr(50, 100, 2.5e-4, 1.0), 1.25e-4);
  EXPECT_NEAR(poly_lr(30, 100, 1.0, 0.9), std::pow(0.7, 0.9), 1e-15);
  EXPECT_THROW(poly_lr(101, 100, 1.0, 0.9), std::out_of_range);
  EXPECT_THROW(poly_lr(-1, 100, 1.0, 0.9), std::out_of_range);
}

TEST(SgdMomentum, Examples) {
  std::vector<double> p{0.0}, v{0.0};
  sgd_momentum_step(p, {1.0}, v, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(p[0], -0.1);

  p = {0.0};
  v = {0.0};
  sgd_momentum_step(p, {1.0}, v, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(v[0], 1.0);
  sgd_momentum_step(p, {1.0}, v, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(v[0], 1.9);
  EXPECT_NEAR(p[0], -0.29, 1e-15);

  p = {3.0};
  v = {0.0};
  sgd_momentum_step(p, {5.0}, v, 0.0, 0.9);
  EXPECT_EQ(p[0], 3.0);
}

TEST(SgdMomentum, ClassMatchesFunction) {
  ad::Tensor<float> t({2}, {1.0f, -1.0f}, true);
  SgdMomentum<float> opt({t}, 0.9);
  std::vector<float> p{1.0f, -1.0f}, v{0.0f, 0.0f};
  for (int i = 0; i < 3; ++i) {
    t.grad()[0] = 0.5f;
    t.grad()[1] = -2.0f;
    opt.step(0.1);
    opt.zero_grad();
    sgd_momentum_step(p, {0.5f, -2.0f}, v, 0.1, 0.9);
  }
  EXPECT_EQ(t.data()[0], p[0]);
  EXPECT_EQ(t.data()[1], p[1]);
  EXPECT_EQ(opt.buffers()[0], v);
}

TEST(RunConfig, DefaultsAndJsonRoundTrip) {
  RunConfig c;
  EXPECT_EQ(c.lr0, 2.5e-4);
  EXPECT_EQ(c.poly_power, 0.9);
  EXPECT_EQ(c.momentum, 0.9);
  EXPECT_EQ(c.d_lr, 1e-5);
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.stage1_iters, 3000);
  EXPECT_EQ(c.ssl_iters_per_round, 2000);
  EXPECT_EQ(c.max_rounds, 2);
  EXPECT_EQ(c.stop_gap, 0.3);
  EXPECT_FALSE(c.ssl_uses_translation);
  EXPECT_NO_THROW(c.validate());
  c.method = Method::kSed;
  c.network.num_heads = 1;
  c.seed = 99;
  const nlohmann::json j = c;
  const auto back = j.get<RunConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.fingerprint(), c.fingerprint());
}

TEST(RunConfig, UnknownKeyAndBadValuesAreConfigErrors) {
  nlohmann::json j = RunConfig{};
  j["learning_rate"] = 0.1;
  EXPECT_THROW(j.get<RunConfig>(), ConfigError);
  RunConfig c;
  c.lr0 = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.max_rounds = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.method = Method::kSed;  // num_heads still 3
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_method("bdl"), ConfigError);
}

TEST(RunConfig, PartialJsonFillsDefaultsAndHeads) {
  const auto c = nlohmann::json::parse(R"({"method": "sed", "stage1_iters": 10})").get<RunConfig>();
  EXPECT_EQ(c.network.num_heads, 1);
  EXPECT_EQ(c.stage1_iters, 10);
  EXPECT_EQ(c.lr0, 2.5e-4);
  EXPECT_NO_THROW(c.validate());
}

TEST(Routing, PerMethod) {
  RunConfig c;
  for (long it = 0; it < 6; ++it) EXPECT_EQ(head_routes(c, it), (std::vector<int>{1, 2, 3}));
  c.method = Method::kSed;
  EXPECT_EQ(head_routes(c, 0), std::vector<int>{1});
  EXPECT_EQ(head_routes(c, 1), std::vector<int>{2});
  EXPECT_EQ(head_routes(c, 2), std::vector<int>{3});
  EXPECT_EQ(head_routes(c, 3), std::vector<int>{1});
  c.method = Method::kMtri;
  EXPECT_EQ(head_routes(c, 5), (std::vector<int>{1, 1, 1}));
}

namespace {

struct Harness {
  RunConfig cfg;
  data::Benchmark bench;
  TrainState state;
  TrainingData data;

  explicit Harness(RunConfig c) : cfg(std::move(c)), bench(tiny_bench(cfg)) {
    std::vector<data::Image> src, tgt;
    for (std::size_t i = 0; i < bench.source_train.size(); ++i) src.push_back(bench.source_train.at(i).image);
    for (std::size_t i = 0; i < bench.target_train.size(); ++i) tgt.push_back(bench.target_train.at(i).image);
    state.config = cfg;
    state.translator = translate::fit_translator(src, tgt);
    state.net = nets::init_params<float>(cfg.network, 3);
    state.sampler_seed = 11;
    data = prepare_training_data(bench.source_train, bench.target_train, state.translator, cfg.ssl_uses_translation);
  }

  double source_seg_loss() {
    ad::NoGradScope<float> off;
    double total = 0.0;
    for (int k = 0; k < cfg.num_heads(); ++k) {
      std::vector<const data::Image*> images;
      std::vector<const data::SegmentationMap*> labels;
      for (std::size_t i = 0; i < data.source.size(); ++i) {
        images.push_back(&data.source[i].get(cfg.num_heads() == 1 ? 1 : k + 1));
        labels.push_back(&data.source_labels[i]);
      }
      const auto f = state.net.encoder.forward(nets::images_to_tensor<float>(images));
      total += losses::seg_cross_entropy(state.net.heads[k].forward(f).probs, labels).value.item();
    }
    return total;
  }
};

}  // namespace

TEST(Trainer, SupervisedSmokeTrainLowersSourceLoss) {
  auto cfg = tiny_config();
  cfg.scene.height = cfg.scene.width = 32;
  cfg.loss.lambda_adv = 0.0;
  cfg.loss.lambda_ent = 0.0;
  Harness h(cfg);
  const double before = h.source_seg_loss();
  Trainer tr(h.state, h.data);
  for (int i = 0; i < 200; ++i) tr.step(losses::StageMode::kStage1, 200);
  EXPECT_LT(h.source_seg_loss(), before);
  EXPECT_EQ(h.state.iteration, 200);
  EXPECT_EQ(h.state.global_iteration, 200);
}

TEST(Trainer, StepReportsComponentsPerMethod) {
  for (auto m : {Method::kOurs, Method::kSed, Method::kMtri}) {
    Harness h(tiny_config(m));
    Trainer tr(h.state, h.data);
    const auto r = tr.step(losses::StageMode::kStage1, 10);
    EXPECT_TRUE(r.components.count("total"));
    EXPECT_TRUE(r.components.count("adv_d"));
    EXPECT_TRUE(r.components.count("adv_g"));
    EXPECT_EQ(r.components.count("seg_src_3"), m == Method::kSed ? 0u : 1u);
    EXPECT_EQ(r.components.count("discrepancy"), m == Method::kMtri ? 1u : 0u);
    EXPECT_EQ(r.lr, h.cfg.lr0);
  }
}

TEST(Trainer, SegmentationLossesNeverMoveTheDiscriminator) {
  auto cfg = tiny_config();
  cfg.loss.lambda_adv = 1.0;
  Harness h(cfg);
  // Copy, since the trainer updates parameters in place.
  std::vector<std::vector<float>> before;
  for (const auto& p : h.state.net.discriminator_parameters()) before.emplace_back(p.data().begin(), p.data().end());
  h.state.config.d_lr = 1e-30;
  Trainer tr(h.state, h.data);
  for (int i = 0; i < 3; ++i) tr.step(losses::StageMode::kStage1, 10);
  const auto after = h.state.net.discriminator_parameters();
  for (std::size_t i = 0; i < after.size(); ++i)
    for (std::size_t j = 0; j < before[i].size(); ++j) EXPECT_NEAR(after[i].data()[j], before[i][j], 1e-20);
}

TEST(Trainer, DiscriminatorLossDoesNotReachEncoder) {
  const auto net = nets::init_params<float>(tiny_config().network, 4);
  Harness h(tiny_config());
  std::vector<const data::Image*> images{&h.data.source[0].t3, &h.data.source[1].t3};
  ad::Tape<float> tape;
  ad::TapeScope<float> scope(tape);
  const auto f = net.encoder.forward(nets::images_to_tensor<float>(images)).detach();
  tape.backward(losses::discriminator_loss(net.discriminator.forward(f), net.discriminator.forward(f)));
  for (const auto& [name, t] : net.named_parameters()) {
    if (name.rfind("encoder.", 0) != 0) continue;
    for (float g : t.grad()) EXPECT_EQ(g, 0.0f) << name;
  }
}

TEST(Trainer, Stage2NeedsPseudoLabels) {
  Harness h(tiny_config());
  Trainer tr(h.state, h.data);
  EXPECT_THROW(tr.step(losses::StageMode::kStage2, 10), std::invalid_argument);
}

TEST(Trainer, LabeledTargetSplitIsRejected) {
  const auto cfg = tiny_config();
  const auto bench = tiny_bench(cfg);
  const translate::AffineColorTranslator id;
  EXPECT_THROW(prepare_training_data(bench.source_train, bench.target_val, id, false), data::DataError);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = fresh_dir("ckpt_roundtrip");
  Harness h(tiny_config());
  Trainer tr(h.state, h.data);
  tr.step(losses::StageMode::kStage1, 10);
  tr.sync_state();
  h.state.meta = ensemble::MetaWeights::constant(5, 0.25);
  h.state.history.push_back({{"round", 0}});
  save_checkpoint(h.state, dir / "a.ckpt");
  const auto loaded = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(loaded, dir / "b.ckpt");
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
  EXPECT_EQ(loaded.iteration, 1);
  EXPECT_EQ(loaded.meta, h.state.meta);
  EXPECT_EQ(loaded.translator, h.state.translator);
  EXPECT_EQ(loaded.net_momentum, h.state.net_momentum);
}

TEST(Checkpoint, MismatchedClassCountNamesField) {
  const auto dir = fresh_dir("ckpt_k");
  Harness h(tiny_config());
  save_checkpoint(h.state, dir / "a.ckpt");
  auto expected = h.cfg.network;
  expected.num_classes = 19;
  try {
    load_checkpoint(dir / "a.ckpt", expected);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("num_classes"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, CorruptionAndVersionAreRejected) {
  const auto dir = fresh_dir("ckpt_bad");
  Harness h(tiny_config());
  save_checkpoint(h.state, dir / "a.ckpt");
  auto bytes = slurp(dir / "a.ckpt");

  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  std::ofstream(dir / "corrupt.ckpt", std::ios::binary) << flipped;
  EXPECT_THROW(load_checkpoint(dir / "corrupt.ckpt"), CheckpointError);

  auto truncated = bytes.substr(0, bytes.size() - 100);
  std::ofstream(dir / "short.ckpt", std::ios::binary) << truncated;
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), CheckpointError);

  auto version = bytes;
  version[8] = 7;  // u32 version follows the 8-byte magic
  std::ofstream(dir / "version.ckpt", std::ios::binary) << version;
  try {
    load_checkpoint(dir / "version.ckpt");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
}

TEST(Pipeline, ZeroRoundsStopsAfterFirstPseudoLabels) {
  auto cfg = tiny_config();
  cfg.max_rounds = 0;
  const auto dir = fresh_dir("pipe_zero");
  PipelineOptions opt;
  opt.run_dir = dir;
  const auto r = run_full_pipeline(cfg, tiny_bench(cfg), opt);
  EXPECT_EQ(r.state.phase, Phase::kDone);
  EXPECT_EQ(r.rounds_completed(), 0);
  EXPECT_TRUE(fs::exists(dir / "pseudo" / "round_0"));
  EXPECT_FALSE(fs::exists(dir / "pseudo" / "round_1"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "stage1.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "final.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  EXPECT_TRUE(fs::exists(dir / "eval" / "stage1_target-val.json"));
  EXPECT_TRUE(r.miou(0, "target-val", "Cm").has_value());
}

TEST(Pipeline, FullRunLayoutAndEvents) {
  const auto cfg = tiny_config();
  const auto dir = fresh_dir("pipe_full");
  PipelineOptions opt;
  opt.run_dir = dir;
  const auto r = run_full_pipeline(cfg, tiny_bench(cfg), opt);
  EXPECT_EQ(r.rounds_completed(), 2);
  for (const char* f : {"checkpoints/round_1.ckpt", "checkpoints/round_2.ckpt", "pseudo/round_2",
                        "weights/meta_round_0.csv", "weights/meta_round_2.csv", "eval/round_2_wild-val.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  std::map<std::string, int> events;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    ++events[j.at("event").get<std::string>()];
    if (j["event"] == "train") {
      EXPECT_TRUE(j.contains("lr"));
      EXPECT_TRUE(j.at("loss").contains("total"));
    }
  }
  EXPECT_EQ(events["train"], 6 + 4 + 4);
  EXPECT_EQ(events["meta_fit"], 3);
  EXPECT_EQ(events["pseudo_labels"], 3);
  EXPECT_EQ(events["round_end"], 2);
  EXPECT_EQ(events["eval"], 6);
}

TEST(Pipeline, EarlyStopOnSmallGap) {
  auto cfg = tiny_config();
  cfg.stop_gap = 1e9;
  const auto dir = fresh_dir("pipe_stop");
  PipelineOptions opt;
  opt.run_dir = dir;
  EXPECT_EQ(run_full_pipeline(cfg, tiny_bench(cfg), opt).rounds_completed(), 1);
}

TEST(Pipeline, BaselinesStopAfterStage1) {
  for (auto m : {Method::kSed, Method::kMtri}) {
    const auto cfg = tiny_config(m);
    const auto dir = fresh_dir("pipe_baseline");
    PipelineOptions opt;
    opt.run_dir = dir;
    const auto r = run_full_pipeline(cfg, tiny_bench(cfg), opt);
    EXPECT_EQ(r.rounds_completed(), 0);
    EXPECT_FALSE(r.miou(0, "target-val", "Cm").has_value());
    EXPECT_TRUE(r.miou(0, "target-val", "C1").has_value());
  }
}

TEST(Pipeline, SameSeedBitIdenticalMetrics) {
  const auto cfg = tiny_config();
  const auto bench = tiny_bench(cfg);
  const auto a = fresh_dir("pipe_det_a"), b = fresh_dir("pipe_det_b");
  PipelineOptions oa, ob;
  oa.run_dir = a;
  ob.run_dir = b;
  run_full_pipeline(cfg, bench, oa);
  run_full_pipeline(cfg, bench, ob);
  EXPECT_EQ(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
  EXPECT_EQ(slurp(a / "checkpoints" / "final.ckpt"), slurp(b / "checkpoints" / "final.ckpt"));
}

TEST(Pipeline, ResumeAtEveryPhaseMatchesUninterrupted) {
  const auto cfg = tiny_config();
  const auto bench = tiny_bench(cfg);
  const auto ref = fresh_dir("pipe_ref");
  PipelineOptions o;
  o.run_dir = ref;
  run_full_pipeline(cfg, bench, o);
  const auto want = slurp(ref / "metrics.jsonl");
  // mid stage 1, at the stage boundary, mid round 1, mid round 2
  for (long halt : {4L, 6L, 8L, 13L}) {
    const auto dir = fresh_dir("pipe_resume");
    PipelineOptions first;
    first.run_dir = dir;
    first.halt_at_iteration = halt;
    const auto h = run_full_pipeline(cfg, bench, first);
    ASSERT_TRUE(h.halted) << halt;
    EXPECT_EQ(h.state.global_iteration, halt);
    PipelineOptions second;
    second.run_dir = dir;
    second.resume = h.last_checkpoint;
    const auto r = run_full_pipeline(cfg, bench, second);
    EXPECT_FALSE(r.halted);
    EXPECT_EQ(slurp(dir / "metrics.jsonl"), want) << "halt at " << halt;
    EXPECT_EQ(slurp(dir / "checkpoints" / "final.ckpt"), slurp(ref / "checkpoints" / "final.ckpt")) << halt;
  }
}

TEST(Pipeline, StopAfterStage1ThenContinue) {
  const auto cfg = tiny_config();
  const auto bench = tiny_bench(cfg);
  const auto ref = fresh_dir("pipe_s1_ref"), dir = fresh_dir("pipe_s1");
  PipelineOptions o;
  o.run_dir = ref;
  run_full_pipeline(cfg, bench, o);
  PipelineOptions a;
  a.run_dir = dir;
  a.stop_after_stage1 = true;
  const auto s1 = run_full_pipeline(cfg, bench, a);
  EXPECT_EQ(s1.state.phase, Phase::kSsl);
  PipelineOptions b;
  b.run_dir = dir;
  b.resume = dir / "checkpoints" / "stage1.ckpt";
  run_full_pipeline(cfg, bench, b);
  EXPECT_EQ(slurp(dir / "metrics.jsonl"), slurp(ref / "metrics.jsonl"));
}

TEST(Pipeline, NonFiniteLossAbortsWithDiagnostics) {
  auto cfg = tiny_config();
  cfg.lr0 = 1e12;
  const auto dir = fresh_dir("pipe_nan");
  PipelineOptions opt;
  opt.run_dir = dir;
  try {
    run_full_pipeline(cfg, tiny_bench(cfg), opt);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_FALSE(e.source_ids.empty());
    EXPECT_FALSE(e.target_ids.empty());
  }
  ASSERT_TRUE(fs::exists(dir / "diagnostics.json"));
  const auto d = nlohmann::json::parse(slurp(dir / "diagnostics.json"));
  EXPECT_FALSE(d.at("source_ids").empty());
  EXPECT_EQ(d.at("stage"), "stage1");
}

TEST(Pipeline, RetrainFromScratchAndTranslatedSslRun) {
  auto cfg = tiny_config();
  cfg.retrain_from_scratch = true;
  cfg.ssl_uses_translation = true;
  cfg.max_rounds = 1;
  const auto dir = fresh_dir("pipe_variants");
  PipelineOptions opt;
  opt.run_dir = dir;
  const auto r = run_full_pipeline(cfg, tiny_bench(cfg), opt);
  EXPECT_EQ(r.rounds_completed(), 1);
}
