#include <benchmark/benchmark.h>

#include <random>

#include "essuda/autodiff/ops.hpp"
#include "essuda/dataio/benchmark.hpp"
#include "essuda/ensemble/meta_learner.hpp"
#include "essuda/trainer/trainer.hpp"
#include "essuda/translate/translator.hpp"

using namespace essuda;

namespace {

ad::Tensor<float> random_tensor(ad::Shape shape, std::mt19937& rng, bool grad) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(ad::shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return {std::move(shape), std::move(v), grad};
}

void BM_Conv2dForwardBackward(benchmark::State& st) {
  const auto c = static_cast<std::size_t>(st.range(0));
  const auto hw = static_cast<std::size_t>(st.range(1));
  std::mt19937 rng(1);
  auto x = random_tensor({4, c, hw, hw}, rng, true);
  auto k = random_tensor({c, c, 3, 3}, rng, true);
  auto b = random_tensor({c}, rng, true);
  for (auto _ : st) {
    ad::Tape<float> tape;
    ad::TapeScope<float> scope(tape);
    auto y = ad::reduce_sum(ad::conv2d(x, k, b, 1, 1));
    tape.backward(y);
    benchmark::DoNotOptimize(k.grad().data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({16, 64})->Args({32, 32})->Args({64, 16})->Unit(benchmark::kMillisecond);

void BM_MetaFit(benchmark::State& st) {
  const int images = static_cast<int>(st.range(0));
  const int k = 5, h = 64, w = 64;
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> u(0.01f, 1.0f);
  std::vector<data::ProbabilityMap> maps;
  std::vector<data::SegmentationMap> labels;
  for (int i = 0; i < images; ++i) {
    data::SegmentationMap y(h, w, 0);
    for (auto& l : y.labels) l = static_cast<std::uint8_t>(rng() % k);
    labels.push_back(y);
    for (int m = 0; m < 3; ++m) {
      data::ProbabilityMap p(h, w, k);
      for (std::size_t px = 0; px < p.num_pixels(); ++px) {
        auto row = p.pixel(px);
        float s = 0.0f;
        for (auto& v : row) s += (v = u(rng));
        row[y.labels[px]] += s * 0.5f * static_cast<float>(m + 1);
        s *= 1.0f + 0.5f * static_cast<float>(m + 1);
        for (auto& v : row) v /= s;
      }
      maps.push_back(std::move(p));
    }
  }
  std::vector<ensemble::MapTriple> triples;
  std::vector<const data::SegmentationMap*> lp;
  for (int i = 0; i < images; ++i) {
    triples.push_back({&maps[3 * i], &maps[3 * i + 1], &maps[3 * i + 2]});
    lp.push_back(&labels[i]);
  }
  ensemble::MetaFitOptions opt;
  opt.max_iters = 100;
  for (auto _ : st) benchmark::DoNotOptimize(ensemble::meta_fit(triples, lp, opt).final_loss());
  st.counters["pixels"] = static_cast<double>(images) * h * w;
}
BENCHMARK(BM_MetaFit)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& st) {
  trainer::RunConfig cfg;
  cfg.method = static_cast<trainer::Method>(st.range(0));
  cfg.network.num_heads = cfg.num_heads();
  cfg.counts = {8, 8, 1, 1};
  const auto bench = data::generate_benchmark(cfg.scene, data::BenchmarkStyles::defaults(cfg.scene.num_classes),
                                              cfg.counts);
  std::vector<data::Image> src, tgt;
  for (std::size_t i = 0; i < bench.source_train.size(); ++i) src.push_back(bench.source_train.at(i).image);
  for (std::size_t i = 0; i < bench.target_train.size(); ++i) tgt.push_back(bench.target_train.at(i).image);
  trainer::TrainState state;
  state.config = cfg;
  state.translator = translate::fit_translator(src, tgt);
  state.net = nets::init_params<float>(cfg.network, 1);
  const auto td = trainer::prepare_training_data(bench.source_train, bench.target_train, state.translator, false);
  trainer::Trainer tr(state, td);
  const long iters = 1L << 40;
  for (auto _ : st) benchmark::DoNotOptimize(tr.step(losses::StageMode::kStage1, iters).lr);
  st.SetLabel(std::string(trainer::to_string(cfg.method)));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond)->Iterations(5);

}  // namespace
BENCHMARK_MAIN();
