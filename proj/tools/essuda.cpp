#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "essuda/dataio/storage.hpp"
#include "essuda/evalkit/ablation.hpp"
#include "essuda/evalkit/evaluate.hpp"
#include "essuda/evalkit/report.hpp"
#include "essuda/trainer/checkpoint.hpp"
#include "essuda/trainer/pipeline.hpp"

namespace fs = std::filesystem;
using namespace essuda;

namespace {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string resume;
  std::string data;
  std::string split = "target-val";
  std::string run;
  int jobs = 1;
  bool quiet = false;
};

trainer::RunConfig base_config(const Args& a) {
  trainer::RunConfig c = a.config.empty() ? trainer::RunConfig{} : trainer::load_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (!a.data.empty()) c.data_dir = a.data;
  c.network.num_heads = c.num_heads();
  c.validate();
  return c;
}

fs::path require_out(const Args& a, const char* cmd) {
  if (a.out.empty()) throw trainer::ConfigError(std::string(cmd) + " needs --out <dir>");
  return a.out;
}

void print_summary(const trainer::PipelineResult& r) {
  nlohmann::json j = {{"halted", r.halted},
                      {"phase", trainer::to_string(r.state.phase)},
                      {"round", r.state.round},
                      {"global_iteration", r.state.global_iteration},
                      {"checkpoint", r.last_checkpoint.string()},
                      {"history", r.history()}};
  std::cout << j.dump(2) << "\n";
}

int cmd_gen(const Args& a) {
  trainer::RunConfig c = a.config.empty() ? trainer::RunConfig{} : trainer::load_config(a.config);
  if (a.seed) c.scene.seed = *a.seed;
  const auto out = require_out(a, "gen");
  const auto bench =
      data::generate_benchmark(c.scene, data::BenchmarkStyles::defaults(c.scene.num_classes), c.counts);
  data::save_benchmark(bench, out);
  if (!a.quiet) std::cerr << "wrote benchmark to " << out << "\n";
  return 0;
}

trainer::PipelineResult run_pipeline(const Args& a, bool stage1_only) {
  trainer::PipelineOptions opt;
  opt.stop_after_stage1 = stage1_only;
  if (!a.quiet) opt.log = &std::cerr;
  trainer::RunConfig config;
  if (!a.resume.empty()) {
    opt.resume = a.resume;
    config = trainer::load_checkpoint(a.resume).config;
    if (!a.data.empty()) config.data_dir = a.data;
    opt.run_dir = a.out.empty() ? fs::path(a.resume).parent_path().parent_path() : fs::path(a.out);
  } else {
    config = base_config(a);
    opt.run_dir = require_out(a, stage1_only ? "train" : "ssl");
  }
  const auto bench = trainer::load_or_generate_benchmark(config);
  return trainer::run_full_pipeline(config, bench, opt);
}

int cmd_eval(const Args& a) {
  if (a.resume.empty()) throw trainer::ConfigError("eval needs --resume <checkpoint>");
  auto state = trainer::load_checkpoint(a.resume);
  if (!a.data.empty()) state.config.data_dir = a.data;
  const auto bench = trainer::load_or_generate_benchmark(state.config);
  data::SplitRole role;
  try {
    role = data::parse_split_role(a.split);
  } catch (const std::exception& e) {
    throw trainer::ConfigError(e.what());
  }
  const auto& split = bench.split(role);
  auto report = evalkit::evaluate(state.net, state.meta ? &*state.meta : nullptr, split, state.config.eval_batch,
                                  state.config.meta.feature);
  report.config_fingerprint = state.config.fingerprint();
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

int cmd_ablate(const Args& a) {
  const auto config = base_config(a);
  evalkit::AblationOptions opt;
  opt.out_dir = require_out(a, "ablate");
  opt.jobs = a.jobs;
  if (!a.quiet) opt.log = &std::cerr;
  const auto bench = trainer::load_or_generate_benchmark(config);
  const auto report = evalkit::run_ablation_suite(bench, config, opt);
  std::cout << report.to_json().at("summary").dump(2) << "\n";
  return report.failures.empty() ? 0 : 1;
}

int cmd_report(const Args& a) {
  if (a.run.empty()) throw trainer::ConfigError("report needs --run <run dir>");
  const fs::path out = a.out.empty() ? fs::path(a.run) / "report" : fs::path(a.out);
  for (const auto& p : evalkit::render_run_report(a.run, out)) std::cout << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble self-training for domain-adaptive segmentation"};
  app.require_subcommand(1);
  Args a;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Random seed")->each([&](const std::string&) { a.seed = seed; });
    sub->add_option("--out", a.out, "Output directory");
    sub->add_flag("--quiet,-q", a.quiet, "No progress output");
  };
  auto* gen = app.add_subcommand("gen", "Generate the synthetic benchmark");
  add_common(gen);
  auto* train = app.add_subcommand("train", "Stage 1 training, source meta fit and first pseudo-labels");
  add_common(train);
  auto* ssl = app.add_subcommand("ssl", "Self-training rounds (full pipeline unless resuming)");
  add_common(ssl);
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_common(eval);
  eval->add_option("--split", a.split, "target-val, wild-val, ...");
  auto* ablate = app.add_subcommand("ablate", "Run the method/entropy/SSL comparison suite");
  add_common(ablate);
  ablate->add_option("--jobs,-j", a.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  auto* report = app.add_subcommand("report", "Render a run directory into CSV files");
  add_common(report);
  report->add_option("--run", a.run, "Run directory")->check(CLI::ExistingDirectory);
  for (auto* sub : {train, ssl, eval}) {
    sub->add_option("--resume", a.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  }
  for (auto* sub : {train, ssl, eval, ablate}) sub->add_option("--data", a.data, "Benchmark directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*gen) return cmd_gen(a);
    if (*train) {
      print_summary(run_pipeline(a, true));
      return 0;
    }
    if (*ssl) {
      print_summary(run_pipeline(a, false));
      return 0;
    }
    if (*eval) return cmd_eval(a);
    if (*ablate) return cmd_ablate(a);
    if (*report) return cmd_report(a);
  } catch (const trainer::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
