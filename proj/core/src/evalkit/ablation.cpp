#include "essuda/evalkit/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "essuda/trainer/checkpoint.hpp"
#include "essuda/trainer/pipeline.hpp"

namespace essuda::evalkit {

namespace fs = std::filesystem;

std::vector<AblationRun> ablation_matrix(const trainer::RunConfig& base) {
  std::vector<AblationRun> runs;
  const bool ssl = base.max_rounds > 0;
  for (auto method : {trainer::Method::kSed, trainer::Method::kMtri, trainer::Method::kOurs}) {
    for (bool entropy : {true, false}) {
      AblationRun r;
      r.method = std::string(trainer::to_string(method));
      r.name = r.method + (entropy ? "_ent" : "_noent");
      r.config = base;
      r.config.method = method;
      r.config.network.num_heads = r.config.num_heads();
      r.config.entropy_enabled = entropy;
      r.config.ssl_uses_translation = false;
      if (method != trainer::Method::kOurs || !entropy) r.config.max_rounds = 0;
      runs.push_back(std::move(r));
    }
  }
  if (ssl) {
    AblationRun t;
    t.method = "ours_ssl_t";
    t.name = "ours_ent_ssl_t";
    t.config = base;
    t.config.method = trainer::Method::kOurs;
    t.config.network.num_heads = 3;
    t.config.entropy_enabled = true;
    t.config.ssl_uses_translation = true;
    t.fork_from = "ours_ent";
    t.min_round = 1;
    runs.push_back(std::move(t));
  }
  return runs;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Copies a run's stage-1 artifacts into `dst` and rewrites its stage-1
// checkpoint with `config`, ready to resume into SSL.
fs::path fork_run(const fs::path& src, const fs::path& dst, const trainer::RunConfig& config) {
  auto state = trainer::load_checkpoint(src / "checkpoints" / "stage1.ckpt");
  if (state.config.network != config.network || state.config.seed != config.seed) {
    throw std::invalid_argument("cannot fork run with a different network or seed");
  }
  fs::remove_all(dst);
  fs::create_directories(dst / "checkpoints");
  fs::copy(src / "pseudo", dst / "pseudo", fs::copy_options::recursive);
  if (fs::exists(src / "weights")) fs::copy(src / "weights", dst / "weights", fs::copy_options::recursive);
  fs::copy_file(src / "metrics.jsonl", dst / "metrics.jsonl");
  fs::resize_file(dst / "metrics.jsonl", state.metrics_offset);
  state.config = config;
  const auto ckpt = dst / "checkpoints" / "stage1.ckpt";
  trainer::save_checkpoint(state, ckpt);
  return ckpt;
}

}  // namespace

std::string rows_to_csv(const std::vector<AblationRow>& rows) {
  std::string out = "method,head,entropy,ssl_round,split,class,iou\n";
  for (const auto& r : rows) {
    out += r.method + "," + r.head + "," + (r.entropy ? "1" : "0") + "," + std::to_string(r.ssl_round) + "," +
           r.split + "," + r.cls + "," + (std::isnan(r.iou) ? std::string("nan") : fmt(r.iou)) + "\n";
  }
  return out;
}

std::vector<AblationRow> rows_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "method,head,entropy,ssl_round,split,class,iou") throw std::invalid_argument("ablation CSV: bad header");
  std::vector<AblationRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) c.push_back(cell);
    if (c.size() != 7) throw std::invalid_argument("ablation CSV: bad row '" + line + "'");
    rows.push_back({c[0], c[1], c[2] == "1", std::stoi(c[3]), c[4], c[5],
                    c[6] == "nan" ? std::nan("") : std::stod(c[6])});
  }
  return rows;
}

std::vector<AblationRow> history_rows(const std::string& method, bool entropy, const nlohmann::json& history,
                                      int min_round) {
  std::vector<AblationRow> rows;
  for (const auto& rec : history) {
    const int round = rec.at("round").get<int>();
    if (round < min_round) continue;
    const auto split = rec.at("split").get<std::string>();
    for (const auto& h : rec.at("heads")) {
      const auto head = h.at("head").get<std::string>();
      const auto& iou = h.at("iou");
      for (std::size_t c = 0; c < iou.size(); ++c) {
        rows.push_back({method, head, entropy, round, split, std::to_string(c),
                        iou[c].is_null() ? std::nan("") : iou[c].get<double>()});
      }
      rows.push_back({method, head, entropy, round, split, "ALL", h.at("miou").get<double>()});
    }
  }
  return rows;
}

std::string AblationReport::to_csv() const { return rows_to_csv(rows); }

nlohmann::json AblationReport::to_json() const {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& r : rows) {
    if (r.cls != "ALL") continue;
    table.push_back({{"method", r.method}, {"head", r.head}, {"entropy", r.entropy}, {"ssl_round", r.ssl_round},
                     {"split", r.split}, {"miou", r.iou}});
  }
  return {{"seed", seed}, {"summary", table}, {"runs", runs}, {"failures", failures}};
}

std::optional<double> AblationReport::miou(const std::string& method, const std::string& head, bool entropy,
                                           int round, const std::string& split) const {
  for (const auto& r : rows)
    if (r.cls == "ALL" && r.method == method && r.head == head && r.entropy == entropy && r.ssl_round == round &&
        r.split == split)
      return r.iou;
  return std::nullopt;
}

std::optional<double> AblationReport::best_head_miou(const std::string& method, bool entropy, int round,
                                                     const std::string& split) const {
  std::optional<double> best;
  for (const char* h : {"C1", "C2", "C3"}) {
    const auto v = miou(method, h, entropy, round, split);
    if (v && (!best || *v > *best)) best = v;
  }
  return best;
}

namespace {

struct RunOutcome {
  nlohmann::json entry;
  std::vector<AblationRow> rows;
  std::string error;
};

RunOutcome execute_run(const AblationRun& run, const data::Benchmark& bench, const AblationOptions& options,
                       std::mutex& log_mutex) {
  const fs::path dir = options.out_dir / run.name;
  RunOutcome out;
  out.entry = {{"name", run.name},
               {"method", run.method},
               {"entropy", run.config.entropy_enabled},
               {"ssl_uses_translation", run.config.ssl_uses_translation},
               {"max_rounds", run.config.max_rounds},
               {"run_dir", run.name}};
  auto say = [&](const std::string& line) {
    if (!options.log) return;
    std::lock_guard lock(log_mutex);
    *options.log << line << std::endl;
  };
  try {
    trainer::TrainState final_state;
    const auto final_ckpt = dir / "checkpoints" / "final.ckpt";
    bool reused = false;
    if (options.reuse_existing && fs::exists(final_ckpt)) {
      final_state = trainer::load_checkpoint(final_ckpt);
      reused = final_state.config.fingerprint() == run.config.fingerprint();
    }
    if (!reused) {
      say("ablation: running " + run.name);
      trainer::PipelineOptions popt;
      popt.run_dir = dir;
      if (options.jobs <= 1) popt.log = options.log;
      if (run.fork_from) popt.resume = fork_run(options.out_dir / *run.fork_from, dir, run.config);
      const auto start = std::chrono::steady_clock::now();
      final_state = trainer::run_full_pipeline(run.config, bench, popt).state;
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      write_file(dir / "timing.json", nlohmann::json{{"seconds", secs}}.dump() + "\n");
    }
    if (fs::exists(dir / "timing.json")) {
      std::ifstream in(dir / "timing.json");
      out.entry["seconds"] = nlohmann::json::parse(in).at("seconds");
    }
    out.entry["reused"] = reused;
    out.rows = history_rows(run.method, run.config.entropy_enabled, final_state.history, run.min_round);
    out.entry["status"] = "ok";
    out.entry["history"] = final_state.history;
  } catch (const std::exception& e) {
    out.error = e.what();
    out.entry["status"] = "failed";
    out.entry["error"] = out.error;
    say("ablation: " + run.name + " failed: " + out.error);
  }
  return out;
}

}  // namespace

AblationReport run_ablation_suite(const data::Benchmark& bench, const trainer::RunConfig& base,
                                  const AblationOptions& options) {
  base.validate();
  fs::create_directories(options.out_dir);
  const auto runs = ablation_matrix(base);
  std::vector<RunOutcome> outcomes(runs.size());
  std::mutex log_mutex;

  auto run_all = [&](bool forked) {
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < runs.size(); ++i)
      if (runs[i].fork_from.has_value() == forked) todo.push_back(i);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t j; (j = next.fetch_add(1)) < todo.size();)
        outcomes[todo[j]] = execute_run(runs[todo[j]], bench, options, log_mutex);
    };
    const auto n = std::min<std::size_t>(std::max(options.jobs, 1), todo.size());
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
  };
  run_all(false);
  run_all(true);

  AblationReport report;
  report.seed = base.seed;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto& o = outcomes[i];
    report.rows.insert(report.rows.end(), o.rows.begin(), o.rows.end());
    if (!o.error.empty()) report.failures.push_back({{"run", runs[i].name}, {"error", o.error}});
    report.runs.push_back(std::move(o.entry));
  }
  write_file(options.out_dir / "ablation.csv", report.to_csv());
  write_file(options.out_dir / "ablation.json", report.to_json().dump(2) + "\n");
  return report;
}

}  // namespace essuda::evalkit
