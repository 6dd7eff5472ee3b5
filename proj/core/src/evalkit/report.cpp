#include "essuda/evalkit/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "essuda/ensemble/weight_report.hpp"
#include "essuda/evalkit/metrics.hpp"

namespace essuda::evalkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Writer {
 public:
  explicit Writer(const fs::path& out_dir) : out_dir_(out_dir) {}
  void write(const std::string& name, const std::string& text) {
    const auto path = out_dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    written.push_back(path);
  }
  std::vector<fs::path> written;

 private:
  fs::path out_dir_;
};

std::vector<json> read_metrics(const fs::path& path) {
  std::vector<json> events;
  std::istringstream in(read_file(path));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      events.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return events;
}

void render_metrics(const std::vector<json>& events, Writer& w) {
  std::set<std::string> components;
  for (const auto& e : events)
    if (e.value("event", "") == "train")
      for (const auto& [k, v] : e.at("loss").items()) components.insert(k);

  std::string loss = "stage,round,iteration,global_iteration,lr";
  for (const auto& c : components) loss += "," + c;
  loss += "\n";
  std::string progress = "stage,round,split,head,miou\n";
  std::string coverage = "round,coverage\n";
  std::string gaps = "round,gap,stop\n";
  for (const auto& e : events) {
    const auto kind = e.value("event", "");
    if (kind == "train") {
      loss += e.at("stage").get<std::string>() + "," + std::to_string(e.at("round").get<int>()) + "," +
              std::to_string(e.at("iteration").get<long>()) + "," +
              std::to_string(e.at("global_iteration").get<long>()) + "," + num(e.at("lr").get<double>());
      for (const auto& c : components) {
        const auto& l = e.at("loss");
        loss += "," + (l.contains(c) ? num(l.at(c).get<double>()) : std::string());
      }
      loss += "\n";
    } else if (kind == "eval") {
      for (const auto& [head, v] : e.at("miou").items()) {
        progress += e.at("stage").get<std::string>() + "," + std::to_string(e.at("round").get<int>()) + "," +
                    e.at("split").get<std::string>() + "," + head + "," + num(v.get<double>()) + "\n";
      }
    } else if (kind == "pseudo_labels") {
      coverage += std::to_string(e.at("round").get<int>()) + "," + num(e.at("coverage").get<double>()) + "\n";
    } else if (kind == "round_end") {
      gaps += std::to_string(e.at("round").get<int>()) + "," + num(e.at("gap").get<double>()) + "," +
              (e.at("stop").get<bool>() ? "1" : "0") + "\n";
    }
  }
  w.write("loss_curve.csv", loss);
  w.write("eval_progress.csv", progress);
  w.write("pseudo_coverage.csv", coverage);
  w.write("round_gap.csv", gaps);
}

// eval/<stage>_<split>.json, sorted by name for a stable order.
void render_evals(const fs::path& eval_dir, Writer& w) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(eval_dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::string per_class = "stage,split,head,class,iou\n";
  std::string dominance = "stage,split,C1,C2,C3,tied_classes\n";
  for (const auto& f : files) {
    const auto j = json::parse(read_file(f));
    const auto split = j.at("split").get<std::string>();
    const auto stem = f.stem().string();
    const auto stage = stem.size() > split.size() + 1 ? stem.substr(0, stem.size() - split.size() - 1) : stem;
    std::vector<std::vector<double>> base_heads;
    for (const auto& h : j.at("heads")) {
      const auto head = h.at("head").get<std::string>();
      std::vector<double> ious;
      for (const auto& v : h.at("iou")) ious.push_back(v.is_null() ? std::nan("") : v.get<double>());
      for (std::size_t c = 0; c < ious.size(); ++c)
        per_class += stage + "," + split + "," + head + "," + std::to_string(c) + "," + num(ious[c]) + "\n";
      if (head != "Cm") base_heads.push_back(std::move(ious));
    }
    if (base_heads.size() == 3) {
      const auto d = dominance_table(base_heads);
      std::string tied;
      for (std::size_t i = 0; i < d.tied_classes.size(); ++i) tied += (i ? " " : "") + std::to_string(d.tied_classes[i]);
      dominance += stage + "," + split + "," + num(d.counts[0]) + "," + num(d.counts[1]) + "," + num(d.counts[2]) +
                   "," + tied + "\n";
    }
  }
  w.write("per_class_iou.csv", per_class);
  w.write("dominance.csv", dominance);
}

void render_weights(const fs::path& weights_dir, Writer& w) {
  std::map<int, fs::path> rounds;
  for (const auto& entry : fs::directory_iterator(weights_dir)) {
    const auto name = entry.path().filename().string();
    int r = 0;
    if (std::sscanf(name.c_str(), "meta_round_%d.csv", &r) == 1) rounds[r] = entry.path();
  }
  std::string out = "round,class,name,w1,w2,w3,dominant\n";
  for (const auto& [r, path] : rounds) {
    for (const auto& row : ensemble::WeightTable::from_csv(read_file(path)).rows) {
      out += std::to_string(r) + "," + std::to_string(row.cls) + "," + row.name + "," + num(row.w1) + "," +
             num(row.w2) + "," + num(row.w3) + "," + std::to_string(row.dominant()) + "\n";
    }
  }
  w.write("meta_weights.csv", out);
}

}  // namespace

std::vector<fs::path> render_run_report(const fs::path& run_dir, const fs::path& out_dir) {
  if (!fs::is_directory(run_dir)) throw std::runtime_error("not a run directory: " + run_dir.string());
  fs::create_directories(out_dir);
  Writer w(out_dir);
  if (fs::exists(run_dir / "metrics.jsonl")) render_metrics(read_metrics(run_dir / "metrics.jsonl"), w);
  if (fs::is_directory(run_dir / "eval")) render_evals(run_dir / "eval", w);
  if (fs::is_directory(run_dir / "weights")) render_weights(run_dir / "weights", w);
  return w.written;
}

}  // namespace essuda::evalkit
