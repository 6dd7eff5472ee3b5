#include "essuda/ensemble/weight_report.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace essuda::ensemble {

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int WeightRow::dominant() const {
  int best = 1;
  double value = w1;
  if (w2 > value) best = 2, value = w2;
  if (w3 > value) best = 3;
  return best;
}

std::string WeightTable::to_csv() const {
  std::string out = "class,name,w1,w2,w3,dominant\n";
  for (const auto& r : rows) {
    out += std::to_string(r.cls) + "," + r.name + "," + exact(r.w1) + "," + exact(r.w2) + "," +
           exact(r.w3) + "," + std::to_string(r.dominant()) + "\n";
  }
  return out;
}

nlohmann::json WeightTable::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"class", r.cls}, {"name", r.name}, {"w1", r.w1}, {"w2", r.w2}, {"w3", r.w3},
                   {"dominant", r.dominant()}});
  }
  return {{"classes", arr}};
}

WeightTable WeightTable::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("class,name,w1,w2,w3", 0) != 0) {
    throw std::invalid_argument("weight table CSV: missing header");
  }
  WeightTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() < 5) throw std::invalid_argument("weight table CSV: short row '" + line + "'");
    WeightRow r;
    r.cls = std::stoi(cells[0]);
    r.name = cells[1];
    r.w1 = std::stod(cells[2]);
    r.w2 = std::stod(cells[3]);
    r.w3 = std::stod(cells[4]);
    t.rows.push_back(std::move(r));
  }
  return t;
}

WeightTable WeightTable::from_json(const nlohmann::json& j) {
  WeightTable t;
  for (const auto& e : j.at("classes")) {
    t.rows.push_back({e.at("class").get<int>(), e.value("name", std::string{}),
                      e.at("w1").get<double>(), e.at("w2").get<double>(), e.at("w3").get<double>()});
  }
  return t;
}

MetaWeights WeightTable::weights() const {
  MetaWeights m;
  for (const auto& r : rows) {
    m.w[0].push_back(r.w1);
    m.w[1].push_back(r.w2);
    m.w[2].push_back(r.w3);
  }
  return m;
}

WeightTable weight_report(const MetaWeights& w, const std::vector<std::string>& class_names) {
  w.validate();
  if (!class_names.empty() && static_cast<int>(class_names.size()) != w.num_classes()) {
    throw std::invalid_argument("weight_report: " + std::to_string(class_names.size()) +
                                " class names for " + std::to_string(w.num_classes()) + " classes");
  }
  WeightTable t;
  for (int c = 0; c < w.num_classes(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    t.rows.push_back({c, class_names.empty() ? "class_" + std::to_string(c) : class_names[i],
                      w.w[0][i], w.w[1][i], w.w[2][i]});
  }
  return t;
}

}  // namespace essuda::ensemble
