#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essuda/dataio/benchmark.hpp"
#include "essuda/trainer/config.hpp"

namespace essuda::evalkit {

/// One configuration of the comparison matrix.
struct AblationRun {
  std::string name;        // directory name, e.g. "ours_ent"
  std::string method;      // CSV method column: sed, mtri, ours, ours_ssl_t
  trainer::RunConfig config;
  /// Continue from another run's stage-1 checkpoint instead of training stage 1.
  std::optional<std::string> fork_from;
  int min_round = 0;       // rounds below this are not reported (shared with the parent)
};

/// {sed, mtri, ours} x {entropy on, off} for stage 1, plus ours with SSL
/// rounds with and without translated target inputs. With SSL rounds the
/// entropy-on ours run doubles as the untranslated SSL variant.
std::vector<AblationRun> ablation_matrix(const trainer::RunConfig& base);

struct AblationRow {
  std::string method;
  std::string head;
  bool entropy = true;
  int ssl_round = 0;
  std::string split;
  std::string cls;  // class index or "ALL" (then iou holds mIoU)
  double iou = 0.0;
};

struct AblationReport {
  std::uint64_t seed = 0;
  std::vector<AblationRow> rows;
  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json failures = nlohmann::json::array();

  /// `method,head,entropy,ssl_round,split,class,iou`
  std::string to_csv() const;
  nlohmann::json to_json() const;
  /// mIoU from the ALL row, if present.
  std::optional<double> miou(const std::string& method, const std::string& head, bool entropy, int round,
                             const std::string& split) const;
  /// Best ALL value over C1..C3 (not Cm).
  std::optional<double> best_head_miou(const std::string& method, bool entropy, int round,
                                       const std::string& split) const;
};

std::string rows_to_csv(const std::vector<AblationRow>& rows);
std::vector<AblationRow> rows_from_csv(const std::string& text);

/// Rows of one run's evaluation history.
std::vector<AblationRow> history_rows(const std::string& method, bool entropy, const nlohmann::json& history,
                                      int min_round = 0);

struct AblationOptions {
  std::filesystem::path out_dir;
  std::ostream* log = nullptr;
  /// Reuse completed runs found under out_dir (final.ckpt present).
  bool reuse_existing = true;
  /// Independent runs executed concurrently; forked runs wait for their parent.
  int jobs = 1;
};

/// Runs the matrix (sequentially unless jobs > 1). A failing run is recorded in `failures`
/// and the suite continues. Writes ablation.csv and ablation.json to out_dir.
AblationReport run_ablation_suite(const data::Benchmark& bench, const trainer::RunConfig& base,
                                  const AblationOptions& options);

}  // namespace essuda::evalkit
