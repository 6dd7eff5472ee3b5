#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace essuda::evalkit {

/// Renders a run directory into plot-ready CSV files under `out_dir`:
///   loss_curve.csv      one row per logged training iteration, one column per loss component
///   eval_progress.csv   stage,round,split,head,miou
///   per_class_iou.csv   stage,split,head,class,iou
///   dominance.csv       stage,split,C1,C2,C3,tied_classes (classes won by each head)
///   meta_weights.csv    round,class,name,w1,w2,w3,dominant
///   pseudo_coverage.csv round,coverage
///   round_gap.csv       round,gap,stop
/// Files whose inputs are missing are skipped. Output depends only on the
/// run directory contents. Returns the written paths.
std::vector<std::filesystem::path> render_run_report(const std::filesystem::path& run_dir,
                                                     const std::filesystem::path& out_dir);

}  // namespace essuda::evalkit
