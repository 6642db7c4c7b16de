#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bricklayer/config.hpp"

namespace bricklayer {

struct MatrixVariant {
  std::string name;
  AblationFlags ablation;
};

// full, w/o IDA, w/o L_iso, w/o DR, w/o All (the last keeps replay and
// distillation and drops the three proposed components).
std::vector<MatrixVariant> standard_ablation_variants();

struct MatrixCell {
  std::string name;
  AblationFlags ablation;
  ReplayStrategy strategy = ReplayStrategy::Sur;
};

struct ExperimentMatrix {
  RunConfig base;
  std::vector<MatrixVariant> variants = {{"full", {}}};
  std::vector<ReplayStrategy> strategies;  // empty: the base strategy only
  std::vector<std::uint64_t> seeds = {1};
  std::string reference = "full";

  // variants × strategies; named by variant alone when one strategy is used.
  std::vector<MatrixCell> cells() const;
  RunConfig cell_config(const MatrixCell& cell, std::uint64_t seed) const;
};

// {"base": {...} | "base_config": "file.yaml", "variants": [...] | "standard",
//  "strategies": [...], "seeds": [...], "reference": "full"}
ExperimentMatrix matrix_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
ExperimentMatrix load_matrix(const std::string& path);

struct CellRun {
  std::string cell;
  std::uint64_t seed = 0;
  double final_average_auc = 0.0;
  double mean_forgetting = 0.0;
  double silhouette = 0.0;
  std::string stream_hash;
};

struct CellSummary {
  std::string cell;
  std::size_t runs = 0;
  double median_auc = 0.0;
  double median_fr = 0.0;
  double median_silhouette = 0.0;
  double median_delta_auc = 0.0;  // paired (cell - reference) per seed
  std::size_t wins = 0;           // seeds where the reference beats this cell
  std::size_t losses = 0;
  std::size_t ties = 0;
  double sign_test_p = 1.0;  // two-sided, ties dropped
};

struct MatrixRunOptions {
  std::string out_dir;        // empty: keep everything in memory
  std::size_t threads = 0;    // 0: worker_cap()
  bool reuse_existing = true; // skip cells already persisted under out_dir
  std::function<void(const CellRun&)> on_cell_done;
};

struct MatrixResult {
  std::vector<CellRun> runs;  // cell-major, seeds in matrix order
  std::vector<CellSummary> summary;
};

// BRICKLAYER_THREADS if set and positive, else hardware concurrency.
std::size_t worker_cap();

double median_of(std::vector<double> values);
double sign_test_p(std::size_t wins, std::size_t losses);

CellRun cell_run_from_report(const std::string& cell, const nlohmann::json& report);

// Throws PairingViolation if two cells saw different task streams for a seed.
std::vector<CellSummary> summarize(const ExperimentMatrix& matrix, const std::vector<CellRun>& runs);

MatrixResult run_matrix(const ExperimentMatrix& matrix, const MatrixRunOptions& opts = {});

// Recomputes the summary from reports persisted under out_dir/cells.
MatrixResult load_matrix_result(const ExperimentMatrix& matrix, const std::string& out_dir);

std::string summary_csv(const std::vector<CellSummary>& summary);
std::string cell_path(const std::string& out_dir, const std::string& cell, std::uint64_t seed);

}  // namespace bricklayer
