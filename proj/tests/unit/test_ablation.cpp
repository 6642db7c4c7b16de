#include <doctest.h>

#include <filesystem>

#include "bricklayer/ablation.hpp"
#include "bricklayer/error.hpp"
#include "bricklayer/report.hpp"

using namespace bricklayer;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_base() {
  RunConfig cfg = parse_run_config(R"(protocol:
  tasks: 2
  train_per_task: 120
  eval_per_task: 60
train:
  epochs: 1
  replay_per_domain: 8
  hidden: [8]
  feature_dim: 4
)");
  cfg.resolve();
  return cfg;
}

}  // namespace

TEST_SUITE("ablation") {

TEST_CASE("standard variants") {
  const auto v = standard_ablation_variants();
  REQUIRE(v.size() == 5);
  CHECK(v[0].name == "full");
  CHECK(v[0].ablation == AblationFlags{});
  const auto& all = v[4];
  CHECK(all.name == "w/o All");
  CHECK(all.ablation.disable_ida);
  CHECK(all.ablation.disable_iso);
  CHECK(all.ablation.disable_dr);
  CHECK_FALSE(all.ablation.disable_all);
}

TEST_CASE("sign test") {
  CHECK(sign_test_p(0, 0) == 1.0);
  CHECK(sign_test_p(10, 0) == doctest::Approx(2.0 / 1024.0).epsilon(1e-15));
  CHECK(sign_test_p(8, 2) == doctest::Approx(2.0 * 56.0 / 1024.0).epsilon(1e-15));
  CHECK(sign_test_p(5, 5) == 1.0);
}

TEST_CASE("matrix json") {
  const auto m = matrix_from_json(nlohmann::json{{"base", {{"protocol", {{"tasks", 2}}}}},
                                                 {"variants", "standard"},
                                                 {"strategies", {"sur", "center"}},
                                                 {"seeds", {1, 2, 3}}});
  CHECK(m.cells().size() == 10);
  CHECK(m.seeds.size() == 3);
  const RunConfig c = m.cell_config(m.cells()[3], 2);
  CHECK(c.seed == 2);
  CHECK(c.protocol.seed == 2);
  CHECK_THROWS_AS(matrix_from_json(nlohmann::json{{"seeds", {1}}, {"variantz", "standard"}}), Error);
}

TEST_CASE("one-cell matrix equals a plain run") {
  ExperimentMatrix m;
  m.base = tiny_base();
  m.seeds = {4};
  const MatrixResult r = run_matrix(m, {.threads = 1});
  REQUIRE(r.runs.size() == 1);
  REQUIRE(r.summary.size() == 1);
  const RunConfig cfg = m.cell_config(m.cells()[0], 4);
  const auto report = report_json(cfg, run_protocol(cfg.protocol, cfg.train));
  CHECK(r.runs[0].final_average_auc == final_average_auc(report));
  CHECK(r.summary[0].median_auc == final_average_auc(report));
  CHECK(r.summary[0].median_delta_auc == 0.0);
}

TEST_CASE("five variants over two seeds persist and reload") {
  const fs::path dir = fs::temp_directory_path() / "bricklayer_matrix";
  fs::remove_all(dir);
  ExperimentMatrix m;
  m.base = tiny_base();
  m.variants = standard_ablation_variants();
  m.seeds = {1, 2};
  std::size_t done = 0;
  const MatrixResult r = run_matrix(m, {.out_dir = dir.string(), .threads = 2, .on_cell_done = [&](const CellRun&) { ++done; }});
  CHECK(r.runs.size() == 10);
  CHECK(done == 10);
  CHECK(r.summary.size() == 5);
  CHECK(fs::exists(dir / "summary.csv"));
  for (const auto& run : r.runs) CHECK(fs::exists(cell_path(dir.string(), run.cell, run.seed)));

  const MatrixResult again = load_matrix_result(m, dir.string());
  CHECK(summary_csv(again.summary) == summary_csv(r.summary));

  // A second pass reuses every persisted cell instead of rewriting it.
  const auto stamp = fs::last_write_time(cell_path(dir.string(), "full", 1));
  std::size_t rerun = 0;
  run_matrix(m, {.out_dir = dir.string(), .threads = 1, .on_cell_done = [&](const CellRun&) { ++rerun; }});
  CHECK(rerun == 10);
  CHECK(fs::last_write_time(cell_path(dir.string(), "full", 1)) == stamp);
  fs::remove_all(dir);
}

TEST_CASE("cells with different streams for a seed are rejected") {
  ExperimentMatrix m;
  m.variants = {{"full", {}}, {"other", {}}};
  m.seeds = {1};
  const std::vector<CellRun> runs{{"full", 1, 0.8, 0.0, 0.0, "aa"}, {"other", 1, 0.7, 0.0, 0.0, "bb"}};
  try {
    summarize(m, runs);
    FAIL("expected PairingViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PairingViolation);
  }
}

TEST_CASE("summary counts wins for the reference") {
  ExperimentMatrix m;
  m.variants = {{"full", {}}, {"other", {}}};
  m.seeds = {1, 2, 3};
  const std::vector<CellRun> runs{{"full", 1, 0.8, 0, 0, "a"},  {"full", 2, 0.7, 0, 0, "b"},
                                  {"full", 3, 0.6, 0, 0, "c"},  {"other", 1, 0.7, 0, 0, "a"},
                                  {"other", 2, 0.75, 0, 0, "b"}, {"other", 3, 0.5, 0, 0, "c"}};
  const auto s = summarize(m, runs);
  REQUIRE(s.size() == 2);
  CHECK(s[1].wins == 2);
  CHECK(s[1].losses == 1);
  CHECK(s[1].median_auc == 0.7);
  CHECK(s[1].median_delta_auc == doctest::Approx(-0.1).epsilon(1e-12));
}

}  // TEST_SUITE
