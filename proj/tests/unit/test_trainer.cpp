#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "bricklayer/config.hpp"
#include "bricklayer/error.hpp"
#include "bricklayer/report.hpp"
#include "bricklayer/trainer.hpp"

using namespace bricklayer;

namespace {

ProtocolSpec small_spec(int tasks, std::uint64_t seed) {
  ProtocolSpec s;
  s.tasks = tasks;
  s.train_per_task = 240;
  s.eval_per_task = 120;
  s.seed = seed;
  return s;
}

TrainConfig small_cfg(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.epochs = 2;
  c.replay_per_domain = 16;
  c.hidden = {16};
  c.feature_dim = 8;
  return c;
}

double head_angle(const HeadBank& bank) {
  const Vector a = l2_normalize(bank.head(2).w), b = l2_normalize(bank.head(1).w);
  double d2 = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
  return 2.0 * std::asin(std::min(1.0, std::sqrt(d2) / 2.0));
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("first task learns and stores a replay set") {
  ProtocolSpec spec;
  spec.tasks = 1;
  spec.seed = 7;
  TrainConfig cfg;
  cfg.seed = 7;
  const auto stream = generate_stream(spec);
  IncrementalTrainer trainer(cfg, spec.input_dim());
  train_first_task(trainer, stream[0]);

  REQUIRE(trainer.state().replay.size() == 1);
  CHECK(trainer.state().replay[0].size() == 2 * cfg.replay_per_domain);
  CHECK(trainer.state().frozen.has_value());
  CHECK(trainer.state().frozen->params() == trainer.state().live);

  const Vector scores = score_samples(trainer.state(), stream[0].eval, cfg.inference);
  std::vector<int> labels;
  for (const auto& s : stream[0].eval) labels.push_back(s.label == ClassLabel::Fake ? 1 : 0);
  CHECK(auc(scores, labels) > 0.9);

  for (const auto& row : trainer.trace()) {
    CHECK(row.l_dis == 0.0);
    CHECK(std::abs(row.l_overall - (row.l_iso + cfg.loss.mu1 * row.l_dis + cfg.loss.mu2 * row.l_det)) < 1e-10);
  }
}

TEST_CASE("first task needs an empty state") {
  const auto stream = generate_stream(small_spec(2, 1));
  IncrementalTrainer trainer(small_cfg(1), stream[0].train[0].values.size());
  try {
    train_increment(trainer, stream[1]);
    FAIL("expected NoReplayData");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoReplayData);
  }
}

TEST_CASE("lower bound trains on detection alone") {
  TrainConfig cfg = small_cfg(2);
  cfg.ablation.disable_all = true;
  const auto result = run_protocol(small_spec(2, 2), cfg);
  for (const auto& row : result.loss_trace) {
    CHECK(row.l_iso == 0.0);
    CHECK(row.l_dis == 0.0);
    CHECK(row.l_overall == cfg.loss.mu2 * row.l_det);
  }
}

TEST_CASE("without all keeps distillation and detection") {
  TrainConfig cfg = small_cfg(3);
  cfg.ablation.disable_ida = cfg.ablation.disable_iso = cfg.ablation.disable_dr = true;
  const auto spec = small_spec(2, 3);
  const auto result = run_protocol(spec, cfg);
  bool saw_dis = false;
  for (const auto& row : result.loss_trace) {
    CHECK(row.l_iso == 0.0);
    if (row.task == 2 && row.l_dis > 0.0) saw_dis = true;
  }
  CHECK(saw_dis);
}

TEST_CASE("loss decomposition holds on every logged step") {
  const auto result = run_protocol(small_spec(3, 4), small_cfg(4));
  REQUIRE_FALSE(result.loss_trace.empty());
  const LossConfig loss;
  for (const auto& row : result.loss_trace) {
    CHECK(std::abs(row.l_overall - (row.l_iso + loss.mu1 * row.l_dis + loss.mu2 * row.l_det)) < 1e-10);
  }
}

TEST_CASE("replay sets and frozen heads do not change") {
  const auto spec = small_spec(3, 5);
  const auto stream = generate_stream(spec);
  IncrementalTrainer trainer(small_cfg(5), spec.input_dim());
  train_first_task(trainer, stream[0]);
  const ReplaySet first = trainer.state().replay[0];
  train_increment(trainer, stream[1]);
  const TaskHead head1 = trainer.state().bank.head(1);
  const ReplaySet second = trainer.state().replay[1];
  train_increment(trainer, stream[2]);
  CHECK(trainer.state().replay[0] == first);
  CHECK(trainer.state().replay[1] == second);
  CHECK(trainer.state().bank.head(1) == head1);
  CHECK(trainer.state().bank.head(1).frozen);
  CHECK(trainer.state().bank.head(2).frozen);
  CHECK_FALSE(trainer.state().bank.head(3).frozen);
}

TEST_CASE("increment batches cover every seen task") {
  const auto spec = small_spec(3, 6);
  const auto stream = generate_stream(spec);
  IncrementalTrainer trainer(small_cfg(6), spec.input_dim());
  train_first_task(trainer, stream[0]);
  train_increment(trainer, stream[1]);
  trainer.begin_task(stream[2]);
  for (int k = 0; k < 10; ++k) {
    const BatchPlan plan = trainer.plan_batch(stream[2]);
    CHECK(plan.rows.size() == trainer.config().batch_size);
    const std::set<int> tasks(plan.head_task.begin(), plan.head_task.end());
    CHECK(tasks == std::set<int>{1, 2, 3});
    for (std::size_t i = 0; i < plan.rows.size(); ++i) {
      CHECK(plan.head_task[i] == plan.rows[i]->task_id);
      CHECK(plan.domains[i] == plan.rows[i]->domain().id());
    }
    REQUIRE(trainer.step(stream[2]));
  }
}

TEST_CASE("alignment pulls a cold-started head toward its predecessor") {
  std::vector<double> before, after;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TrainConfig cfg = small_cfg(seed);
    cfg.head_init = HeadInit::ColdRandom;
    cfg.epochs = 1;
    const auto spec = small_spec(2, seed);
    const auto stream = generate_stream(spec);
    IncrementalTrainer trainer(cfg, spec.input_dim());
    train_first_task(trainer, stream[0]);
    trainer.begin_task(stream[1]);
    before.push_back(head_angle(trainer.state().bank));
    while (trainer.step(stream[1])) {
    }
    after.push_back(head_angle(trainer.state().bank));
  }
  CHECK(median(after) <= median(before));
}

TEST_CASE("auc matrix is lower triangular") {
  const auto one = run_protocol(small_spec(1, 8), small_cfg(8));
  REQUIRE(one.auc.size() == 1);
  CHECK(one.auc[0].size() == 1);

  const auto three = run_protocol(small_spec(3, 8), small_cfg(8));
  REQUIRE(three.auc.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(three.auc[i].size() == i + 1);
    CHECK(three.acc[i].size() == i + 1);
  }
  CHECK(three.forgetting.size() == 3);
}

TEST_CASE("same seed gives identical report bytes") {
  RunConfig rc;
  rc.seed = 9;
  rc.protocol = small_spec(2, 9);
  rc.train = small_cfg(9);
  rc.resolve();
  const auto a = dump_report(report_json(rc, run_protocol(rc.protocol, rc.train)));
  const auto b = dump_report(report_json(rc, run_protocol(rc.protocol, rc.train)));
  CHECK(a == b);
}

TEST_CASE("stepwise runner matches the one-shot run") {
  const auto spec = small_spec(2, 10);
  const auto cfg = small_cfg(10);
  ProtocolRunner runner(spec, cfg);
  while (runner.advance()) {
  }
  const auto stepped = runner.finalize();
  const auto direct = run_protocol(spec, cfg);
  CHECK(stepped.auc == direct.auc);
  CHECK(runner.trainer().state() == [&] {
    ProtocolRunner other(spec, cfg);
    other.run_to_end();
    return other.trainer().state();
  }());
}

}  // TEST_SUITE
