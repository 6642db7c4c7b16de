#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bricklayer/backbone.hpp"
#include "bricklayer/heads.hpp"
#include "bricklayer/losses.hpp"
#include "bricklayer/metrics.hpp"
#include "bricklayer/sur.hpp"
#include "bricklayer/taskgen.hpp"

namespace bricklayer {

struct AblationFlags {
  bool disable_ida = false;
  bool disable_iso = false;
  bool disable_dr = false;
  // Lower bound: plain per-task logistic training, no replay or distillation.
  bool disable_all = false;

  bool use_ida() const { return !(disable_ida || disable_all); }
  bool use_iso() const { return !(disable_iso || disable_all); }
  bool use_dr() const { return use_iso() && !(disable_dr || disable_all); }
  bool use_replay() const { return !disable_all; }
  bool operator==(const AblationFlags&) const = default;
};

struct TrainConfig {
  int epochs = 10;
  std::size_t batch_size = 32;
  double lr = 2e-4;
  double gamma = 1e-3;
  LossConfig loss;
  std::size_t replay_per_domain = 64;
  ReplayStrategy strategy = ReplayStrategy::Sur;
  AblationFlags ablation;
  std::uint64_t seed = 0;

  double replay_fraction = 0.5;  // share of each increment batch drawn from replay
  std::vector<std::size_t> hidden = {64, 32};
  std::size_t feature_dim = 16;
  HeadInit head_init = HeadInit::WarmStart;
  InferenceAverage inference = InferenceAverage::Probability;
  int stability_draws = 1;
  bool reset_optimizer_per_task = true;
  std::size_t trace_every = 1;
  bool dump_features = false;

  void validate() const;
};

struct LossTraceRow {
  int task = 0;
  std::size_t step = 0;
  double l_iso = 0.0;
  double l_dis = 0.0;
  double l_det = 0.0;
  double l_overall = 0.0;
};

struct IncrementState {
  BackboneParams live;
  std::optional<FrozenBackbone> frozen;  // snapshot taken at the end of the last finished task
  HeadBank bank;
  std::vector<ReplaySet> replay;
  int tasks_done = 0;
  AdamState backbone_opt;
  AdamState head_opt;

  bool operator==(const IncrementState&) const = default;
};

// Position inside the current task's schedule.
struct TrainCursor {
  int task_id = 0;  // 0 = idle
  int epoch = 0;
  std::size_t step_in_epoch = 0;
  std::size_t task_step = 0;
  std::vector<Vector> epoch_centroids;  // [prev task][class] flattened as 2*(task-1)+class

  bool active() const { return task_id != 0; }
  bool operator==(const TrainCursor&) const = default;
};

// Composition of one training batch.
struct BatchPlan {
  std::vector<const Sample*> rows;
  std::vector<int> labels;           // 1 = fake
  std::vector<int> domains;          // DomainLabel::id
  std::vector<int> head_task;        // routing for the detection loss
  std::vector<int> replay_task;      // 0 for new-task rows
};

class IncrementalTrainer {
 public:
  IncrementalTrainer(TrainConfig cfg, std::size_t input_dim);

  void begin_task(const TaskDataset& task);
  // One optimizer step (plus one alignment step). Returns false once the
  // task's schedule is exhausted; no work is done in that call.
  bool step(const TaskDataset& task);
  void finish_task(const TaskDataset& task);
  void train_task(const TaskDataset& task);

  std::size_t steps_per_epoch(const TaskDataset& task) const;
  std::size_t replay_rows_per_batch(int task_id) const;
  BatchPlan plan_batch(const TaskDataset& task) const;

  const TrainConfig& config() const noexcept { return cfg_; }
  const IncrementState& state() const noexcept { return state_; }
  IncrementState& mutable_state() noexcept { return state_; }
  const TrainCursor& cursor() const noexcept { return cursor_; }
  TrainCursor& mutable_cursor() noexcept { return cursor_; }
  const std::vector<LossTraceRow>& trace() const noexcept { return trace_; }
  std::vector<LossTraceRow>& mutable_trace() noexcept { return trace_; }
  const RngStream& rng() const noexcept { return rng_; }

 private:
  void refresh_epoch_centroids();

  TrainConfig cfg_;
  RngStream rng_;
  IncrementState state_;
  TrainCursor cursor_;
  std::vector<LossTraceRow> trace_;
};

// Trains task 1 from an empty state: isolation + detection only.
void train_first_task(IncrementalTrainer& trainer, const TaskDataset& task);
// Trains task t+1 on the new data merged with replay sets 1..t.
void train_increment(IncrementalTrainer& trainer, const TaskDataset& task);

Vector score_samples(const IncrementState& state, const std::vector<Sample>& samples, InferenceAverage mode);

struct ForgettingRow {
  int task = 0;
  double auc_first = 0.0;
  double auc_last = 0.0;
  double fr = 0.0;
};

struct MmdAuditRow {
  int task = 0;
  ClassLabel domain = ClassLabel::Real;
  std::string strategy;
  double mmd = 0.0;
};

struct ProtocolResult {
  std::vector<std::vector<double>> auc;  // row i: after increment i+1, tasks 1..i+1
  std::vector<std::vector<double>> acc;
  std::vector<ForgettingRow> forgetting;
  std::vector<MmdAuditRow> mmd_audit;
  std::vector<LossTraceRow> loss_trace;
  std::uint64_t stream_hash = 0;
  double silhouette = 0.0;  // over all seen domains, eval split, final extractor
  Matrix features;          // optional final eval features
  std::vector<int> feature_domains;

  double final_average_auc() const;
  double mean_forgetting() const;  // over tasks 1..T-1
};

// Drives a whole protocol one unit of work at a time so it can be
// checkpointed between any two optimizer steps.
class ProtocolRunner {
 public:
  ProtocolRunner(ProtocolSpec spec, TrainConfig cfg);

  // Returns false once every task has been trained and evaluated.
  bool advance();
  void run_to_end();
  bool done() const { return next_task_ > static_cast<int>(stream_.size()) && !trainer_.cursor().active(); }

  const ProtocolSpec& spec() const noexcept { return spec_; }
  const std::vector<TaskDataset>& stream() const noexcept { return stream_; }
  IncrementalTrainer& trainer() noexcept { return trainer_; }
  const IncrementalTrainer& trainer() const noexcept { return trainer_; }
  ProtocolResult& result() noexcept { return result_; }
  const ProtocolResult& result() const noexcept { return result_; }
  int next_task() const noexcept { return next_task_; }
  void set_next_task(int t) noexcept { next_task_ = t; }

  // Final result with the loss trace attached.
  ProtocolResult finalize() const;

 private:
  void evaluate_increment(int task_id);

  ProtocolSpec spec_;
  std::vector<TaskDataset> stream_;
  IncrementalTrainer trainer_;
  ProtocolResult result_;
  int next_task_ = 1;
};

ProtocolResult run_protocol(const ProtocolSpec& spec, const TrainConfig& cfg);

}  // namespace bricklayer
