#include "bricklayer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace bricklayer {

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidSpec, what); };
  if (epochs < 1) bad("epochs must be >= 1");
  if (batch_size < 4) bad("batch_size must be >= 4");
  if (!(lr > 0.0)) bad("lr must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) bad("gamma must lie in (0, 1)");
  if (replay_per_domain < 1) bad("replay_per_domain must be >= 1");
  if (strategy != ReplayStrategy::Random && replay_per_domain % 2 != 0) {
    fail(ErrorCode::OddReplaySize, "replay_per_domain must be even for strategy " + to_string(strategy));
  }
  if (!(replay_fraction > 0.0 && replay_fraction < 1.0)) bad("replay_fraction must lie in (0, 1)");
  if (feature_dim < 1) bad("feature_dim must be >= 1");
  if (stability_draws < 1) bad("stability_draws must be >= 1");
  if (trace_every < 1) bad("trace_every must be >= 1");
  loss.validate();
}

IncrementalTrainer::IncrementalTrainer(TrainConfig cfg, std::size_t input_dim)
    : cfg_(std::move(cfg)), rng_(RngStream(cfg_.seed).split("train")) {
  cfg_.validate();
  BackboneArch arch{input_dim, cfg_.hidden, cfg_.feature_dim};
  state_.live = BackboneParams::init(arch, rng_.split("backbone-init"));
}

std::size_t IncrementalTrainer::replay_rows_per_batch(int task_id) const {
  const int previous = task_id - 1;
  if (previous <= 0 || !cfg_.ablation.use_replay()) return 0;
  auto rows = static_cast<std::size_t>(std::lround(static_cast<double>(cfg_.batch_size) * cfg_.replay_fraction));
  rows = std::max<std::size_t>(rows, static_cast<std::size_t>(previous));
  return std::min(rows, cfg_.batch_size - 1);
}

std::size_t IncrementalTrainer::steps_per_epoch(const TaskDataset& task) const {
  const std::size_t fresh = cfg_.batch_size - replay_rows_per_batch(task.task_id);
  return std::max<std::size_t>(1, task.train.size() / fresh);
}

void IncrementalTrainer::begin_task(const TaskDataset& task) {
  if (cursor_.active()) fail(ErrorCode::NonSequentialTask, "a task is already in progress");
  if (task.task_id != state_.tasks_done + 1) {
    fail(ErrorCode::NonSequentialTask, "expected task " + std::to_string(state_.tasks_done + 1));
  }
  if (task.task_id == 1) {
    state_.bank.spawn_first(cfg_.feature_dim, rng_.split("head", 1));
  } else {
    state_.bank.spawn(task.task_id, rng_.split("head", static_cast<std::uint64_t>(task.task_id)), cfg_.head_init);
  }
  if (cfg_.reset_optimizer_per_task || task.task_id == 1) state_.backbone_opt = {};
  state_.head_opt = {};
  cursor_ = TrainCursor{};
  cursor_.task_id = task.task_id;
}

void IncrementalTrainer::refresh_epoch_centroids() {
  cursor_.epoch_centroids.clear();
  for (const auto& set : state_.replay) {
    for (const auto& dom : set.domains) {
      if (cfg_.loss.centroid == CentroidSource::BuildTime || dom.entries.empty()) {
        cursor_.epoch_centroids.push_back(dom.build_centroid);
        continue;
      }
      std::vector<const Sample*> rows;
      for (const auto& e : dom.entries) rows.push_back(&e.sample);
      cursor_.epoch_centroids.push_back(compute_centroid(forward(state_.live, stack_inputs(rows))));
    }
  }
}

BatchPlan IncrementalTrainer::plan_batch(const TaskDataset& task) const {
  const int t = task.task_id;
  const RngStream task_rng = rng_.split("task", static_cast<std::uint64_t>(t));
  const std::size_t replay_rows = replay_rows_per_batch(t);
  const std::size_t fresh = cfg_.batch_size - replay_rows;
  RngStream order_rng = task_rng.split("epoch-order", static_cast<std::uint64_t>(cursor_.epoch));
  const auto order = order_rng.permutation(task.train.size());

  BatchPlan plan;
  auto push = [&](const Sample& s, int replay_task) {
    plan.rows.push_back(&s);
    plan.labels.push_back(s.label == ClassLabel::Fake ? 1 : 0);
    plan.domains.push_back(s.domain().id());
    plan.head_task.push_back(s.task_id);
    plan.replay_task.push_back(replay_task);
  };
  const std::size_t begin = cursor_.step_in_epoch * fresh;
  for (std::size_t k = 0; k < fresh; ++k) push(task.train[order[(begin + k) % order.size()]], 0);

  if (replay_rows > 0) {
    // Strata ordered (t1 real, t2 real, ..., t1 fake, t2 fake, ...) so any run
    // of `previous` consecutive strata touches every previous task.
    const std::size_t previous = state_.replay.size();
    const std::size_t strata = 2 * previous;
    RngStream draw_rng = task_rng.split("replay-draw", cursor_.task_step);
    for (std::size_t k = 0; k < replay_rows; ++k) {
      const std::size_t s = (cursor_.task_step * replay_rows + k) % strata;
      const auto& dom = state_.replay[s % previous].domains[s / previous];
      if (dom.entries.empty()) continue;
      const auto& entry = dom.entries[draw_rng.uniform_index(dom.entries.size())];
      push(entry.sample, dom.domain.task_id);
    }
  }
  return plan;
}

bool IncrementalTrainer::step(const TaskDataset& task) {
  if (!cursor_.active() || cursor_.task_id != task.task_id) fail(ErrorCode::NonSequentialTask, "task not begun");
  const std::size_t per_epoch = steps_per_epoch(task);
  if (cursor_.step_in_epoch >= per_epoch) {
    cursor_.step_in_epoch = 0;
    ++cursor_.epoch;
  }
  if (cursor_.epoch >= cfg_.epochs) return false;
  if (cursor_.step_in_epoch == 0) refresh_epoch_centroids();

  const int t = task.task_id;
  const BatchPlan plan = plan_batch(task);
  const Matrix x = stack_inputs(plan.rows);
  const ForwardTrace trace = forward_trace(state_.live, x);
  const Matrix& f = trace.features();
  const std::size_t n = f.rows();
  const std::size_t d = f.cols();
  const RngStream step_rng = rng_.split("task", static_cast<std::uint64_t>(t)).split("step", cursor_.task_step);

  std::optional<IsoResult> iso;
  if (cfg_.ablation.use_iso()) {
    std::vector<RefillSpec> refills;
    if (cfg_.ablation.use_dr() && t > 1) {
      RngStream refill_rng = step_rng.split("refill");
      std::map<int, std::vector<std::size_t>> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (plan.replay_task[i] > 0) members[plan.domains[i]].push_back(i);
      }
      for (const auto& [domain, rows] : members) {
        const std::size_t count = cfg_.loss.refill_count < 0 ? rows.size() : static_cast<std::size_t>(cfg_.loss.refill_count);
        for (std::size_t r = 0; r < count; ++r) {
          RefillSpec spec;
          spec.first = rows[refill_rng.uniform_index(rows.size())];
          spec.second = rows[refill_rng.uniform_index(rows.size())];
          spec.alpha = refill_rng.uniform();
          spec.beta = refill_rng.uniform();
          spec.centroid = cursor_.epoch_centroids.at(static_cast<std::size_t>(domain));
          spec.label = domain;
          refills.push_back(std::move(spec));
        }
      }
    }
    iso = isolation_loss(f, plan.domains, refills, cfg_.loss);
  }

  std::optional<DistillResult> dis;
  if (t > 1 && state_.frozen && cfg_.ablation.use_replay()) {
    Matrix frozen(n, d);
    std::vector<const Sample*> replay_rows;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < n; ++i) {
      if (plan.replay_task[i] > 0) {
        replay_rows.push_back(plan.rows[i]);
        where.push_back(i);
      }
    }
    if (!replay_rows.empty()) {
      const Matrix ff = forward(state_.frozen->params(), stack_inputs(replay_rows));
      for (std::size_t k = 0; k < where.size(); ++k) {
        std::copy(ff.row(k).begin(), ff.row(k).end(), frozen.row(where[k]).begin());
      }
    }
    dis = distillation_loss(f, frozen, plan.replay_task);
  }

  const DetectionResult det = detection_loss(state_.bank, f, plan.labels, plan.head_task);
  const LossBreakdown total =
      overall_loss(cfg_.loss, iso ? &*iso : nullptr, dis ? &*dis : nullptr, &det, n, d);

  const BackboneParams grads = backward(state_.live, trace, total.feature_grad);
  adam_step(state_.live.values(), grads.values(), state_.backbone_opt, cfg_.lr);

  TaskHead& head = state_.bank.trainable();
  Vector head_params = head.w;
  head_params.push_back(head.b);
  Vector head_grads = total.head_w_grad;
  head_grads.push_back(total.head_b_grad);
  adam_step(head_params, head_grads, state_.head_opt, cfg_.lr);
  std::copy(head_params.begin(), head_params.end() - 1, head.w.begin());
  head.b = head_params.back();

  if (t > 1 && cfg_.ablation.use_ida()) state_.bank.align_newest(cfg_.gamma);

  if (cursor_.task_step % cfg_.trace_every == 0) {
    trace_.push_back({t, cursor_.task_step, total.l_iso, total.l_dis, total.l_det, total.l_overall});
  }
  ++cursor_.step_in_epoch;
  ++cursor_.task_step;
  return true;
}

void IncrementalTrainer::finish_task(const TaskDataset& task) {
  if (!cursor_.active() || cursor_.task_id != task.task_id) fail(ErrorCode::NonSequentialTask, "task not begun");
  FrozenBackbone frozen = snapshot(state_.live);
  ReplayBuildOptions opts{cfg_.replay_per_domain, cfg_.strategy, cfg_.stability_draws};
  state_.replay.push_back(build_replay_set(task, frozen, state_.bank.head(task.task_id), opts,
                                           rng_.split("replay-build", static_cast<std::uint64_t>(task.task_id))));
  state_.frozen = std::move(frozen);
  state_.tasks_done = task.task_id;
  cursor_ = TrainCursor{};
}

void IncrementalTrainer::train_task(const TaskDataset& task) {
  begin_task(task);
  while (step(task)) {
  }
  finish_task(task);
}

void train_first_task(IncrementalTrainer& trainer, const TaskDataset& task) {
  if (trainer.state().tasks_done != 0 || task.task_id != 1) {
    fail(ErrorCode::NonSequentialTask, "first task must be task 1 on an empty state");
  }
  trainer.train_task(task);
}

void train_increment(IncrementalTrainer& trainer, const TaskDataset& task) {
  if (trainer.state().tasks_done < 1) fail(ErrorCode::NoReplayData, "increment needs a trained first task");
  trainer.train_task(task);
}

Vector score_samples(const IncrementState& state, const std::vector<Sample>& samples, InferenceAverage mode) {
  const Matrix f = forward(state.live, stack_inputs(samples));
  Vector scores(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) scores[i] = infer_average(state.bank, f.row(i), mode);
  return scores;
}

double ProtocolResult::final_average_auc() const {
  if (auc.empty()) return 0.0;
  double s = 0.0;
  for (double v : auc.back()) s += v;
  return s / static_cast<double>(auc.back().size());
}

double ProtocolResult::mean_forgetting() const {
  if (forgetting.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < forgetting.size(); ++i) s += forgetting[i].fr;
  return s / static_cast<double>(forgetting.size() - 1);
}

ProtocolRunner::ProtocolRunner(ProtocolSpec spec, TrainConfig cfg)
    : spec_(std::move(spec)), stream_(generate_stream(spec_)), trainer_(std::move(cfg), spec_.input_dim()) {
  result_.stream_hash = stream_hash(stream_);
}

bool ProtocolRunner::advance() {
  if (trainer_.cursor().active()) {
    const auto& task = stream_[static_cast<std::size_t>(trainer_.cursor().task_id - 1)];
    if (!trainer_.step(task)) {
      trainer_.finish_task(task);
      evaluate_increment(task.task_id);
    }
    return !done();
  }
  if (next_task_ > static_cast<int>(stream_.size())) return false;
  trainer_.begin_task(stream_[static_cast<std::size_t>(next_task_ - 1)]);
  ++next_task_;
  return true;
}

void ProtocolRunner::run_to_end() {
  while (advance()) {
  }
}

void ProtocolRunner::evaluate_increment(int task_id) {
  const auto& state = trainer_.state();
  const auto mode = trainer_.config().inference;
  std::vector<double> auc_row;
  std::vector<double> acc_row;
  for (int j = 1; j <= task_id; ++j) {
    const auto& eval = stream_[static_cast<std::size_t>(j - 1)].eval;
    const Vector scores = score_samples(state, eval, mode);
    std::vector<int> labels;
    labels.reserve(eval.size());
    for (const auto& s : eval) labels.push_back(s.label == ClassLabel::Fake ? 1 : 0);
    auc_row.push_back(auc(scores, labels));
    acc_row.push_back(accuracy(scores, labels));
  }
  result_.auc.push_back(std::move(auc_row));
  result_.acc.push_back(std::move(acc_row));

  const auto& task = stream_[static_cast<std::size_t>(task_id - 1)];
  const auto& replay = state.replay.back();
  for (const auto& dom : replay.domains) {
    const Matrix full = forward(state.frozen->params(), stack_inputs(task.train_domain(dom.domain.cls)));
    result_.mmd_audit.push_back({task_id, dom.domain.cls, to_string(replay.strategy), mmd(dom.cached_features(), full)});
  }

  if (task_id == static_cast<int>(stream_.size())) {
    result_.forgetting.clear();
    for (int j = 1; j <= task_id; ++j) {
      const double first = result_.auc[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(j - 1)];
      const double last = result_.auc.back()[static_cast<std::size_t>(j - 1)];
      result_.forgetting.push_back({j, first, last, forgetting_rate(first, last)});
    }
    Matrix features;
    std::vector<int> domains;
    for (const auto& t : stream_) {
      const Matrix f = forward(state.live, stack_inputs(t.eval));
      for (std::size_t i = 0; i < f.rows(); ++i) {
        features.append_row(f.row(i));
        domains.push_back(t.eval[i].domain().id());
      }
    }
    result_.silhouette = domain_separation(features, domains).silhouette;
    if (trainer_.config().dump_features) {
      result_.features = std::move(features);
      result_.feature_domains = std::move(domains);
    }
  }
}

ProtocolResult ProtocolRunner::finalize() const {
  ProtocolResult out = result_;
  out.loss_trace = trainer_.trace();
  return out;
}

ProtocolResult run_protocol(const ProtocolSpec& spec, const TrainConfig& cfg) {
  ProtocolRunner runner(spec, cfg);
  runner.run_to_end();
  return runner.finalize();
}

}  // namespace bricklayer
