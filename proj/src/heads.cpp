#include "bricklayer/heads.hpp"

#include <cmath>

namespace bricklayer {

double head_logit(const TaskHead& head, std::span<const double> f) {
  if (f.size() != head.w.size()) fail(ErrorCode::ShapeMismatch, "feature and head dimensions differ");
  return dot(head.w, f) + head.b;
}

TaskHead make_head(int task_id, std::size_t dim, RngStream rng) {
  TaskHead h;
  h.task_id = task_id;
  const double limit = std::sqrt(6.0 / static_cast<double>(dim + 1));
  h.w.resize(dim);
  do {
    for (double& v : h.w) v = rng.uniform(-limit, limit);
  } while (l2_norm(h.w) == 0.0);
  return h;
}

Vector align_step(std::span<const double> theta_new, std::span<const double> theta_prev, double gamma) {
  if (theta_new.size() != theta_prev.size()) fail(ErrorCode::ShapeMismatch, "head normals differ in dimension");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail(ErrorCode::InvalidSpec, "alignment rate must lie in [0, 1]");
  const double scale = l2_norm(theta_new);
  const Vector unit_new = l2_normalize(theta_new);
  const Vector unit_prev = l2_normalize(theta_prev);
  Vector blend(unit_new.size());
  for (std::size_t k = 0; k < blend.size(); ++k) blend[k] = (1.0 - gamma) * unit_new[k] + gamma * unit_prev[k];
  const double blend_norm = l2_norm(blend);
  if (blend_norm < 1e-12) fail(ErrorCode::AntipodalDegenerate, "aligned direction vanished");
  for (double& v : blend) v = scale * (v / blend_norm);
  return blend;
}

HeadBank::HeadBank(std::vector<TaskHead> heads) : heads_(std::move(heads)) {
  for (std::size_t i = 1; i < heads_.size(); ++i) {
    if (heads_[i].task_id != heads_[i - 1].task_id + 1) fail(ErrorCode::NonSequentialTask, "head ids not sequential");
  }
}

void HeadBank::spawn_first(std::size_t dim, RngStream rng) {
  if (!heads_.empty()) fail(ErrorCode::NonSequentialTask, "bank already holds heads");
  heads_.push_back(make_head(1, dim, rng));
}

void HeadBank::spawn(int task_id, RngStream rng, HeadInit init) {
  if (heads_.empty()) fail(ErrorCode::NonSequentialTask, "spawn_first must create task 1's head");
  if (task_id != heads_.back().task_id + 1) {
    fail(ErrorCode::NonSequentialTask, "expected task " + std::to_string(heads_.back().task_id + 1) + ", got " +
                                           std::to_string(task_id));
  }
  heads_.back().frozen = true;
  TaskHead next;
  if (init == HeadInit::WarmStart) {
    next = heads_.back();
    next.task_id = task_id;
    next.frozen = false;
  } else {
    next = make_head(task_id, heads_.back().w.size(), rng);
  }
  heads_.push_back(std::move(next));
}

bool HeadBank::align_newest(double gamma) {
  if (heads_.size() < 2) return false;
  TaskHead& cur = heads_.back();
  const TaskHead& prev = heads_[heads_.size() - 2];
  try {
    cur.w = align_step(cur.w, prev.w, gamma);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AntipodalDegenerate) throw;
    return false;
  }
  cur.b = (1.0 - gamma) * cur.b + gamma * prev.b;
  return true;
}

const TaskHead& HeadBank::head(int task_id) const {
  for (const auto& h : heads_) {
    if (h.task_id == task_id) return h;
  }
  fail(ErrorCode::MissingHead, "no head for task " + std::to_string(task_id));
}

const TaskHead& HeadBank::newest() const {
  if (heads_.empty()) fail(ErrorCode::EmptyBank, "head bank is empty");
  return heads_.back();
}

TaskHead& HeadBank::trainable() {
  if (heads_.empty()) fail(ErrorCode::EmptyBank, "head bank is empty");
  return heads_.back();
}

double infer_average(const HeadBank& bank, std::span<const double> f, InferenceAverage mode) {
  if (bank.empty()) fail(ErrorCode::EmptyBank, "inference needs at least one head");
  // Running mean: identical head outputs reproduce that output exactly.
  double mean = 0.0;
  double k = 0.0;
  for (const auto& h : bank.heads()) {
    const double v = mode == InferenceAverage::Probability ? head_probability(h, f) : head_logit(h, f);
    k += 1.0;
    mean += (v - mean) / k;
  }
  return mode == InferenceAverage::Probability ? mean : logistic(mean);
}

}  // namespace bricklayer
