#pragma once

#include <span>
#include <vector>

#include "bricklayer/numerics.hpp"

namespace bricklayer {

// Linear real/fake classifier for one task: logit = w·f + b, P(fake) = σ(logit).
struct TaskHead {
  int task_id = 1;
  Vector w;
  double b = 0.0;
  bool frozen = false;

  bool operator==(const TaskHead&) const = default;
};

enum class HeadInit { WarmStart, ColdRandom };
enum class InferenceAverage { Probability, Logit };

double head_logit(const TaskHead& head, std::span<const double> f);
inline double head_probability(const TaskHead& head, std::span<const double> f) {
  return logistic(head_logit(head, f));
}

TaskHead make_head(int task_id, std::size_t dim, RngStream rng);

// θ_new ← ‖θ_new‖ · normalize((1-γ)θ̃_new + γθ̃_prev). The norm is kept
// exactly. Throws AntipodalDegenerate when the blend vanishes.
Vector align_step(std::span<const double> theta_new, std::span<const double> theta_prev, double gamma);

class HeadBank {
 public:
  HeadBank() = default;
  explicit HeadBank(std::vector<TaskHead> heads);

  // Freezes the newest head and appends a new trainable one for task_id.
  void spawn(int task_id, RngStream rng, HeadInit init = HeadInit::WarmStart);
  void spawn_first(std::size_t dim, RngStream rng);

  // Aligns the trainable head with its predecessor: normal via align_step,
  // bias by b ← (1-γ)b + γ b_prev. Returns false if the step was skipped.
  bool align_newest(double gamma);

  const TaskHead& head(int task_id) const;
  const TaskHead& newest() const;
  TaskHead& trainable();

  bool empty() const noexcept { return heads_.empty(); }
  std::size_t size() const noexcept { return heads_.size(); }
  const std::vector<TaskHead>& heads() const noexcept { return heads_; }

  bool operator==(const HeadBank&) const = default;

 private:
  std::vector<TaskHead> heads_;
};

// Mean over all heads of P(fake); logit-space averaging is available as an option.
double infer_average(const HeadBank& bank, std::span<const double> f,
                     InferenceAverage mode = InferenceAverage::Probability);

}  // namespace bricklayer
