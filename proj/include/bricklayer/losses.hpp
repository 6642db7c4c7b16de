#pragma once

#include <optional>
#include <span>
#include <vector>

#include "bricklayer/backbone.hpp"
#include "bricklayer/heads.hpp"
#include "bricklayer/numerics.hpp"
#include "bricklayer/types.hpp"

namespace bricklayer {

enum class IsoDenominator {
  NegativesOnly,  // Σ over k with y_k != y_i only
  AllOthers,      // Σ over every k != i (standard supervised-contrastive form)
};

enum class CentroidSource {
  EpochReplayMean,  // current-extractor mean of the domain's replay set, refreshed each epoch
  BuildTime,        // centroid of the full domain recorded when the replay set was built
};

struct LossConfig {
  double temperature = 1.5;
  double mu1 = 1.0;
  double mu2 = 0.1;
  bool normalize_features = true;
  IsoDenominator denominator = IsoDenominator::NegativesOnly;
  CentroidSource centroid = CentroidSource::EpochReplayMean;
  int refill_count = -1;  // refilled features per previous domain per batch; -1 matches replay presence

  void validate() const;
};

// β(αf1 + (1-α)f2) + (1-β)c.
Vector refill_with(std::span<const double> f1, std::span<const double> f2, std::span<const double> c, double alpha,
                   double beta);

struct Refilled {
  Vector feature;
  double alpha = 0.0;
  double beta = 0.0;
};

Refilled refill(std::span<const double> f1, std::span<const double> f2, std::span<const double> c, RngStream& rng);
Refilled refill(DomainLabel d1, std::span<const double> f1, DomainLabel d2, std::span<const double> f2,
                DomainLabel dc, std::span<const double> c, RngStream& rng);

// A refilled row built from two rows of the batch and a constant centroid.
struct RefillSpec {
  std::size_t first = 0;
  std::size_t second = 0;
  double alpha = 0.0;
  double beta = 0.0;
  Vector centroid;
  int label = 0;
};

struct LossPart {
  double value = 0.0;
  Matrix feature_grad;  // dL/dF, same shape as the feature rows
};

struct IsoResult : LossPart {
  std::size_t anchors = 0;
  std::size_t skipped_anchors = 0;  // anchors without a positive partner
  bool no_negatives = false;        // one domain only: loss contributes 0
};

IsoResult isolation_loss(const Matrix& features, std::span<const int> labels, const LossConfig& cfg);

// Isolation over the batch rows plus refilled rows; gradients of the refilled
// rows flow back into their two source rows (centroids are constants).
IsoResult isolation_loss(const Matrix& features, std::span<const int> labels, const std::vector<RefillSpec>& refills,
                         const LossConfig& cfg);

struct DistillResult : LossPart {
  bool no_replay = false;
};

// Σ over previous tasks of the per-task mean of ‖F_cur - F_frozen‖².
// Rows whose replay task id is <= 0 (new-task rows) are ignored.
DistillResult distillation_loss(const Matrix& current, const Matrix& frozen, std::span<const int> replay_task_ids);

// Parameter-level form: gradients flow only into the current extractor.
struct DistillParamResult {
  double value = 0.0;
  BackboneParams grads;
};
DistillParamResult distillation_loss(const BackboneParams& current, const FrozenBackbone& previous,
                                     const Matrix& replay_inputs, std::span<const int> task_ids);

struct DetectionResult : LossPart {
  Vector head_w_grad;  // gradient for the trainable head only
  double head_b_grad = 0.0;
};

// Σ over tasks of the mean binary cross-entropy of that task's rows under its
// own head. Frozen heads pass gradient to the features but not to themselves.
DetectionResult detection_loss(const HeadBank& bank, const Matrix& features, std::span<const int> labels,
                               std::span<const int> task_ids);

struct LossBreakdown {
  double l_iso = 0.0;
  double l_dis = 0.0;
  double l_det = 0.0;
  double l_overall = 0.0;
  Matrix feature_grad;
  Vector head_w_grad;
  double head_b_grad = 0.0;
};

// L = L_iso + μ1 L_dis + μ2 L_det, with the same weighting on every gradient.
// Absent parts contribute zero.
LossBreakdown overall_loss(const LossConfig& cfg, const LossPart* iso, const LossPart* dis,
                           const DetectionResult* det, std::size_t rows, std::size_t dim);

}  // namespace bricklayer
