#include "bricklayer/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace bricklayer {

void LossConfig::validate() const {
  if (!(temperature > 0.0)) fail(ErrorCode::InvalidSpec, "temperature must be positive");
  if (!(mu1 >= 0.0) || !(mu2 >= 0.0)) fail(ErrorCode::InvalidSpec, "trade-off weights must be nonnegative");
  if (refill_count < -1) fail(ErrorCode::InvalidSpec, "refill_count must be >= 0 or -1 (auto)");
}

Vector refill_with(std::span<const double> f1, std::span<const double> f2, std::span<const double> c, double alpha,
                   double beta) {
  if (f1.size() != f2.size() || f1.size() != c.size()) fail(ErrorCode::ShapeMismatch, "refill operands differ in size");
  Vector out(f1.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = beta * (alpha * f1[k] + (1.0 - alpha) * f2[k]) + (1.0 - beta) * c[k];
  }
  return out;
}

Refilled refill(std::span<const double> f1, std::span<const double> f2, std::span<const double> c, RngStream& rng) {
  Refilled r;
  r.alpha = rng.uniform();
  r.beta = rng.uniform();
  r.feature = refill_with(f1, f2, c, r.alpha, r.beta);
  return r;
}

Refilled refill(DomainLabel d1, std::span<const double> f1, DomainLabel d2, std::span<const double> f2,
                DomainLabel dc, std::span<const double> c, RngStream& rng) {
  if (!(d1 == d2) || !(d1 == dc)) fail(ErrorCode::DomainMismatch, "refill operands come from different domains");
  return refill(f1, f2, c, rng);
}

namespace {

// Core of the isolation loss on an explicit row set.
IsoResult isolation_core(const Matrix& features, std::span<const int> labels, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (labels.size() != n) fail(ErrorCode::ShapeMismatch, "one domain label per feature row required");

  IsoResult out;
  out.feature_grad = Matrix(n, d);
  if (n == 0) return out;
  bool two_domains = false;
  for (int y : labels) two_domains |= (y != labels[0]);
  if (!two_domains) {
    out.no_negatives = true;
    return out;
  }

  Matrix z = features;
  Vector norms(n, 1.0);
  if (cfg.normalize_features) {
    for (std::size_t i = 0; i < n; ++i) {
      norms[i] = l2_norm(features.row(i));
      if (norms[i] == 0.0) fail(ErrorCode::ZeroNormVector, "isolation loss cannot normalize a zero feature");
      for (double& v : z.row(i)) v /= norms[i];
    }
  }
  const double inv_tau = 1.0 / cfg.temperature;
  Matrix sim(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double s = dot(z.row(i), z.row(j)) * inv_tau;
      sim(i, j) = s;
      sim(j, i) = s;
    }
  }

  // dL/dsim, accumulated per anchor and scaled by 1/anchors at the end.
  Matrix g(n, n);
  double total = 0.0;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t n_pos = 0;
    double pos_sum = 0.0;
    negatives.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      if (labels[k] == labels[i]) {
        ++n_pos;
        pos_sum += sim(i, k);
        if (cfg.denominator == IsoDenominator::AllOthers) negatives.push_back(k);
      } else {
        negatives.push_back(k);
      }
    }
    if (n_pos == 0) {
      ++out.skipped_anchors;
      continue;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k : negatives) mx = std::max(mx, sim(i, k));
    double denom = 0.0;
    for (std::size_t k : negatives) denom += std::exp(sim(i, k) - mx);
    const double lse = mx + std::log(denom);
    total += -pos_sum / static_cast<double>(n_pos) + lse;
    ++out.anchors;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i && labels[k] == labels[i]) g(i, k) -= 1.0 / static_cast<double>(n_pos);
    }
    for (std::size_t k : negatives) g(i, k) += std::exp(sim(i, k) - mx) / denom;
  }
  if (out.anchors == 0) return out;

  const double scale = 1.0 / static_cast<double>(out.anchors);
  out.value = total * scale;
  Matrix gz(n, d);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double w = g(a, b) * scale * inv_tau;
      if (w == 0.0) continue;
      auto ga = gz.row(a);
      auto gb = gz.row(b);
      const auto za = z.row(a);
      const auto zb = z.row(b);
      for (std::size_t k = 0; k < d; ++k) {
        ga[k] += w * zb[k];
        gb[k] += w * za[k];
      }
    }
  }
  if (cfg.normalize_features) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto zi = z.row(i);
      const auto gi = gz.row(i);
      const double proj = dot(zi, gi);
      auto out_row = out.feature_grad.row(i);
      for (std::size_t k = 0; k < d; ++k) out_row[k] = (gi[k] - zi[k] * proj) / norms[i];
    }
  } else {
    out.feature_grad = std::move(gz);
  }
  return out;
}

}  // namespace

IsoResult isolation_loss(const Matrix& features, std::span<const int> labels, const LossConfig& cfg) {
  return isolation_core(features, labels, cfg);
}

IsoResult isolation_loss(const Matrix& features, std::span<const int> labels, const std::vector<RefillSpec>& refills,
                         const LossConfig& cfg) {
  if (refills.empty()) return isolation_core(features, labels, cfg);
  const std::size_t n = features.rows();
  Matrix all = features;
  std::vector<int> all_labels(labels.begin(), labels.end());
  for (const auto& r : refills) {
    if (r.first >= n || r.second >= n) fail(ErrorCode::ShapeMismatch, "refill source row out of range");
    all.append_row(refill_with(features.row(r.first), features.row(r.second), r.centroid, r.alpha, r.beta));
    all_labels.push_back(r.label);
  }
  IsoResult full = isolation_core(all, all_labels, cfg);
  IsoResult out = full;
  out.feature_grad = Matrix(n, features.cols());
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(full.feature_grad.row(i).begin(), full.feature_grad.row(i).end(), out.feature_grad.row(i).begin());
  }
  for (std::size_t r = 0; r < refills.size(); ++r) {
    const auto& spec = refills[r];
    const auto g = full.feature_grad.row(n + r);
    auto g1 = out.feature_grad.row(spec.first);
    for (std::size_t k = 0; k < g.size(); ++k) g1[k] += spec.beta * spec.alpha * g[k];
    auto g2 = out.feature_grad.row(spec.second);
    for (std::size_t k = 0; k < g.size(); ++k) g2[k] += spec.beta * (1.0 - spec.alpha) * g[k];
  }
  return out;
}

DistillResult distillation_loss(const Matrix& current, const Matrix& frozen, std::span<const int> replay_task_ids) {
  if (current.rows() != frozen.rows() || current.cols() != frozen.cols() || replay_task_ids.size() != current.rows()) {
    fail(ErrorCode::ShapeMismatch, "distillation operands differ in shape");
  }
  DistillResult out;
  out.feature_grad = Matrix(current.rows(), current.cols());
  std::map<int, std::size_t> counts;
  for (int t : replay_task_ids) {
    if (t > 0) ++counts[t];
  }
  if (counts.empty()) {
    out.no_replay = true;
    return out;
  }
  for (std::size_t i = 0; i < current.rows(); ++i) {
    if (replay_task_ids[i] <= 0) continue;
    const double inv = 1.0 / static_cast<double>(counts[replay_task_ids[i]]);
    const auto a = current.row(i);
    const auto b = frozen.row(i);
    auto g = out.feature_grad.row(i);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double diff = a[k] - b[k];
      out.value += diff * diff * inv;
      g[k] = 2.0 * diff * inv;
    }
  }
  return out;
}

DistillParamResult distillation_loss(const BackboneParams& current, const FrozenBackbone& previous,
                                     const Matrix& replay_inputs, std::span<const int> task_ids) {
  DistillParamResult out;
  out.grads = current.zeros_like();
  if (replay_inputs.rows() == 0) return out;
  const ForwardTrace trace = forward_trace(current, replay_inputs);
  const Matrix frozen = forward(previous.params(), replay_inputs);
  const auto part = distillation_loss(trace.features(), frozen, task_ids);
  out.value = part.value;
  out.grads = backward(current, trace, part.feature_grad);
  return out;
}

DetectionResult detection_loss(const HeadBank& bank, const Matrix& features, std::span<const int> labels,
                               std::span<const int> task_ids) {
  if (labels.size() != features.rows() || task_ids.size() != features.rows()) {
    fail(ErrorCode::ShapeMismatch, "detection needs one label and task id per row");
  }
  DetectionResult out;
  out.feature_grad = Matrix(features.rows(), features.cols());
  out.head_w_grad.assign(features.cols(), 0.0);
  if (bank.empty()) fail(ErrorCode::EmptyBank, "detection needs at least one head");
  const int trainable_id = bank.newest().frozen ? -1 : bank.newest().task_id;

  std::map<int, std::size_t> counts;
  for (int t : task_ids) ++counts[t];
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const TaskHead& h = bank.head(task_ids[i]);
    const auto f = features.row(i);
    const double z = head_logit(h, f);
    const double y = labels[i] == 1 ? 1.0 : 0.0;
    const double inv = 1.0 / static_cast<double>(counts[task_ids[i]]);
    out.value += (softplus(z) - y * z) * inv;
    const double dz = (logistic(z) - y) * inv;
    auto g = out.feature_grad.row(i);
    for (std::size_t k = 0; k < f.size(); ++k) g[k] = dz * h.w[k];
    if (h.task_id == trainable_id) {
      for (std::size_t k = 0; k < f.size(); ++k) out.head_w_grad[k] += dz * f[k];
      out.head_b_grad += dz;
    }
  }
  return out;
}

LossBreakdown overall_loss(const LossConfig& cfg, const LossPart* iso, const LossPart* dis,
                           const DetectionResult* det, std::size_t rows, std::size_t dim) {
  LossBreakdown out;
  out.feature_grad = Matrix(rows, dim);
  out.head_w_grad.assign(dim, 0.0);
  auto check = [&](const LossPart* p) {
    if (p && (p->feature_grad.rows() != rows || p->feature_grad.cols() != dim)) {
      fail(ErrorCode::ShapeMismatch, "loss parts were computed on different batches");
    }
  };
  check(iso);
  check(dis);
  check(det);
  out.l_iso = iso ? iso->value : 0.0;
  out.l_dis = dis ? dis->value : 0.0;
  out.l_det = det ? det->value : 0.0;
  out.l_overall = out.l_iso + cfg.mu1 * out.l_dis + cfg.mu2 * out.l_det;
  auto total = out.feature_grad.values();
  for (std::size_t k = 0; k < total.size(); ++k) {
    const double gi = iso ? iso->feature_grad.values()[k] : 0.0;
    const double gd = dis ? dis->feature_grad.values()[k] : 0.0;
    const double gt = det ? det->feature_grad.values()[k] : 0.0;
    total[k] = gi + cfg.mu1 * gd + cfg.mu2 * gt;
  }
  if (det) {
    for (std::size_t k = 0; k < dim; ++k) out.head_w_grad[k] = cfg.mu2 * det->head_w_grad[k];
    out.head_b_grad = cfg.mu2 * det->head_b_grad;
  }
  return out;
}

}  // namespace bricklayer
