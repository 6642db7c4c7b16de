#include "bricklayer/sur.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace bricklayer {

std::string to_string(ReplayStrategy s) {
  switch (s) {
    case ReplayStrategy::Sur: return "sur";
    case ReplayStrategy::Center: return "center";
    case ReplayStrategy::CenterHard: return "center_hard";
    case ReplayStrategy::Random: return "random";
    case ReplayStrategy::RandomUniform: return "random_uniform";
  }
  return "unknown";
}

ReplayStrategy replay_strategy_from_string(const std::string& s) {
  for (auto v : {ReplayStrategy::Sur, ReplayStrategy::Center, ReplayStrategy::CenterHard, ReplayStrategy::Random,
                 ReplayStrategy::RandomUniform}) {
    if (to_string(v) == s) return v;
  }
  fail(ErrorCode::ConfigError, "unknown replay strategy '" + s + "'");
}

Vector compute_centroid(const Matrix& features) {
  if (features.rows() == 0) fail(ErrorCode::EmptyFeatureSet, "centroid of an empty feature set");
  Vector c(features.cols(), 0.0);
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto row = features.row(r);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] += row[k];
  }
  for (double& v : c) v /= static_cast<double>(features.rows());
  return c;
}

Vector compute_magnitudes(const Matrix& features, std::span<const double> centroid) {
  if (features.cols() != centroid.size()) fail(ErrorCode::ShapeMismatch, "centroid dimension differs from features");
  Vector m(features.rows());
  for (std::size_t r = 0; r < features.rows(); ++r) m[r] = std::sqrt(squared_distance(features.row(r), centroid));
  return m;
}

Angularity compute_angularity(const Matrix& features, std::span<const double> centroid, bool strict) {
  if (features.cols() != centroid.size()) fail(ErrorCode::ShapeMismatch, "centroid dimension differs from features");
  Angularity a{Matrix(features.rows(), features.cols()), std::vector<bool>(features.rows(), false)};
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto f = features.row(r);
    auto out = a.rows.row(r);
    for (std::size_t k = 0; k < f.size(); ++k) out[k] = f[k] - centroid[k];
    const double n = l2_norm(out);
    if (n == 0.0) {
      if (strict) fail(ErrorCode::DegenerateRow, "row " + std::to_string(r) + " coincides with the centroid");
      a.degenerate[r] = true;
      continue;
    }
    for (double& v : out) v /= n;
  }
  return a;
}

StabilityResult compute_stability(const FrozenBackbone& frozen, const std::vector<Sample>& samples,
                                  const RngStream& rng, int draws) {
  if (draws < 1) fail(ErrorCode::InvalidSpec, "stability needs at least one shuffle draw");
  StabilityResult out;
  out.scores.assign(samples.size(), 0.0);
  if (samples.empty()) return out;
  const Matrix original = forward(frozen.params(), stack_inputs(samples));
  std::vector<bool> dead(samples.size(), false);
  for (int draw = 0; draw < draws; ++draw) {
    std::vector<Sample> shuffled;
    shuffled.reserve(samples.size());
    for (const auto& s : samples) {
      RngStream local = rng.split("stability", s.id).split("draw", static_cast<std::uint64_t>(draw));
      shuffled.push_back(grid_shuffle(s, local));
    }
    const Matrix moved = forward(frozen.params(), stack_inputs(shuffled));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (dead[i]) continue;
      try {
        out.scores[i] += cosine_similarity(moved.row(i), original.row(i));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ZeroNormVector) throw;
        dead[i] = true;
      }
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (dead[i]) {
      out.scores[i] = -1.0;
      ++out.zero_norm_count;
    } else {
      out.scores[i] /= static_cast<double>(draws);
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> segment_bounds(std::size_t n, std::size_t segments) {
  if (segments == 0 || segments > n) fail(ErrorCode::ReplayTooLarge, "cannot cut " + std::to_string(n) + " rows into " +
                                                                        std::to_string(segments) + " segments");
  const std::size_t base = n / segments;
  const std::size_t extra = n % segments;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(segments);
  std::size_t begin = 0;
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

namespace {

void check_replay_size(std::size_t n, std::size_t n_r, bool allow_odd) {
  if (n_r == 0) fail(ErrorCode::InvalidSpec, "replay size must be positive");
  if (!allow_odd && n_r % 2 != 0) fail(ErrorCode::OddReplaySize, "replay size " + std::to_string(n_r) + " is odd");
  if (n_r > n) {
    fail(ErrorCode::ReplayTooLarge, "replay size " + std::to_string(n_r) + " exceeds " + std::to_string(n) + " samples");
  }
}

std::vector<std::size_t> magnitude_order(const Vector& magnitudes) {
  std::vector<std::size_t> order(magnitudes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return magnitudes[a] < magnitudes[b]; });
  return order;
}

// Fills up to n_r from unselected rows in descending stability, lowest index first on ties.
std::size_t backfill_by_stability(std::vector<std::size_t>& picked, std::vector<bool>& taken,
                                  std::span<const double> stability, std::size_t n_r) {
  std::size_t added = 0;
  if (picked.size() >= n_r) return added;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < taken.size(); ++i) {
    if (!taken[i]) rest.push_back(i);
  }
  std::stable_sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) { return stability[a] > stability[b]; });
  for (std::size_t i : rest) {
    if (picked.size() >= n_r) break;
    picked.push_back(i);
    taken[i] = true;
    ++added;
  }
  return added;
}

}  // namespace

std::vector<std::size_t> select_sur(const Matrix& features, std::span<const double> stability, std::size_t n_r,
                                    SurDiagnostics* diagnostics) {
  const std::size_t n = features.rows();
  check_replay_size(n, n_r, false);
  if (stability.size() != n) fail(ErrorCode::ShapeMismatch, "one stability score per row required");

  const Vector c = compute_centroid(features);
  Vector magnitudes = compute_magnitudes(features, c);
  Angularity ang = compute_angularity(features, c);
  const auto order = magnitude_order(magnitudes);
  const auto segments = segment_bounds(n, n_r / 2);

  std::vector<std::size_t> picked;
  std::vector<bool> taken(n, false);
  std::vector<double> partner_similarity;
  for (const auto& [begin, end] : segments) {
    std::size_t stable = order[begin];
    for (std::size_t p = begin + 1; p < end; ++p) {
      const std::size_t i = order[p];
      if (stability[i] > stability[stable] || (stability[i] == stability[stable] && i < stable)) stable = i;
    }
    picked.push_back(stable);
    taken[stable] = true;

    std::optional<std::size_t> partner;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t p = begin; p < end; ++p) {
      const std::size_t j = order[p];
      if (j == stable || ang.degenerate[j]) continue;
      const double sim = dot(ang.rows.row(j), ang.rows.row(stable));
      if (sim < best || (sim == best && partner && j < *partner)) {
        best = sim;
        partner = j;
      }
    }
    if (partner) {
      picked.push_back(*partner);
      taken[*partner] = true;
      partner_similarity.push_back(best);
    } else {
      partner_similarity.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  const std::size_t backfilled = backfill_by_stability(picked, taken, stability, n_r);

  if (diagnostics) {
    diagnostics->magnitudes = std::move(magnitudes);
    diagnostics->angularity = std::move(ang.rows);
    diagnostics->stability.assign(stability.begin(), stability.end());
    diagnostics->sorted_order = order;
    diagnostics->segments = segments;
    diagnostics->degenerate_rows.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (ang.degenerate[i]) diagnostics->degenerate_rows.push_back(i);
    }
    diagnostics->angular_similarity = std::move(partner_similarity);
    diagnostics->backfilled = backfilled;
  }
  return picked;
}

std::vector<std::size_t> baseline_select(ReplayStrategy strategy, const Matrix& features,
                                         std::span<const double> stability, std::span<const double> logits,
                                         std::size_t n_r, RngStream rng) {
  const std::size_t n = features.rows();
  check_replay_size(n, n_r, strategy == ReplayStrategy::Random);
  switch (strategy) {
    case ReplayStrategy::Sur:
      return select_sur(features, stability, n_r);
    case ReplayStrategy::Center: {
      const auto order = magnitude_order(compute_magnitudes(features, compute_centroid(features)));
      return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_r)};
    }
    case ReplayStrategy::CenterHard: {
      if (logits.size() != n) fail(ErrorCode::ShapeMismatch, "center+hard needs one head logit per row");
      const auto order = magnitude_order(compute_magnitudes(features, compute_centroid(features)));
      std::vector<std::size_t> picked(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_r / 2));
      std::vector<bool> taken(n, false);
      for (std::size_t i : picked) taken[i] = true;
      Vector confidence(n);
      for (std::size_t i = 0; i < n; ++i) confidence[i] = std::abs(logits[i]);
      for (std::size_t i : magnitude_order(confidence)) {
        if (picked.size() >= n_r) break;
        if (taken[i]) continue;
        picked.push_back(i);
        taken[i] = true;
      }
      return picked;
    }
    case ReplayStrategy::Random: {
      auto perm = rng.permutation(n);
      perm.resize(n_r);
      return perm;
    }
    case ReplayStrategy::RandomUniform: {
      if (stability.size() != n) fail(ErrorCode::ShapeMismatch, "one stability score per row required");
      const auto order = magnitude_order(compute_magnitudes(features, compute_centroid(features)));
      std::vector<std::size_t> picked;
      std::vector<bool> taken(n, false);
      for (const auto& [begin, end] : segment_bounds(n, n_r / 2)) {
        const std::size_t len = end - begin;
        const std::size_t first = rng.uniform_index(len);
        picked.push_back(order[begin + first]);
        taken[order[begin + first]] = true;
        if (len < 2) continue;
        std::size_t second = rng.uniform_index(len - 1);
        if (second >= first) ++second;
        picked.push_back(order[begin + second]);
        taken[order[begin + second]] = true;
      }
      backfill_by_stability(picked, taken, stability, n_r);
      return picked;
    }
  }
  fail(ErrorCode::InvalidSpec, "unknown replay strategy");
}

std::vector<std::size_t> select_replay(ReplayStrategy strategy, const Matrix& features,
                                       std::span<const double> stability, std::span<const double> logits,
                                       std::size_t n_r, RngStream rng) {
  return baseline_select(strategy, features, stability, logits, n_r, rng);
}

Matrix ReplayDomain::cached_features() const {
  Matrix m;
  for (const auto& e : entries) m.append_row(e.cached_feature);
  return m;
}

ReplaySet build_replay_set(const TaskDataset& task, const FrozenBackbone& frozen, const TaskHead& head,
                           const ReplayBuildOptions& opts, const RngStream& rng) {
  ReplaySet set;
  set.builder_task_id = task.task_id;
  set.strategy = opts.strategy;
  for (auto cls : {ClassLabel::Real, ClassLabel::Fake}) {
    const auto samples = task.train_domain(cls);
    ReplayDomain& dom = set.domains[static_cast<int>(cls)];
    dom.domain = {task.task_id, cls};
    dom.requested = opts.per_domain;
    if (samples.empty()) fail(ErrorCode::EmptyFeatureSet, "task has no samples of one class");

    const Matrix features = forward(frozen.params(), stack_inputs(samples));
    dom.build_centroid = compute_centroid(features);

    std::size_t n_r = opts.per_domain;
    if (n_r > samples.size()) {
      n_r = opts.strategy == ReplayStrategy::Random ? samples.size() : samples.size() - samples.size() % 2;
      dom.shortfall = opts.per_domain - n_r;
    }
    Vector stability;
    if (opts.strategy == ReplayStrategy::Sur || opts.strategy == ReplayStrategy::RandomUniform) {
      stability = compute_stability(frozen, samples, rng.split("stability"), opts.stability_draws).scores;
    }
    Vector logits;
    if (opts.strategy == ReplayStrategy::CenterHard) {
      logits.resize(samples.size());
      for (std::size_t i = 0; i < samples.size(); ++i) logits[i] = head_logit(head, features.row(i));
    }
    const auto picked = select_replay(opts.strategy, features, stability, logits, n_r,
                                      rng.split("select", static_cast<std::uint64_t>(cls)));
    dom.entries.reserve(picked.size());
    for (std::size_t i : picked) dom.entries.push_back({samples[i], features.row_vector(i)});
  }
  return set;
}

}  // namespace bricklayer
