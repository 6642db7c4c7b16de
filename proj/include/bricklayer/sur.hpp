#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bricklayer/backbone.hpp"
#include "bricklayer/heads.hpp"
#include "bricklayer/numerics.hpp"
#include "bricklayer/taskgen.hpp"
#include "bricklayer/types.hpp"

namespace bricklayer {

enum class ReplayStrategy { Sur, Center, CenterHard, Random, RandomUniform };

std::string to_string(ReplayStrategy s);
ReplayStrategy replay_strategy_from_string(const std::string& s);

Vector compute_centroid(const Matrix& features);
Vector compute_magnitudes(const Matrix& features, std::span<const double> centroid);

struct Angularity {
  Matrix rows;                   // unit rows; zero for degenerate rows
  std::vector<bool> degenerate;  // row coincides with the centroid
};

// Rows of (F - c) scaled to unit norm. Rows at distance 0 from c are flagged
// (or rejected with DegenerateRow when strict).
Angularity compute_angularity(const Matrix& features, std::span<const double> centroid, bool strict = false);

struct StabilityResult {
  Vector scores;
  std::size_t zero_norm_count = 0;  // samples assigned -1 because a feature vanished
};

// Cosine similarity between E(x) and E(grid_shuffle(x)). Each sample draws its
// permutations from rng split by sample id, so the scores do not depend on the
// order of the inputs.
StabilityResult compute_stability(const FrozenBackbone& frozen, const std::vector<Sample>& samples,
                                   const RngStream& rng, int draws = 1);

// Contiguous [begin, end) ranges; the remainder goes one-per-leading-segment.
std::vector<std::pair<std::size_t, std::size_t>> segment_bounds(std::size_t n, std::size_t segments);

struct SurDiagnostics {
  Vector magnitudes;
  Matrix angularity;
  Vector stability;
  std::vector<std::size_t> sorted_order;
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::vector<std::size_t> degenerate_rows;
  std::vector<double> angular_similarity;  // cos(A_a, A_s) per segment, NaN if no partner
  std::size_t backfilled = 0;
};

// Sparse Uniform Replay over one domain. Returns n_r distinct row indices:
// per magnitude segment the most stable row, then the row whose angularity is
// least similar to it; any deficit is backfilled by descending stability.
std::vector<std::size_t> select_sur(const Matrix& features, std::span<const double> stability, std::size_t n_r,
                                    SurDiagnostics* diagnostics = nullptr);

// Center: n_r smallest magnitudes. CenterHard: n_r/2 smallest magnitudes plus
// n_r/2 smallest |logit|. Random: uniform without replacement. RandomUniform:
// SUR segments with two random distinct picks each.
std::vector<std::size_t> baseline_select(ReplayStrategy strategy, const Matrix& features,
                                         std::span<const double> stability, std::span<const double> logits,
                                         std::size_t n_r, RngStream rng);

std::vector<std::size_t> select_replay(ReplayStrategy strategy, const Matrix& features,
                                       std::span<const double> stability, std::span<const double> logits,
                                       std::size_t n_r, RngStream rng);

struct ReplayEntry {
  Sample sample;
  Vector cached_feature;  // frozen-extractor feature at build time

  bool operator==(const ReplayEntry&) const = default;
};

struct ReplayDomain {
  DomainLabel domain;
  std::vector<ReplayEntry> entries;
  Vector build_centroid;
  std::size_t requested = 0;
  std::size_t shortfall = 0;  // requested - entries.size() when the domain was too small

  Matrix cached_features() const;
  bool operator==(const ReplayDomain&) const = default;
};

struct ReplaySet {
  int builder_task_id = 0;
  ReplayStrategy strategy = ReplayStrategy::Sur;
  std::array<ReplayDomain, 2> domains;  // [Real, Fake]

  std::size_t size() const { return domains[0].entries.size() + domains[1].entries.size(); }
  bool operator==(const ReplaySet&) const = default;
};

struct ReplayBuildOptions {
  std::size_t per_domain = 64;
  ReplayStrategy strategy = ReplayStrategy::Sur;
  int stability_draws = 1;
};

// Selection runs independently on the task's Real and Fake training domains
// under the post-task snapshot.
ReplaySet build_replay_set(const TaskDataset& task, const FrozenBackbone& frozen, const TaskHead& head,
                           const ReplayBuildOptions& opts, const RngStream& rng);

}  // namespace bricklayer
