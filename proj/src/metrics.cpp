#include "bricklayer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace bricklayer {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorCode::ShapeMismatch, "auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += (y == 1);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) fail(ErrorCode::SingleClass, "auc needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the average rank keeps everything integral until the final division.
  double pos_rank_sum_x2 = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank_x2 = static_cast<double>(i + 1 + j);  // (i+1) + j = 2 * mean rank of [i+1, j]
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum_x2 += rank_x2;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u_x2 = pos_rank_sum_x2 - np * (np + 1.0);
  return (u_x2 / 2.0) / (np * static_cast<double>(n_neg));
}

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) fail(ErrorCode::ShapeMismatch, "accuracy: length mismatch");
  if (scores.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int predicted = scores[i] >= threshold ? 1 : 0;
    correct += (predicted == labels[i]);
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double forgetting_rate(double auc_first, double auc_last) {
  if (!(auc_first > 0.0)) fail(ErrorCode::ZeroFirstAuc, "first AUC must be positive");
  return 1.0 - auc_last / auc_first;
}

double median_pairwise_distance(const Matrix& a, const Matrix& b) {
  std::vector<std::span<const double>> rows;
  rows.reserve(a.rows() + b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) rows.push_back(a.row(i));
  for (std::size_t i = 0; i < b.rows(); ++i) rows.push_back(b.row(i));
  std::vector<double> d;
  d.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) d.push_back(std::sqrt(squared_distance(rows[i], rows[j])));
  }
  if (d.empty()) return 0.0;
  return median(std::move(d));
}

namespace {

double kernel_mean(const Matrix& a, const Matrix& b, double inv_two_sigma2, bool skip_diagonal) {
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      if (skip_diagonal && i == j) continue;
      s += std::exp(-squared_distance(a.row(i), b.row(j)) * inv_two_sigma2);
      ++count;
    }
  }
  return count == 0 ? 0.0 : s / static_cast<double>(count);
}

}  // namespace

double mmd(const Matrix& a, const Matrix& b, const MmdConfig& cfg) {
  if (a.rows() == 0 || b.rows() == 0) fail(ErrorCode::EmptyFeatureSet, "mmd needs two nonempty sets");
  if (a.cols() != b.cols()) fail(ErrorCode::ShapeMismatch, "mmd: sets differ in dimension");
  double sigma = cfg.sigma;
  if (cfg.bandwidth == Bandwidth::MedianHeuristic) {
    sigma = median_pairwise_distance(a, b);
    if (!(sigma > 0.0)) sigma = 1.0;
  } else if (!(sigma > 0.0)) {
    fail(ErrorCode::InvalidSpec, "fixed MMD bandwidth must be positive");
  }
  const double inv = 1.0 / (2.0 * sigma * sigma);
  if (cfg.estimator == MmdEstimator::Biased) {
    const double v = kernel_mean(a, a, inv, false) + kernel_mean(b, b, inv, false) - 2.0 * kernel_mean(a, b, inv, false);
    return std::sqrt(std::max(0.0, v));
  }
  if (a.rows() < 2 || b.rows() < 2) fail(ErrorCode::EmptyFeatureSet, "unbiased mmd needs >= 2 rows per set");
  return kernel_mean(a, a, inv, true) + kernel_mean(b, b, inv, true) - 2.0 * kernel_mean(a, b, inv, false);
}

DomainSeparation domain_separation(const Matrix& features, std::span<const int> domain_labels) {
  if (features.rows() != domain_labels.size()) fail(ErrorCode::ShapeMismatch, "one label per feature row required");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < domain_labels.size(); ++i) members[domain_labels[i]].push_back(i);

  DomainSeparation out;
  std::vector<int> kept;
  for (const auto& [label, idx] : members) {
    if (idx.size() < 2) {
      out.excluded_singletons.push_back(label);
    } else {
      kept.push_back(label);
    }
  }
  if (kept.size() < 2) fail(ErrorCode::SingletonDomain, "domain separation needs >= 2 domains with >= 2 members");

  const std::size_t d = features.cols();
  std::map<int, Vector> centroids;
  for (int label : kept) {
    Vector c(d, 0.0);
    for (std::size_t i : members[label]) {
      const auto r = features.row(i);
      for (std::size_t k = 0; k < d; ++k) c[k] += r[k];
    }
    for (double& v : c) v /= static_cast<double>(members[label].size());
    centroids[label] = std::move(c);
  }
  for (std::size_t p = 0; p < kept.size(); ++p) {
    for (std::size_t q = p + 1; q < kept.size(); ++q) {
      out.centroid_distances[{kept[p], kept[q]}] =
          std::sqrt(squared_distance(centroids[kept[p]], centroids[kept[q]]));
    }
  }

  double total = 0.0;
  std::size_t count = 0;
  for (int label : kept) {
    for (std::size_t i : members[label]) {
      double a = 0.0;
      double b = std::numeric_limits<double>::infinity();
      for (int other : kept) {
        double s = 0.0;
        for (std::size_t j : members[other]) {
          if (j != i) s += std::sqrt(squared_distance(features.row(i), features.row(j)));
        }
        if (other == label) {
          a = s / static_cast<double>(members[other].size() - 1);
        } else {
          b = std::min(b, s / static_cast<double>(members[other].size()));
        }
      }
      const double denom = std::max(a, b);
      total += denom > 0.0 ? (b - a) / denom : 0.0;
      ++count;
    }
  }
  out.silhouette = total / static_cast<double>(count);
  return out;
}

}  // namespace bricklayer
