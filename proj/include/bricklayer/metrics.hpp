#pragma once

#include <map>
#include <span>
#include <vector>

#include "bricklayer/numerics.hpp"

namespace bricklayer {

// Mann-Whitney U / (n_pos * n_neg) with average ranks for ties.
// labels: 1 = Fake (positive), 0 = Real.
double auc(std::span<const double> scores, std::span<const int> labels);

// Fraction correct; a score >= threshold is classified Fake.
double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

// 1 - auc_last / auc_first. Negative when performance improved.
double forgetting_rate(double auc_first, double auc_last);

enum class Bandwidth { MedianHeuristic, Fixed };
enum class MmdEstimator { Biased, Unbiased };

struct MmdConfig {
  Bandwidth bandwidth = Bandwidth::MedianHeuristic;
  double sigma = 1.0;
  MmdEstimator estimator = MmdEstimator::Biased;
};

// Median of pairwise Euclidean distances over the pooled rows of a and b.
double median_pairwise_distance(const Matrix& a, const Matrix& b);

// Gaussian-kernel MMD. Biased: sqrt of the V-statistic (>= 0).
// Unbiased: signed U-statistic estimate of MMD² (may be negative).
double mmd(const Matrix& a, const Matrix& b, const MmdConfig& cfg = {});

struct DomainSeparation {
  double silhouette = 0.0;
  std::map<std::pair<int, int>, double> centroid_distances;
  std::vector<int> excluded_singletons;
};

// Silhouette over domain labels (Euclidean) plus pairwise centroid distances.
DomainSeparation domain_separation(const Matrix& features, std::span<const int> domain_labels);

}  // namespace bricklayer
