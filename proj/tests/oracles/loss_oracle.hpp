#pragma once

// Direct transcriptions of the isolation and detection objectives, no
// log-sum-exp tricks, no shared code with the library.

#include <cmath>
#include <vector>

namespace oracle {

// For each anchor with at least one same-label partner:
//   -(1/|P|) Σ_p log( exp(z_i·z_p/τ) / Σ_{k: y_k != y_i} exp(z_i·z_k/τ) )
// averaged over those anchors. all_others adds same-label k != i to the sum.
inline double isolation(std::vector<std::vector<double>> f, const std::vector<int>& y, double tau, bool normalize,
                        bool all_others = false) {
  if (normalize) {
    for (auto& row : f) {
      double s = 0.0;
      for (double v : row) s += v * v;
      s = std::sqrt(s);
      for (double& v : row) v /= s;
    }
  }
  auto sim = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = 0; k < f[a].size(); ++k) s += f[a][k] * f[b][k];
    return s / tau;
  };
  double total = 0.0;
  int anchors = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double denom = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      if (k == i) continue;
      if (y[k] != y[i] || all_others) denom += std::exp(sim(i, k));
    }
    double acc = 0.0;
    int pos = 0;
    for (std::size_t p = 0; p < f.size(); ++p) {
      if (p == i || y[p] != y[i]) continue;
      acc += -std::log(std::exp(sim(i, p)) / denom);
      ++pos;
    }
    if (pos == 0) continue;
    total += acc / pos;
    ++anchors;
  }
  return anchors == 0 ? 0.0 : total / anchors;
}

// Σ over tasks of the mean binary cross-entropy of that task's rows.
inline double detection(const std::vector<double>& logits, const std::vector<int>& y, const std::vector<int>& task) {
  std::vector<int> tasks;
  for (int t : task) {
    bool seen = false;
    for (int u : tasks) seen = seen || u == t;
    if (!seen) tasks.push_back(t);
  }
  double total = 0.0;
  for (int t : tasks) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (task[i] != t) continue;
      const double p = 1.0 / (1.0 + std::exp(-logits[i]));
      sum += y[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
      ++n;
    }
    total += sum / n;
  }
  return total;
}

}  // namespace oracle
