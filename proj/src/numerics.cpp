#include "bricklayer/numerics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

namespace bricklayer {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::EmptyFeatureSet: return "EmptyFeatureSet";
    case ErrorCode::DegenerateRow: return "DegenerateRow";
    case ErrorCode::ReplayTooLarge: return "ReplayTooLarge";
    case ErrorCode::OddReplaySize: return "OddReplaySize";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::SingletonDomain: return "SingletonDomain";
    case ErrorCode::NoNegatives: return "NoNegatives";
    case ErrorCode::NoReplayData: return "NoReplayData";
    case ErrorCode::MissingHead: return "MissingHead";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::NonSequentialTask: return "NonSequentialTask";
    case ErrorCode::AntipodalDegenerate: return "AntipodalDegenerate";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::ZeroFirstAuc: return "ZeroFirstAuc";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::PairingViolation: return "PairingViolation";
  }
  return "Unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    fail(ErrorCode::ShapeMismatch, "matrix value count does not match rows*cols");
  }
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) fail(ErrorCode::ShapeMismatch, "ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Vector Matrix::row_vector(std::size_t r) const {
  auto view = row(r);
  return {view.begin(), view.end()};
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) fail(ErrorCode::ShapeMismatch, "appended row has wrong width");
  values_.insert(values_.end(), values.begin(), values.end());
  ++rows_;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::ShapeMismatch, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::ShapeMismatch, "distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) fail(ErrorCode::ZeroNormVector, "cosine similarity of a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Vector l2_normalize(std::span<const double> a) {
  const double n = l2_norm(a);
  if (n == 0.0) fail(ErrorCode::ZeroNormVector, "cannot normalize a zero vector");
  Vector out(a.begin(), a.end());
  for (double& v : out) v /= n;
  return out;
}

Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, double h) {
  if (!(h > 0.0)) fail(ErrorCode::InvalidSpec, "finite difference step must be positive");
  Vector probe(x.begin(), x.end());
  Vector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      fail(ErrorCode::NonFiniteEvaluation, "objective is not finite at probe " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

std::uint64_t mix64(std::uint64_t x) {
  // SplitMix64 finalizer.
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (double v : values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    std::uint8_t bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(bits >> (8 * i));
    h = fnv1a64(bytes, h);
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed) : key_(mix64(seed ^ 0x6a09e667f3bcc909ULL)), counter_(0) {}

RngStream RngStream::split(std::string_view label) const {
  const auto* p = reinterpret_cast<const std::uint8_t*>(label.data());
  const std::uint64_t h = fnv1a64({p, label.size()});
  return RngStream(mix64(key_ ^ mix64(h)), 0);
}

RngStream RngStream::split(std::string_view label, std::uint64_t index) const {
  RngStream child = split(label);
  return RngStream(mix64(child.key_ ^ mix64(index + 0x3c6ef372fe94f82bULL)), 0);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t x = key_ + 0x9e3779b97f4a7c15ULL * (++counter_);
  return mix64(x ^ (key_ >> 17));
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n == 0) fail(ErrorCode::InvalidSpec, "uniform_index over empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  // Box-Muller, one variate per pair of draws.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  shuffle(std::span<std::size_t>(idx));
  return idx;
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorCode::EmptyFeatureSet, "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace bricklayer
