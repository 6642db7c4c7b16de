#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "bricklayer/error.hpp"

namespace bricklayer {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix from_rows(const std::vector<Vector>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  Vector row_vector(std::size_t r) const;
  void append_row(std::span<const double> values);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> a);

// a·b / (‖a‖‖b‖). Throws ZeroNormVector when either norm is zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

Vector l2_normalize(std::span<const double> a);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for each coordinate.
Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, double h);

// Counter-based generator: draw k is a pure function of (key, k), so a stream
// is fully described by two integers and can be split by label without
// touching its parent.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);
  RngStream(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  RngStream split(std::string_view label) const;
  RngStream split(std::string_view label, std::uint64_t index) const;

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). Unbiased (rejection).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }
  std::vector<std::size_t> permutation(std::size_t n);

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  bool operator==(const RngStream&) const = default;

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t seed = 0xcbf29ce484222325ULL);

double logistic(double z);
// log(1 + exp(z)) without overflow.
double softplus(double z);

double median(std::vector<double> values);

}  // namespace bricklayer
