#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "bricklayer/numerics.hpp"

namespace bricklayer {

enum class ClassLabel : int { Real = 0, Fake = 1 };

inline std::string_view to_string(ClassLabel c) { return c == ClassLabel::Real ? "real" : "fake"; }

// One (task, class) pair. Real data from different tasks gets distinct ids.
struct DomainLabel {
  int task_id = 1;
  ClassLabel cls = ClassLabel::Real;

  int id() const noexcept { return 2 * (task_id - 1) + static_cast<int>(cls); }
  static DomainLabel from_id(int id) { return {id / 2 + 1, static_cast<ClassLabel>(id % 2)}; }

  bool operator==(const DomainLabel&) const = default;
};

// A g×g grid of m-dimensional blocks, stored cell-major: cell c occupies
// values[c*m, (c+1)*m).
struct Sample {
  std::uint64_t id = 0;
  int grid = 0;
  int block_dim = 0;
  Vector values;
  ClassLabel label = ClassLabel::Real;
  int task_id = 1;

  DomainLabel domain() const noexcept { return {task_id, label}; }
  std::size_t cells() const noexcept { return static_cast<std::size_t>(grid) * grid; }
  std::span<const double> block(std::size_t cell) const {
    return {values.data() + cell * block_dim, static_cast<std::size_t>(block_dim)};
  }

  bool operator==(const Sample&) const = default;
};

Matrix stack_inputs(const std::vector<Sample>& samples);
Matrix stack_inputs(const std::vector<const Sample*>& samples);

}  // namespace bricklayer
