#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bricklayer/numerics.hpp"
#include "bricklayer/types.hpp"

namespace bricklayer {

enum class ProtocolMode {
  DatasetIncremental,      // fresh real-content mean per task
  ForgeryTypeIncremental,  // one real-content mean shared by all tasks
};

std::string to_string(ProtocolMode mode);
ProtocolMode protocol_mode_from_string(const std::string& s);

struct ProtocolSpec {
  ProtocolMode mode = ProtocolMode::ForgeryTypeIncremental;
  int tasks = 4;
  std::size_t train_per_task = 2000;
  std::size_t eval_per_task = 500;
  std::uint64_t seed = 0;
  int grid = 4;
  int block_dim = 8;
  double cue_scale = 0.8;
  double content_mean_scale = 1.0;  // stddev of each entry of a task's content mean
  double noise_scale = 1.0;
  double max_cue_cosine = 0.3;  // bound on |cos| between any two task cue vectors
  int lobes = 1;                // 2 => content drawn from a two-lobe mixture
  double lobe_separation = 6.0;

  std::size_t input_dim() const { return static_cast<std::size_t>(grid) * grid * block_dim; }
  void validate() const;
};

struct TaskDataset {
  int task_id = 1;
  std::vector<Sample> train;
  std::vector<Sample> eval;
  Vector content_mean;  // per input coordinate
  Vector cue;           // unit vector of length block_dim
  double cue_scale = 0.0;

  std::vector<Sample> train_domain(ClassLabel cls) const;
};

std::vector<TaskDataset> generate_stream(const ProtocolSpec& spec);

// Permutes the g·g cells uniformly at random; block contents are untouched.
Sample grid_shuffle(const Sample& x, RngStream& rng);
Sample apply_cell_permutation(const Sample& x, const std::vector<std::size_t>& perm);

// Fingerprint of every value and label in the stream.
std::uint64_t stream_hash(const std::vector<TaskDataset>& stream);

// One row per sample: task_id,class,domain,split,sample_id,x0..x{D-1}
void write_stream_csv(std::ostream& out, const std::vector<TaskDataset>& stream);

}  // namespace bricklayer
