#include "bricklayer/taskgen.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace bricklayer {

std::string to_string(ProtocolMode mode) {
  return mode == ProtocolMode::DatasetIncremental ? "dataset_incremental" : "forgery_type_incremental";
}

ProtocolMode protocol_mode_from_string(const std::string& s) {
  if (s == "dataset_incremental" || s == "dataset") return ProtocolMode::DatasetIncremental;
  if (s == "forgery_type_incremental" || s == "forgery_type") return ProtocolMode::ForgeryTypeIncremental;
  fail(ErrorCode::ConfigError, "protocol.mode: unknown mode '" + s + "'");
}

void ProtocolSpec::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidSpec, what); };
  if (tasks < 1) bad("tasks must be >= 1");
  if (grid < 2) bad("grid must be >= 2");
  if (block_dim < 1) bad("block_dim must be >= 1");
  if (train_per_task < 4 || eval_per_task < 2) bad("each split needs both classes");
  if (!(cue_scale >= 0.0) || !(noise_scale >= 0.0) || !(content_mean_scale >= 0.0)) bad("scales must be >= 0");
  if (lobes != 1 && lobes != 2) bad("lobes must be 1 or 2");
  if (!(max_cue_cosine > 0.0 && max_cue_cosine <= 1.0)) bad("max_cue_cosine must lie in (0, 1]");
}

std::vector<Sample> TaskDataset::train_domain(ClassLabel cls) const {
  std::vector<Sample> out;
  for (const auto& s : train) {
    if (s.label == cls) out.push_back(s);
  }
  return out;
}

namespace {

Vector gaussian_vector(RngStream& rng, std::size_t n, double scale) {
  Vector v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

std::vector<Vector> draw_cues(const ProtocolSpec& spec, RngStream rng) {
  std::vector<Vector> cues;
  constexpr int kMaxAttempts = 100000;
  for (int t = 0; t < spec.tasks; ++t) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxAttempts && !accepted; ++attempt) {
      Vector v = gaussian_vector(rng, spec.block_dim, 1.0);
      if (l2_norm(v) == 0.0) continue;
      v = l2_normalize(v);
      accepted = true;
      for (const auto& prev : cues) {
        if (std::abs(dot(v, prev)) >= spec.max_cue_cosine) {
          accepted = false;
          break;
        }
      }
      if (accepted) cues.push_back(std::move(v));
    }
    if (!accepted) {
      fail(ErrorCode::InvalidSpec, "could not draw " + std::to_string(spec.tasks) +
                                       " cue vectors with pairwise cosine below " +
                                       std::to_string(spec.max_cue_cosine));
    }
  }
  return cues;
}

Sample make_sample(const ProtocolSpec& spec, const TaskDataset& task, const Vector& lobe_dir, ClassLabel cls,
                   std::uint64_t id, RngStream& rng) {
  Sample s;
  s.id = id;
  s.grid = spec.grid;
  s.block_dim = spec.block_dim;
  s.label = cls;
  s.task_id = task.task_id;
  s.values.resize(spec.input_dim());
  double lobe_shift = 0.0;
  if (spec.lobes == 2) lobe_shift = (rng.uniform() < 0.5 ? -0.5 : 0.5) * spec.lobe_separation;
  for (std::size_t k = 0; k < s.values.size(); ++k) {
    double v = task.content_mean[k] + spec.noise_scale * rng.normal();
    if (spec.lobes == 2) v += lobe_shift * lobe_dir[k];
    if (cls == ClassLabel::Fake) v += task.cue_scale * task.cue[k % spec.block_dim];
    s.values[k] = v;
  }
  return s;
}

}  // namespace

std::vector<TaskDataset> generate_stream(const ProtocolSpec& spec) {
  spec.validate();
  const RngStream root = RngStream(spec.seed).split("stream");
  const auto cues = draw_cues(spec, root.split("cues"));
  RngStream shared_rng = root.split("shared-content");
  const Vector shared_mean = gaussian_vector(shared_rng, spec.input_dim(), spec.content_mean_scale);

  std::vector<TaskDataset> stream;
  stream.reserve(spec.tasks);
  for (int t = 1; t <= spec.tasks; ++t) {
    TaskDataset task;
    task.task_id = t;
    task.cue = cues[t - 1];
    task.cue_scale = spec.cue_scale;
    if (spec.mode == ProtocolMode::ForgeryTypeIncremental) {
      task.content_mean = shared_mean;
    } else {
      RngStream mean_rng = root.split("task-content", t);
      task.content_mean = gaussian_vector(mean_rng, spec.input_dim(), spec.content_mean_scale);
    }
    Vector lobe_dir;
    if (spec.lobes == 2) {
      RngStream lobe_rng = root.split("task-lobe", t);
      lobe_dir = l2_normalize(gaussian_vector(lobe_rng, spec.input_dim(), 1.0));
    }
    const std::uint64_t base = static_cast<std::uint64_t>(t) * 10'000'000ULL;
    RngStream train_rng = root.split("task-train", t);
    for (std::size_t i = 0; i < spec.train_per_task; ++i) {
      const auto cls = (i % 2 == 0) ? ClassLabel::Real : ClassLabel::Fake;
      task.train.push_back(make_sample(spec, task, lobe_dir, cls, base + i, train_rng));
    }
    RngStream eval_rng = root.split("task-eval", t);
    for (std::size_t i = 0; i < spec.eval_per_task; ++i) {
      const auto cls = (i % 2 == 0) ? ClassLabel::Real : ClassLabel::Fake;
      task.eval.push_back(make_sample(spec, task, lobe_dir, cls, base + 5'000'000ULL + i, eval_rng));
    }
    stream.push_back(std::move(task));
  }
  return stream;
}

Sample apply_cell_permutation(const Sample& x, const std::vector<std::size_t>& perm) {
  if (perm.size() != x.cells()) fail(ErrorCode::ShapeMismatch, "permutation size differs from cell count");
  Sample out = x;
  const std::size_t m = static_cast<std::size_t>(x.block_dim);
  for (std::size_t c = 0; c < perm.size(); ++c) {
    const auto src = x.block(perm[c]);
    std::copy(src.begin(), src.end(), out.values.begin() + static_cast<std::ptrdiff_t>(c * m));
  }
  return out;
}

Sample grid_shuffle(const Sample& x, RngStream& rng) { return apply_cell_permutation(x, rng.permutation(x.cells())); }

std::uint64_t stream_hash(const std::vector<TaskDataset>& stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& task : stream) {
    for (const auto* split : {&task.train, &task.eval}) {
      for (const auto& s : *split) {
        const double meta[3] = {static_cast<double>(s.id), static_cast<double>(s.label), static_cast<double>(s.task_id)};
        h = hash_doubles(meta, h);
        h = hash_doubles(s.values, h);
      }
    }
  }
  return h;
}

void write_stream_csv(std::ostream& out, const std::vector<TaskDataset>& stream) {
  const std::size_t dim = stream.empty() || stream.front().train.empty() ? 0 : stream.front().train.front().values.size();
  out << "task_id,class,domain,split,sample_id";
  for (std::size_t k = 0; k < dim; ++k) out << ",x" << k;
  out << '\n';
  char buf[32];
  for (const auto& task : stream) {
    for (const auto& [split, samples] : {std::pair{"train", &task.train}, std::pair{"eval", &task.eval}}) {
      for (const auto& s : *samples) {
        out << s.task_id << ',' << to_string(s.label) << ',' << s.domain().id() << ',' << split << ',' << s.id;
        for (double v : s.values) {
          std::snprintf(buf, sizeof buf, "%.17g", v);
          out << ',' << buf;
        }
        out << '\n';
      }
    }
  }
}

}  // namespace bricklayer
