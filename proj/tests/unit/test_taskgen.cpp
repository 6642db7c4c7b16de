#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "../oracles/auc_oracle.hpp"
#include "../oracles/linear_probe.hpp"
#include "bricklayer/metrics.hpp"
#include "bricklayer/taskgen.hpp"

using namespace bricklayer;

namespace {

ProtocolSpec small_spec(ProtocolMode mode, int tasks = 2) {
  ProtocolSpec s;
  s.mode = mode;
  s.tasks = tasks;
  s.train_per_task = 200;
  s.eval_per_task = 100;
  s.seed = 3;
  return s;
}

Vector mean_block(const Sample& s) {
  Vector m(static_cast<std::size_t>(s.block_dim), 0.0);
  for (std::size_t c = 0; c < s.cells(); ++c) {
    const auto b = s.block(c);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += b[k] / static_cast<double>(s.cells());
  }
  return m;
}

}  // namespace

TEST_SUITE("taskgen") {

TEST_CASE("forgery-type mode shares the real-content mean") {
  const auto stream = generate_stream(small_spec(ProtocolMode::ForgeryTypeIncremental));
  REQUIRE(stream.size() == 2);
  CHECK(stream[0].content_mean == stream[1].content_mean);
}

TEST_CASE("dataset mode draws a fresh real-content mean per task") {
  const auto stream = generate_stream(small_spec(ProtocolMode::DatasetIncremental));
  CHECK(stream[0].content_mean != stream[1].content_mean);
}

TEST_CASE("structure: labels, splits, ids, cues") {
  const ProtocolSpec spec = small_spec(ProtocolMode::ForgeryTypeIncremental, 4);
  const auto stream = generate_stream(spec);
  std::set<std::uint64_t> ids;
  std::set<int> domains;
  for (const auto& t : stream) {
    for (const auto* split : {&t.train, &t.eval}) {
      std::size_t fakes = 0;
      for (const auto& s : *split) {
        CHECK(s.task_id == t.task_id);
        CHECK(s.values.size() == spec.input_dim());
        CHECK(all_finite(s.values));
        CHECK(ids.insert(s.id).second);
        domains.insert(s.domain().id());
        fakes += s.label == ClassLabel::Fake;
      }
      CHECK(fakes > 0);
      CHECK(fakes < split->size());
    }
    CHECK(std::abs(l2_norm(t.cue) - 1.0) < 1e-12);
  }
  CHECK(domains.size() == 8);
  for (std::size_t a = 0; a < stream.size(); ++a) {
    for (std::size_t b = a + 1; b < stream.size(); ++b) {
      CHECK(std::abs(cosine_similarity(stream[a].cue, stream[b].cue)) < spec.max_cue_cosine);
    }
  }
}

TEST_CASE("domain labels are injective") {
  std::set<int> ids;
  for (int t = 1; t <= 10; ++t) {
    for (auto c : {ClassLabel::Real, ClassLabel::Fake}) {
      const DomainLabel d{t, c};
      CHECK(ids.insert(d.id()).second);
      CHECK(DomainLabel::from_id(d.id()) == d);
    }
  }
}

TEST_CASE("generation is deterministic per seed") {
  const ProtocolSpec spec = small_spec(ProtocolMode::DatasetIncremental, 3);
  const auto a = generate_stream(spec);
  const auto b = generate_stream(spec);
  CHECK(stream_hash(a) == stream_hash(b));
  for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t].train[5].values == b[t].train[5].values);
  ProtocolSpec other = spec;
  other.seed = 4;
  CHECK(stream_hash(generate_stream(other)) != stream_hash(a));
}

TEST_CASE("invalid specs are rejected") {
  ProtocolSpec s;
  s.grid = 1;
  CHECK_THROWS_AS(generate_stream(s), Error);
  s = ProtocolSpec{};
  s.tasks = 0;
  CHECK_THROWS_AS(generate_stream(s), Error);
}

TEST_CASE("grid shuffle examples") {
  ProtocolSpec spec = small_spec(ProtocolMode::ForgeryTypeIncremental, 1);
  spec.grid = 2;
  const auto stream = generate_stream(spec);
  const Sample& x = stream[0].train[0];
  CHECK(apply_cell_permutation(x, {0, 1, 2, 3}).values == x.values);

  RngStream rng(17);
  for (int k = 0; k < 50; ++k) {
    const Sample y = grid_shuffle(x, rng);
    CHECK(y.label == x.label);
    CHECK(y.domain() == x.domain());
    std::multiset<Vector> before, after;
    for (std::size_t c = 0; c < x.cells(); ++c) {
      before.insert(Vector(x.block(c).begin(), x.block(c).end()));
      after.insert(Vector(y.block(c).begin(), y.block(c).end()));
    }
    CHECK(before == after);
  }
}

TEST_CASE("mean block is exactly shuffle invariant") {
  const auto stream = generate_stream(small_spec(ProtocolMode::ForgeryTypeIncremental, 1));
  RngStream rng(5);
  for (int k = 0; k < 20; ++k) {
    const Sample& x = stream[0].train[static_cast<std::size_t>(k)];
    // Summation order changes under permutation; compare sorted-sum means.
    auto sorted_mean = [](const Sample& s) {
      Vector m(static_cast<std::size_t>(s.block_dim), 0.0);
      for (std::size_t j = 0; j < m.size(); ++j) {
        std::vector<double> col;
        for (std::size_t c = 0; c < s.cells(); ++c) col.push_back(s.block(c)[j]);
        std::sort(col.begin(), col.end());
        for (double v : col) m[j] += v;
      }
      return m;
    };
    CHECK(sorted_mean(grid_shuffle(x, rng)) == sorted_mean(x));
  }
}

TEST_CASE("fake cue survives shuffling") {
  ProtocolSpec spec = small_spec(ProtocolMode::ForgeryTypeIncremental, 2);
  spec.train_per_task = 2000;
  const auto stream = generate_stream(spec);
  RngStream rng(23);
  for (const auto& t : stream) {
    Vector est(static_cast<std::size_t>(spec.block_dim), 0.0), est_shuf(est.size(), 0.0);
    std::vector<const Sample*> reals, fakes;
    for (const auto& s : t.train) (s.label == ClassLabel::Fake ? fakes : reals).push_back(&s);
    const std::size_t pairs = std::min<std::size_t>(1000, std::min(reals.size(), fakes.size()));
    for (std::size_t i = 0; i < pairs; ++i) {
      const Vector df = mean_block(*fakes[i]), dr = mean_block(*reals[i]);
      const Vector sf = mean_block(grid_shuffle(*fakes[i], rng)), sr = mean_block(grid_shuffle(*reals[i], rng));
      for (std::size_t k = 0; k < est.size(); ++k) {
        est[k] += df[k] - dr[k];
        est_shuf[k] += sf[k] - sr[k];
      }
    }
    CHECK(cosine_similarity(est, t.cue) > 0.9);
    CHECK(cosine_similarity(est_shuf, t.cue) > 0.9);
  }
}

TEST_CASE("forgery-type real pools are exchangeable (MMD permutation test)") {
  ProtocolSpec spec = small_spec(ProtocolMode::ForgeryTypeIncremental, 2);
  const auto stream = generate_stream(spec);
  auto reals = [](const TaskDataset& t) {
    Matrix m;
    for (const auto& s : t.train) {
      if (s.label == ClassLabel::Real && m.rows() < 60) m.append_row(s.values);
    }
    return m;
  };
  const Matrix a = reals(stream[0]), b = reals(stream[1]);
  MmdConfig cfg;
  cfg.bandwidth = Bandwidth::Fixed;
  Matrix pooled = a;
  for (std::size_t i = 0; i < b.rows(); ++i) pooled.append_row(b.row(i));
  cfg.sigma = median_pairwise_distance(a, b);
  const double observed = mmd(a, b, cfg);

  RngStream rng(31);
  std::vector<double> null;
  for (int p = 0; p < 200; ++p) {
    const auto perm = rng.permutation(pooled.rows());
    Matrix x, y;
    for (std::size_t i = 0; i < perm.size(); ++i) (i < a.rows() ? x : y).append_row(pooled.row(perm[i]));
    null.push_back(mmd(x, y, cfg));
  }
  std::sort(null.begin(), null.end());
  CHECK(observed < null[static_cast<std::size_t>(0.95 * null.size())]);
}

TEST_CASE("a fresh linear probe separates every task (seed 7, 2000/500)") {
  ProtocolSpec spec;
  spec.seed = 7;
  spec.tasks = 4;
  const auto stream = generate_stream(spec);
  for (const auto& t : stream) {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (const auto& s : t.train) {
      xs.push_back(s.values);
      ys.push_back(s.label == ClassLabel::Fake);
    }
    const oracle::Probe probe = oracle::fit_logistic(xs, ys, 150);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& s : t.eval) {
      scores.push_back(probe.score(s.values));
      labels.push_back(s.label == ClassLabel::Fake);
    }
    const double a = oracle::auc(scores, labels);
    INFO("task " << t.task_id << " probe AUC " << a);
    CHECK(a > 0.95);
  }
}

TEST_CASE("two-lobe content is bimodal") {
  ProtocolSpec spec = small_spec(ProtocolMode::ForgeryTypeIncremental, 1);
  spec.lobes = 2;
  const auto stream = generate_stream(spec);
  // Project on the leading direction between the two halves of a 2-means split.
  const auto& train = stream[0].train;
  Vector centroid(spec.input_dim(), 0.0);
  for (const auto& s : train) {
    for (std::size_t k = 0; k < centroid.size(); ++k) centroid[k] += s.values[k] / static_cast<double>(train.size());
  }
  double far = 0.0;
  for (const auto& s : train) far += std::sqrt(squared_distance(s.values, centroid));
  far /= static_cast<double>(train.size());
  ProtocolSpec single = spec;
  single.lobes = 1;
  const auto s1 = generate_stream(single);
  double near = 0.0;
  Vector c1(spec.input_dim(), 0.0);
  for (const auto& s : s1[0].train) {
    for (std::size_t k = 0; k < c1.size(); ++k) c1[k] += s.values[k] / static_cast<double>(s1[0].train.size());
  }
  for (const auto& s : s1[0].train) near += std::sqrt(squared_distance(s.values, c1));
  near /= static_cast<double>(s1[0].train.size());
  CHECK(far > near);
}

TEST_CASE("stream CSV layout") {
  const auto stream = generate_stream(small_spec(ProtocolMode::ForgeryTypeIncremental, 1));
  std::ostringstream out;
  write_stream_csv(out, stream);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("task_id,class,domain,split,sample_id,x0,", 0) == 0);
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == stream[0].train.size() + stream[0].eval.size());
}

}  // TEST_SUITE
