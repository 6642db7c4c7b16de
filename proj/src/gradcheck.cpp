#include "bricklayer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "bricklayer/losses.hpp"

namespace bricklayer {

const std::vector<std::string>& gradcheck_components() {
  static const std::vector<std::string> names = {"backbone", "isolation_loss", "distillation_loss", "detection_loss",
                                                 "overall_loss"};
  return names;
}

double gradcheck_relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

namespace {

using Objective = std::function<double(std::span<const double>)>;

struct Accumulator {
  GradcheckRow row;
  bool fault = false;

  void compare(std::span<const double> x, const Objective& f, Vector analytic, double h) {
    if (fault) {
      analytic[0] = analytic[0] * 1.01 + 1e-3;
      fault = false;
    }
    const Vector numeric = finite_diff_grad(f, x, h);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      row.max_rel_error = std::max(row.max_rel_error, gradcheck_relative_error(analytic[i], numeric[i]));
    }
    row.coordinates += numeric.size();
  }
};

Matrix random_matrix(RngStream& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

Matrix as_matrix(std::span<const double> x, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  std::copy(x.begin(), x.end(), m.values().begin());
  return m;
}

Vector flat(const Matrix& m) { return {m.values().begin(), m.values().end()}; }

// Labels over `domains` values with every domain represented at least twice.
std::vector<int> random_labels(RngStream& rng, std::size_t n, int domains) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i < static_cast<std::size_t>(2 * domains) ? static_cast<int>(i) % domains
                                                            : static_cast<int>(rng.uniform_index(domains));
  }
  rng.shuffle(std::span<int>(labels));
  return labels;
}

LossConfig random_loss_config(RngStream& rng) {
  LossConfig cfg;
  cfg.temperature = rng.uniform(0.1, 1.0);
  cfg.normalize_features = rng.uniform() < 0.5;
  cfg.denominator = rng.uniform() < 0.5 ? IsoDenominator::NegativesOnly : IsoDenominator::AllOthers;
  cfg.mu1 = rng.uniform(0.5, 2.0);
  cfg.mu2 = rng.uniform(0.05, 1.0);
  return cfg;
}

std::vector<RefillSpec> random_refills(RngStream& rng, std::span<const int> labels, std::size_t dim) {
  std::vector<RefillSpec> refills;
  const std::size_t count = rng.uniform_index(4);
  for (std::size_t k = 0; k < count; ++k) {
    RefillSpec spec;
    spec.label = labels[rng.uniform_index(labels.size())];
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == spec.label) members.push_back(i);
    }
    spec.first = members[rng.uniform_index(members.size())];
    spec.second = members[rng.uniform_index(members.size())];
    spec.alpha = rng.uniform();
    spec.beta = rng.uniform();
    spec.centroid.resize(dim);
    for (double& c : spec.centroid) c = rng.normal();
    refills.push_back(std::move(spec));
  }
  return refills;
}

HeadBank random_bank(RngStream& rng, std::size_t dim, int heads) {
  std::vector<TaskHead> list;
  for (int t = 1; t <= heads; ++t) {
    TaskHead h = make_head(t, dim, rng.split("head", static_cast<std::uint64_t>(t)));
    for (double& w : h.w) w = rng.normal();
    h.b = rng.normal();
    h.frozen = t < heads;
    list.push_back(std::move(h));
  }
  return HeadBank(std::move(list));
}

HeadBank with_trainable(const HeadBank& bank, std::span<const double> wb) {
  std::vector<TaskHead> heads = bank.heads();
  TaskHead& h = heads.back();
  std::copy(wb.begin(), wb.end() - 1, h.w.begin());
  h.b = wb.back();
  return HeadBank(std::move(heads));
}

BackboneParams random_backbone(RngStream& rng, std::size_t in) {
  const BackboneArch arch{in, {2 + rng.uniform_index(4), 2 + rng.uniform_index(3)}, 2 + rng.uniform_index(3)};
  BackboneParams p = BackboneParams::init(arch, rng.split("init"));
  for (double& v : p.values()) v += 0.3 * rng.normal();
  return p;
}

BackboneParams with_values(const BackboneParams& like, std::span<const double> values) {
  BackboneParams p = like;
  std::copy(values.begin(), values.end(), p.values().begin());
  return p;
}

void check_backbone(RngStream rng, Accumulator& acc, double h) {
  const std::size_t in = 3 + rng.uniform_index(4);
  const std::size_t n = 2 + rng.uniform_index(4);
  const BackboneParams params = random_backbone(rng, in);
  const Matrix x = random_matrix(rng, n, in, 1.0);
  const Matrix upstream = random_matrix(rng, n, params.feature_dim(), 1.0);
  const BackboneParams grads = backward(params, x, upstream);
  const Objective f = [&](std::span<const double> v) {
    const Matrix out = forward(with_values(params, v), x);
    return dot(out.values(), upstream.values());
  };
  const Vector x0(params.values().begin(), params.values().end());
  acc.compare(x0, f, Vector(grads.values().begin(), grads.values().end()), h);
}

void check_isolation(RngStream rng, Accumulator& acc, double h) {
  const std::size_t n = 6 + rng.uniform_index(7);
  const std::size_t d = 2 + rng.uniform_index(4);
  const LossConfig cfg = random_loss_config(rng);
  const Matrix feats = random_matrix(rng, n, d, 1.0);
  const std::vector<int> labels = random_labels(rng, n, 2 + static_cast<int>(rng.uniform_index(3)));
  const auto refills = random_refills(rng, labels, d);
  const IsoResult res = isolation_loss(feats, labels, refills, cfg);
  const Objective f = [&](std::span<const double> v) {
    return isolation_loss(as_matrix(v, n, d), labels, refills, cfg).value;
  };
  acc.compare(flat(feats), f, flat(res.feature_grad), h);
}

void check_distillation(RngStream rng, Accumulator& acc, double h, bool through_backbone) {
  const std::size_t n = 4 + rng.uniform_index(6);
  std::vector<int> tasks(n);
  for (std::size_t i = 0; i < n; ++i) tasks[i] = i < 2 ? static_cast<int>(i) + 1 : static_cast<int>(rng.uniform_index(4));
  if (through_backbone) {
    const std::size_t in = 3 + rng.uniform_index(3);
    const BackboneParams current = random_backbone(rng, in);
    BackboneParams prev = current;
    for (double& v : prev.values()) v += 0.2 * rng.normal();
    const FrozenBackbone frozen = snapshot(prev);
    const Matrix x = random_matrix(rng, n, in, 1.0);
    const auto res = distillation_loss(current, frozen, x, tasks);
    const Objective f = [&](std::span<const double> v) {
      return distillation_loss(with_values(current, v), frozen, x, tasks).value;
    };
    acc.compare(Vector(current.values().begin(), current.values().end()), f,
                Vector(res.grads.values().begin(), res.grads.values().end()), h);
    return;
  }
  const std::size_t d = 2 + rng.uniform_index(4);
  const Matrix cur = random_matrix(rng, n, d, 1.0);
  const Matrix frozen = random_matrix(rng, n, d, 1.0);
  const auto res = distillation_loss(cur, frozen, tasks);
  const Objective f = [&](std::span<const double> v) { return distillation_loss(as_matrix(v, n, d), frozen, tasks).value; };
  acc.compare(flat(cur), f, flat(res.feature_grad), h);
}

void check_detection(RngStream rng, Accumulator& acc, double h) {
  const std::size_t n = 5 + rng.uniform_index(8);
  const std::size_t d = 2 + rng.uniform_index(4);
  const int heads = 1 + static_cast<int>(rng.uniform_index(3));
  const HeadBank bank = random_bank(rng, d, heads);
  const Matrix feats = random_matrix(rng, n, d, 1.0);
  std::vector<int> labels(n);
  std::vector<int> tasks(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(rng.uniform_index(2));
    tasks[i] = 1 + static_cast<int>(i < static_cast<std::size_t>(heads) ? i : rng.uniform_index(heads));
  }
  const DetectionResult res = detection_loss(bank, feats, labels, tasks);
  const Objective fx = [&](std::span<const double> v) {
    return detection_loss(bank, as_matrix(v, n, d), labels, tasks).value;
  };
  acc.compare(flat(feats), fx, flat(res.feature_grad), h);

  Vector wb = bank.heads().back().w;
  wb.push_back(bank.heads().back().b);
  Vector analytic = res.head_w_grad;
  analytic.push_back(res.head_b_grad);
  const Objective fw = [&](std::span<const double> v) {
    return detection_loss(with_trainable(bank, v), feats, labels, tasks).value;
  };
  acc.compare(wb, fw, analytic, h);
}

void check_overall(RngStream rng, Accumulator& acc, double h) {
  const std::size_t n = 6 + rng.uniform_index(7);
  const std::size_t d = 2 + rng.uniform_index(4);
  const LossConfig cfg = random_loss_config(rng);
  const int tasks_seen = 2 + static_cast<int>(rng.uniform_index(2));
  const std::vector<int> domains = random_labels(rng, n, 2 * tasks_seen);
  std::vector<int> labels(n);
  std::vector<int> head_task(n);
  std::vector<int> replay_task(n);
  for (std::size_t i = 0; i < n; ++i) {
    const DomainLabel dom = DomainLabel::from_id(domains[i]);
    labels[i] = static_cast<int>(dom.cls);
    head_task[i] = dom.task_id;
    replay_task[i] = dom.task_id < tasks_seen ? dom.task_id : 0;
  }
  const HeadBank bank = random_bank(rng, d, tasks_seen);
  const auto refills = random_refills(rng, domains, d);
  const Matrix feats = random_matrix(rng, n, d, 1.0);
  const Matrix frozen = random_matrix(rng, n, d, 1.0);

  auto evaluate = [&](const Matrix& f, const HeadBank& b) {
    const IsoResult iso = isolation_loss(f, domains, refills, cfg);
    const DistillResult dis = distillation_loss(f, frozen, replay_task);
    const DetectionResult det = detection_loss(b, f, labels, head_task);
    return overall_loss(cfg, &iso, &dis, &det, f.rows(), f.cols());
  };
  const LossBreakdown res = evaluate(feats, bank);
  const Objective fx = [&](std::span<const double> v) { return evaluate(as_matrix(v, n, d), bank).l_overall; };
  acc.compare(flat(feats), fx, flat(res.feature_grad), h);

  Vector wb = bank.heads().back().w;
  wb.push_back(bank.heads().back().b);
  Vector analytic = res.head_w_grad;
  analytic.push_back(res.head_b_grad);
  const Objective fw = [&](std::span<const double> v) { return evaluate(feats, with_trainable(bank, v)).l_overall; };
  acc.compare(wb, fw, analytic, h);
}

}  // namespace

std::vector<GradcheckRow> run_gradchecks(const GradcheckOptions& opts) {
  const RngStream root = RngStream(opts.seed).split("gradcheck");
  std::vector<GradcheckRow> rows;
  for (const auto& name : gradcheck_components()) {
    Accumulator acc;
    acc.row.component = name;
    acc.fault = opts.inject_fault == name;
    const RngStream rng = root.split(name);
    for (std::size_t k = 0; k < opts.instances; ++k) {
      const RngStream inst = rng.split("instance", k);
      if (name == "backbone") check_backbone(inst, acc, opts.step);
      if (name == "isolation_loss") check_isolation(inst, acc, opts.step);
      if (name == "distillation_loss") check_distillation(inst, acc, opts.step, k % 2 == 1);
      if (name == "detection_loss") check_detection(inst, acc, opts.step);
      if (name == "overall_loss") check_overall(inst, acc, opts.step);
    }
    acc.row.instances = opts.instances;
    acc.row.pass = acc.row.max_rel_error < opts.tolerance;
    rows.push_back(acc.row);
  }
  return rows;
}

}  // namespace bricklayer
