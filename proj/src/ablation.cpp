#include "bricklayer/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "bricklayer/report.hpp"

namespace bricklayer {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<MatrixVariant> standard_ablation_variants() {
  std::vector<MatrixVariant> v(5);
  v[0].name = "full";
  v[1].name = "w/o IDA";
  v[1].ablation.disable_ida = true;
  v[2].name = "w/o L_iso";
  v[2].ablation.disable_iso = true;
  v[3].name = "w/o DR";
  v[3].ablation.disable_dr = true;
  v[4].name = "w/o All";
  v[4].ablation.disable_ida = v[4].ablation.disable_iso = v[4].ablation.disable_dr = true;
  return v;
}

std::vector<MatrixCell> ExperimentMatrix::cells() const {
  std::vector<MatrixCell> out;
  const std::vector<ReplayStrategy> strats = strategies.empty() ? std::vector{base.train.strategy} : strategies;
  for (const auto& v : variants) {
    for (auto s : strats) {
      const std::string name = strats.size() == 1 ? v.name : v.name + "." + to_string(s);
      out.push_back({name, v.ablation, s});
    }
  }
  return out;
}

RunConfig ExperimentMatrix::cell_config(const MatrixCell& cell, std::uint64_t seed) const {
  RunConfig cfg = base;
  cfg.seed = seed;
  cfg.train.ablation = cell.ablation;
  cfg.train.strategy = cell.strategy;
  cfg.resolve();
  return cfg;
}

ExperimentMatrix matrix_from_json(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) fail(ErrorCode::ConfigError, "matrix: expected an object");
  ExperimentMatrix m;
  for (const auto& [key, value] : doc.items()) {
    if (key != "base" && key != "base_config" && key != "variants" && key != "strategies" && key != "seeds" &&
        key != "reference") {
      fail(ErrorCode::ConfigError, "unknown key 'matrix." + key + "'");
    }
  }
  if (doc.contains("base") && doc.contains("base_config")) {
    fail(ErrorCode::ConfigError, "matrix: give either base or base_config");
  }
  if (doc.contains("base")) m.base = run_config_from_json(doc.at("base"));
  if (doc.contains("base_config")) {
    const fs::path p = fs::path(base_dir) / doc.at("base_config").get<std::string>();
    m.base = load_run_config(p.string());
  }
  try {
    if (doc.contains("variants")) {
      const json& v = doc.at("variants");
      if (v.is_string()) {
        if (v.get<std::string>() != "standard") fail(ErrorCode::ConfigError, "matrix.variants: expected 'standard' or a list");
        m.variants = standard_ablation_variants();
      } else {
        m.variants.clear();
        for (const auto& item : v) {
          MatrixVariant mv;
          for (const auto& [key, value] : item.items()) {
            if (key != "name" && key != "ablation") fail(ErrorCode::ConfigError, "unknown key 'matrix.variants." + key + "'");
          }
          mv.name = item.at("name").get<std::string>();
          if (item.contains("ablation")) parse_ablation_flags(item.at("ablation"), mv.ablation, "matrix.variants.ablation");
          m.variants.push_back(std::move(mv));
        }
      }
    }
    if (doc.contains("strategies")) {
      for (const auto& s : doc.at("strategies")) m.strategies.push_back(replay_strategy_from_string(s.get<std::string>()));
    }
    if (doc.contains("seeds")) m.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    if (doc.contains("reference")) m.reference = doc.at("reference").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("matrix: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    fail(ErrorCode::ConfigError, std::string("matrix: ") + e.what());
  }
  if (m.variants.empty() || m.seeds.empty()) fail(ErrorCode::ConfigError, "matrix: needs at least one variant and seed");
  const auto cells = m.cells();
  std::map<std::string, int> names;
  for (const auto& c : cells) {
    if (++names[c.name] > 1) fail(ErrorCode::ConfigError, "matrix: duplicate cell name '" + c.name + "'");
  }
  return m;
}

ExperimentMatrix load_matrix(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("malformed matrix: ") + e.what());
  }
  return matrix_from_json(doc, fs::path(path).parent_path().string());
}

std::size_t worker_cap() {
  if (const char* env = std::getenv("BRICKLAYER_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

double median_of(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  return median(values);
}

double sign_test_p(std::size_t wins, std::size_t losses) {
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  const std::size_t k = std::max(wins, losses);
  // P(X >= k) for X ~ Binomial(n, 1/2), summed in log space.
  double tail = 0.0;
  for (std::size_t i = k; i <= n; ++i) {
    const double log_term = std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(i) + 1) -
                            std::lgamma(static_cast<double>(n - i) + 1) - static_cast<double>(n) * std::log(2.0);
    tail += std::exp(log_term);
  }
  return std::min(1.0, 2.0 * tail);
}

CellRun cell_run_from_report(const std::string& cell, const json& report) {
  CellRun r;
  r.cell = cell;
  r.seed = report.at("seed").get<std::uint64_t>();
  r.final_average_auc = final_average_auc(report);
  r.mean_forgetting = mean_forgetting(report);
  r.silhouette = report.at("summary").at("silhouette").get<double>();
  r.stream_hash = report.at("stream_hash").get<std::string>();
  return r;
}

std::vector<CellSummary> summarize(const ExperimentMatrix& matrix, const std::vector<CellRun>& runs) {
  std::map<std::uint64_t, std::string> hash_by_seed;
  std::map<std::string, std::map<std::uint64_t, const CellRun*>> by_cell;
  for (const auto& r : runs) {
    auto [it, inserted] = hash_by_seed.emplace(r.seed, r.stream_hash);
    if (!inserted && it->second != r.stream_hash) {
      fail(ErrorCode::PairingViolation,
           "cell '" + r.cell + "' saw a different task stream for seed " + std::to_string(r.seed));
    }
    by_cell[r.cell][r.seed] = &r;
  }
  const auto ref_it = by_cell.find(matrix.reference);

  std::vector<CellSummary> out;
  for (const auto& cell : matrix.cells()) {
    CellSummary s;
    s.cell = cell.name;
    const auto it = by_cell.find(cell.name);
    if (it == by_cell.end()) {
      out.push_back(s);
      continue;
    }
    std::vector<double> aucs, frs, sils, deltas;
    for (const auto& [seed, run] : it->second) {
      aucs.push_back(run->final_average_auc);
      frs.push_back(run->mean_forgetting);
      sils.push_back(run->silhouette);
      if (ref_it == by_cell.end()) continue;
      const auto ref = ref_it->second.find(seed);
      if (ref == ref_it->second.end()) continue;
      const double delta = run->final_average_auc - ref->second->final_average_auc;
      deltas.push_back(delta);
      if (delta < 0.0) {
        ++s.wins;
      } else if (delta > 0.0) {
        ++s.losses;
      } else {
        ++s.ties;
      }
    }
    s.runs = aucs.size();
    s.median_auc = median_of(aucs);
    s.median_fr = median_of(frs);
    s.median_silhouette = median_of(sils);
    s.median_delta_auc = deltas.empty() ? std::nan("") : median_of(deltas);
    s.sign_test_p = sign_test_p(s.wins, s.losses);
    out.push_back(s);
  }
  return out;
}

std::string cell_path(const std::string& out_dir, const std::string& cell, std::uint64_t seed) {
  std::string safe;
  for (char c : cell) safe += std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_';
  return (fs::path(out_dir) / "cells" / safe / ("seed_" + std::to_string(seed) + ".json")).string();
}

MatrixResult run_matrix(const ExperimentMatrix& matrix, const MatrixRunOptions& opts) {
  struct Job {
    MatrixCell cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& cell : matrix.cells()) {
    for (auto seed : matrix.seeds) jobs.push_back({cell, seed});
  }

  MatrixResult result;
  result.runs.resize(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      try {
        const std::string path = opts.out_dir.empty() ? "" : cell_path(opts.out_dir, job.cell.name, job.seed);
        json report;
        if (!path.empty() && opts.reuse_existing && fs::exists(path)) {
          report = json::parse(read_file(path));
        } else {
          const RunConfig cfg = matrix.cell_config(job.cell, job.seed);
          report = report_json(cfg, run_protocol(cfg.protocol, cfg.train));
          if (!path.empty()) write_atomic(path, dump_report(report));
        }
        result.runs[i] = cell_run_from_report(job.cell.name, report);
        if (opts.on_cell_done) {
          std::lock_guard lock(callback_mutex);
          opts.on_cell_done(result.runs[i]);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t threads = std::min(opts.threads == 0 ? worker_cap() : opts.threads, jobs.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  result.summary = summarize(matrix, result.runs);
  if (!opts.out_dir.empty()) {
    write_atomic((fs::path(opts.out_dir) / "summary.csv").string(), summary_csv(result.summary));
  }
  return result;
}

MatrixResult load_matrix_result(const ExperimentMatrix& matrix, const std::string& out_dir) {
  MatrixResult result;
  for (const auto& cell : matrix.cells()) {
    for (auto seed : matrix.seeds) {
      const std::string path = cell_path(out_dir, cell.name, seed);
      if (!fs::exists(path)) continue;
      result.runs.push_back(cell_run_from_report(cell.name, json::parse(read_file(path))));
    }
  }
  result.summary = summarize(matrix, result.runs);
  return result;
}

std::string summary_csv(const std::vector<CellSummary>& summary) {
  std::ostringstream out;
  out << "cell,runs,median_auc,median_fr,median_silhouette,median_delta_auc,ref_wins,ref_losses,ties,sign_test_p\n";
  auto num = [](double v) { return std::isnan(v) ? std::string("nan") : json(report_round(v)).dump(); };
  for (const auto& s : summary) {
    out << '"' << s.cell << "\"," << s.runs << ',' << num(s.median_auc) << ',' << num(s.median_fr) << ','
        << num(s.median_silhouette) << ',' << num(s.median_delta_auc) << ',' << s.wins << ',' << s.losses << ','
        << s.ties << ',' << num(s.sign_test_p) << '\n';
  }
  return out.str();
}

}  // namespace bricklayer
