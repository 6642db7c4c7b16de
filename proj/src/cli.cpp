#include "bricklayer/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <map>
#include <sstream>

#include "bricklayer/ablation.hpp"
#include "bricklayer/checkpoint.hpp"
#include "bricklayer/gradcheck.hpp"
#include "bricklayer/report.hpp"

namespace bricklayer {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig resolve_config(const std::string& path, const CliOverrides& overrides) {
  RunConfig cfg = path.empty() ? run_config_from_json(json::object()) : load_run_config(path);
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
  if (overrides.format) cfg.format = *overrides.format;
  if (overrides.toy2d) cfg.toy2d = true;
  cfg.resolve();
  cfg.validate();
  return cfg;
}

namespace {

std::string checkpoint_path(const std::string& out_dir) { return (fs::path(out_dir) / "checkpoint.bin").string(); }

void write_timing(const std::string& out_dir, double seconds) {
  write_atomic((fs::path(out_dir) / "timing.json").string(), json{{"wall_clock_seconds", seconds}}.dump() + "\n");
}

// Advances the runner, checkpointing per opts; returns false if stopped early.
bool drive(const RunConfig& cfg, ProtocolRunner& runner, const RunOptions& opts, std::ostream& out) {
  std::size_t units = 0;
  int finished_tasks = runner.trainer().state().tasks_done;
  while (!runner.done()) {
    runner.advance();
    ++units;
    const bool task_boundary = runner.trainer().state().tasks_done != finished_tasks;
    finished_tasks = runner.trainer().state().tasks_done;
    if (task_boundary) {
      const auto& row = runner.result().auc.back();
      out << "task " << finished_tasks << " done; auc row:";
      for (double v : row) out << ' ' << std::fixed << std::setprecision(4) << v;
      out << '\n';
    }
    const bool periodic = opts.checkpoint_every > 0 && units % opts.checkpoint_every == 0;
    if (periodic || (task_boundary && cfg.checkpoint_each_task)) save_checkpoint(checkpoint_path(cfg.out_dir), cfg, runner);
    if (opts.stop_after > 0 && units >= opts.stop_after && !runner.done()) {
      save_checkpoint(checkpoint_path(cfg.out_dir), cfg, runner);
      out << "stopped after " << units << " units; checkpoint at " << checkpoint_path(cfg.out_dir) << '\n';
      return false;
    }
  }
  return true;
}

void emit(const RunConfig& cfg, const ProtocolResult& result, double seconds, std::ostream& out) {
  const ReportPaths paths = write_report(cfg.out_dir, cfg, result);
  write_timing(cfg.out_dir, seconds);
  out << std::fixed << std::setprecision(4) << "final average AUC " << result.final_average_auc()
      << ", mean FR " << result.mean_forgetting() << '\n';
  if (!paths.json.empty()) out << "wrote " << paths.json << '\n';
  if (!paths.csv.empty()) out << "wrote " << paths.csv << '\n';
  for (const auto& p : paths.features) out << "wrote " << p << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int cmd_run(const RunConfig& cfg, const RunOptions& opts, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  ProtocolRunner runner(cfg.protocol, cfg.train);
  if (!drive(cfg, runner, opts, out)) return kExitOk;
  emit(cfg, runner.finalize(), seconds_since(t0), out);
  return kExitOk;
}

int cmd_resume(const std::string& checkpoint, const std::optional<std::string>& out_dir, const RunOptions& opts,
               std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  if (out_dir) loaded.config.out_dir = *out_dir;
  out << "resumed at task " << loaded.runner->trainer().cursor().task_id << ", step "
      << loaded.runner->trainer().cursor().task_step << '\n';
  if (!drive(loaded.config, *loaded.runner, opts, out)) return kExitOk;
  emit(loaded.config, loaded.runner->finalize(), seconds_since(t0), out);
  return kExitOk;
}

int cmd_replay_audit(const RunConfig& cfg, std::ostream& out) {
  std::ostringstream csv;
  csv << "strategy,task,domain,mmd,seed\n";
  std::map<std::string, std::vector<double>> by_strategy;
  for (auto strategy : cfg.audit.strategies) {
    for (auto seed : cfg.audit.seeds) {
      RunConfig run = cfg;
      run.seed = seed;
      run.train.strategy = strategy;
      run.resolve();
      const ProtocolResult res = run_protocol(run.protocol, run.train);
      for (const auto& row : res.mmd_audit) {
        csv << row.strategy << ',' << row.task << ',' << to_string(row.domain) << ','
            << json(report_round(row.mmd)).dump() << ',' << seed << '\n';
        by_strategy[row.strategy].push_back(row.mmd);
      }
    }
  }
  for (auto strategy : cfg.audit.strategies) {
    const std::string name = to_string(strategy);
    const double med = median_of(by_strategy[name]);
    csv << name << ",all,all," << json(report_round(med)).dump() << ",median\n";
    out << std::fixed << std::setprecision(6) << "median MMD " << name << ' ' << med << '\n';
  }
  const std::string path = (fs::path(cfg.out_dir) / "replay_audit.csv").string();
  write_atomic(path, csv.str());
  out << "wrote " << path << '\n';
  return kExitOk;
}

int cmd_gradcheck(const std::string& inject_fault, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckOptions opts;
  opts.inject_fault = inject_fault;
  const auto rows = run_gradchecks(opts);
  out << std::left << std::setw(20) << "component" << std::setw(11) << "instances" << std::setw(13) << "coordinates"
      << std::setw(15) << "max_rel_error" << "status\n";
  std::vector<std::string> failed;
  for (const auto& r : rows) {
    std::ostringstream err;
    err << std::scientific << std::setprecision(3) << r.max_rel_error;
    out << std::left << std::setw(20) << r.component << std::setw(11) << r.instances << std::setw(13) << r.coordinates
        << std::setw(15) << err.str() << (r.pass ? "PASS" : "FAIL") << '\n';
    if (!r.pass) failed.push_back(r.component);
  }
  out << "elapsed " << std::fixed << std::setprecision(2) << seconds_since(t0) << " s\n";
  if (failed.empty()) return kExitOk;
  out << "gradient check failed:";
  for (const auto& f : failed) out << ' ' << f;
  out << '\n';
  return kExitCheckFailed;
}

int cmd_export_features(RunConfig cfg, std::ostream& out) {
  cfg.train.dump_features = true;
  const auto t0 = std::chrono::steady_clock::now();
  ProtocolRunner runner(cfg.protocol, cfg.train);
  runner.run_to_end();
  emit(cfg, runner.finalize(), seconds_since(t0), out);
  return kExitOk;
}

int cmd_ablate(const std::string& matrix_path, const std::string& out_dir, std::size_t threads, std::ostream& out) {
  const ExperimentMatrix matrix = load_matrix(matrix_path);
  MatrixRunOptions opts;
  opts.out_dir = out_dir;
  opts.threads = threads;
  opts.on_cell_done = [&out](const CellRun& r) {
    out << "cell " << r.cell << " seed " << r.seed << " avg AUC " << std::fixed << std::setprecision(4)
        << r.final_average_auc << '\n';
  };
  const MatrixResult res = run_matrix(matrix, opts);
  out << summary_csv(res.summary);
  out << "wrote " << (fs::path(out_dir) / "summary.csv").string() << '\n';
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Incremental forgery detection with sparse replay and latent-space isolation"};
  app.require_subcommand(1);

  std::string config_path;
  CliOverrides overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::string format;
  RunOptions run_opts;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "YAML run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "override the stream and training seed");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--format", format, "report format")->check(CLI::IsMember({"json", "csv", "both"}));
    cmd->add_flag("--toy2d", overrides.toy2d, "force a 2-D feature space");
  };

  auto* run = app.add_subcommand("run", "train the full protocol and write reports");
  add_common(run);
  run->add_option("--checkpoint-every", run_opts.checkpoint_every, "checkpoint every N units of work");
  run->add_option("--stop-after", run_opts.stop_after, "checkpoint and stop after N units of work");

  auto* audit = app.add_subcommand("replay-audit", "compare replay strategies by MMD to the full domain");
  add_common(audit);

  std::string inject_fault;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every analytic gradient");
  grad->add_option("--inject-fault", inject_fault, "perturb one component's gradient (harness self-test)")
      ->group("");

  std::string checkpoint;
  auto* resume = app.add_subcommand("resume", "continue a run from a checkpoint");
  resume->add_option("checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  resume->add_option("--out", out_dir, "output directory");
  resume->add_option("--checkpoint-every", run_opts.checkpoint_every, "checkpoint every N units of work");
  resume->add_option("--stop-after", run_opts.stop_after, "checkpoint and stop after N units of work");

  auto* features = app.add_subcommand("export-features", "run and dump per-task eval features as CSV");
  add_common(features);

  std::string matrix_path;
  std::string ablate_out = "out";
  std::size_t threads = 0;
  auto* ablate = app.add_subcommand("ablate", "run an experiment matrix");
  ablate->add_option("--matrix", matrix_path, "matrix.json")->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", ablate_out, "output directory");
  ablate->add_option("--threads", threads, "worker cap (default BRICKLAYER_THREADS)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto* active = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "error: " << e.what() << '\n';
    if (e.get_exit_code() != 0) err << active->help();
    return kExitConfig;
  }

  try {
    overrides.seed = seed;
    overrides.out_dir = out_dir;
    if (!format.empty()) overrides.format = report_format_from_string(format);
    if (run->parsed()) return cmd_run(resolve_config(config_path, overrides), run_opts, out);
    if (audit->parsed()) return cmd_replay_audit(resolve_config(config_path, overrides), out);
    if (grad->parsed()) return cmd_gradcheck(inject_fault, out);
    if (resume->parsed()) return cmd_resume(checkpoint, out_dir, run_opts, out);
    if (features->parsed()) return cmd_export_features(resolve_config(config_path, overrides), out);
    if (ablate->parsed()) return cmd_ablate(matrix_path, ablate_out, threads, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::ConfigError ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace bricklayer
