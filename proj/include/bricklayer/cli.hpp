#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "bricklayer/config.hpp"

namespace bricklayer {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfig = 2, kExitRuntime = 3 };

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<ReportFormat> format;
  bool toy2d = false;
};

// Loads a YAML config (or defaults when path is empty) and applies overrides.
RunConfig resolve_config(const std::string& path, const CliOverrides& overrides);

struct RunOptions {
  std::size_t checkpoint_every = 0;  // units of work between checkpoints; 0 disables
  std::size_t stop_after = 0;        // checkpoint and stop after this many units; 0 runs to the end
};

int cmd_run(const RunConfig& cfg, const RunOptions& opts, std::ostream& out);
int cmd_resume(const std::string& checkpoint_path, const std::optional<std::string>& out_dir, const RunOptions& opts,
               std::ostream& out);
int cmd_replay_audit(const RunConfig& cfg, std::ostream& out);
int cmd_gradcheck(const std::string& inject_fault, std::ostream& out);
int cmd_export_features(RunConfig cfg, std::ostream& out);
int cmd_ablate(const std::string& matrix_path, const std::string& out_dir, std::size_t threads, std::ostream& out);

// Parses argv and dispatches; maps ConfigError to 2 and other failures to 3.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bricklayer
