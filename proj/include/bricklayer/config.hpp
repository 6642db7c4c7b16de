#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bricklayer/taskgen.hpp"
#include "bricklayer/trainer.hpp"

namespace bricklayer {

inline constexpr const char* kCodeVersion = "0.1.0";

enum class ReportFormat { Json, Csv, Both };

std::string to_string(ReportFormat f);
ReportFormat report_format_from_string(const std::string& s);

struct AuditConfig {
  std::vector<ReplayStrategy> strategies = {ReplayStrategy::Sur, ReplayStrategy::Center, ReplayStrategy::Random};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct RunConfig {
  std::uint64_t seed = 0;
  ProtocolSpec protocol;
  TrainConfig train;
  std::string out_dir = "out";
  ReportFormat format = ReportFormat::Both;
  bool checkpoint_each_task = false;
  bool toy2d = false;
  AuditConfig audit;

  // Pushes the run seed into the protocol and trainer and applies toy2d.
  void resolve();
  void validate() const;
};

// Unknown keys and ill-typed values raise ConfigError naming the key path.
RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& cfg);

nlohmann::json yaml_to_json(const std::string& text);
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& yaml_text);

std::string read_file(const std::string& path);

// Reads an {disable_ida, disable_iso, disable_dr, disable_all} mapping.
void parse_ablation_flags(const nlohmann::json& obj, AblationFlags& flags, const std::string& path);

}  // namespace bricklayer
