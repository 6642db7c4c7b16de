#pragma once

#include <string>

#include <json.hpp>

#include "bricklayer/config.hpp"
#include "bricklayer/trainer.hpp"

namespace bricklayer {

inline constexpr int kReportSchemaVersion = 1;

// Reported numbers are rounded to this many decimals in every format.
double report_round(double x);

nlohmann::json report_json(const RunConfig& cfg, const ProtocolResult& result);

// Long-format CSV (table,increment,task,step,field,value) derived from the
// JSON document so both formats carry the same numbers.
std::string report_csv(const nlohmann::json& report);

// Serialized form used for report.json; parse + re-emit is byte-stable.
std::string dump_report(const nlohmann::json& report);

// Per-task eval features as CSV: task,class,domain,f0..f{d-1}.
std::string features_csv(const ProtocolResult& result, int task_id);

// Writes through a temporary sibling file and renames it into place.
void write_atomic(const std::string& path, const std::string& content);

struct ReportPaths {
  std::string json;
  std::string csv;
  std::vector<std::string> features;
};

// Emits report.json / report.csv (per cfg.format) and feature dumps into dir.
ReportPaths write_report(const std::string& dir, const RunConfig& cfg, const ProtocolResult& result);

double final_average_auc(const nlohmann::json& report);
double mean_forgetting(const nlohmann::json& report);

}  // namespace bricklayer
