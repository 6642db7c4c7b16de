#include "bricklayer/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bricklayer {

using nlohmann::json;

double report_round(double x) {
  if (!std::isfinite(x)) return x;
  const double r = std::round(x * 1e6) / 1e6;
  return r == 0.0 ? 0.0 : r;  // no negative zero
}

namespace {

json rounded_rows(const std::vector<std::vector<double>>& rows) {
  json out = json::array();
  for (const auto& row : rows) {
    json r = json::array();
    for (double v : row) r.push_back(report_round(v));
    out.push_back(std::move(r));
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string number_text(const json& v) { return v.dump(); }

}  // namespace

json report_json(const RunConfig& cfg, const ProtocolResult& result) {
  json forgetting = json::array();
  for (const auto& f : result.forgetting) {
    forgetting.push_back({{"task", f.task},
                          {"auc_first", report_round(f.auc_first)},
                          {"auc_last", report_round(f.auc_last)},
                          {"fr", report_round(f.fr)}});
  }
  json mmd_rows = json::array();
  for (const auto& m : result.mmd_audit) {
    mmd_rows.push_back(
        {{"task", m.task}, {"domain", to_string(m.domain)}, {"strategy", m.strategy}, {"mmd", report_round(m.mmd)}});
  }
  json trace = json::array();
  for (const auto& r : result.loss_trace) {
    trace.push_back({{"task", r.task},
                     {"step", r.step},
                     {"l_iso", report_round(r.l_iso)},
                     {"l_dis", report_round(r.l_dis)},
                     {"l_det", report_round(r.l_det)},
                     {"l_overall", report_round(r.l_overall)}});
  }
  return json{
      {"schema_version", kReportSchemaVersion},
      {"code_version", kCodeVersion},
      {"seed", cfg.seed},
      {"config", to_json(cfg)},
      {"stream_hash", hex64(result.stream_hash)},
      {"auc", rounded_rows(result.auc)},
      {"acc", rounded_rows(result.acc)},
      {"forgetting", forgetting},
      {"mmd_audit", mmd_rows},
      {"summary",
       {{"final_average_auc", report_round(result.final_average_auc())},
        {"mean_forgetting", report_round(result.mean_forgetting())},
        {"silhouette", report_round(result.silhouette)}}},
      {"loss_trace", trace},
  };
}

std::string dump_report(const json& report) { return report.dump(2) + "\n"; }

std::string report_csv(const json& report) {
  std::ostringstream out;
  out << "table,increment,task,step,field,value\n";
  auto row = [&](const char* table, long long increment, long long task, long long step, const std::string& field,
                 const json& value) {
    out << table << ',' << increment << ',' << task << ',' << step << ',' << field << ',' << number_text(value) << '\n';
  };
  for (const char* table : {"auc", "acc"}) {
    const json& rows = report.at(table);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < rows[i].size(); ++j) {
        row(table, static_cast<long long>(i + 1), static_cast<long long>(j + 1), 0, table, rows[i][j]);
      }
    }
  }
  const auto increments = static_cast<long long>(report.at("auc").size());
  for (const auto& f : report.at("forgetting")) {
    for (const char* field : {"auc_first", "auc_last", "fr"}) {
      row("forgetting", increments, f.at("task").get<long long>(), 0, field, f.at(field));
    }
  }
  for (const auto& m : report.at("mmd_audit")) {
    const auto task = m.at("task").get<long long>();
    row("mmd_audit", task, task, 0, "mmd_" + m.at("domain").get<std::string>(), m.at("mmd"));
  }
  for (const auto& [field, value] : report.at("summary").items()) row("summary", increments, 0, 0, field, value);
  for (const auto& r : report.at("loss_trace")) {
    const auto task = r.at("task").get<long long>();
    const auto step = r.at("step").get<long long>();
    for (const char* field : {"l_iso", "l_dis", "l_det", "l_overall"}) row("loss_trace", task, task, step, field, r.at(field));
  }
  return out.str();
}

std::string features_csv(const ProtocolResult& result, int task_id) {
  std::ostringstream out;
  out << "task,class,domain";
  for (std::size_t k = 0; k < result.features.cols(); ++k) out << ",f" << k;
  out << '\n';
  for (std::size_t i = 0; i < result.features.rows(); ++i) {
    const DomainLabel dom = DomainLabel::from_id(result.feature_domains[i]);
    if (dom.task_id != task_id) continue;
    out << dom.task_id << ',' << to_string(dom.cls) << ',' << dom.id();
    for (double v : result.features.row(i)) out << ',' << json(report_round(v)).dump();
    out << '\n';
  }
  return out.str();
}

void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) fail(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

ReportPaths write_report(const std::string& dir, const RunConfig& cfg, const ProtocolResult& result) {
  namespace fs = std::filesystem;
  const json doc = report_json(cfg, result);
  ReportPaths paths;
  if (cfg.format != ReportFormat::Csv) {
    paths.json = (fs::path(dir) / "report.json").string();
    write_atomic(paths.json, dump_report(doc));
  }
  if (cfg.format != ReportFormat::Json) {
    paths.csv = (fs::path(dir) / "report.csv").string();
    write_atomic(paths.csv, report_csv(doc));
  }
  if (result.features.rows() > 0) {
    for (std::size_t t = 1; t <= result.auc.size(); ++t) {
      const auto p = (fs::path(dir) / ("features_task" + std::to_string(t) + ".csv")).string();
      write_atomic(p, features_csv(result, static_cast<int>(t)));
      paths.features.push_back(p);
    }
  }
  return paths;
}

double final_average_auc(const json& report) { return report.at("summary").at("final_average_auc").get<double>(); }

double mean_forgetting(const json& report) { return report.at("summary").at("mean_forgetting").get<double>(); }

}  // namespace bricklayer
