#include "bricklayer/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace bricklayer {

using nlohmann::json;

std::string to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::Json: return "json";
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Both: return "both";
  }
  return "both";
}

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "both") return ReportFormat::Both;
  fail(ErrorCode::ConfigError, "output.format: expected json|csv|both, got '" + s + "'");
}

void RunConfig::resolve() {
  protocol.seed = seed;
  train.seed = seed;
  if (toy2d) train.feature_dim = 2;
}

void RunConfig::validate() const {
  try {
    protocol.validate();
    train.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }
  if (audit.seeds.empty()) fail(ErrorCode::ConfigError, "audit.seeds: at least one seed required");
  if (audit.strategies.empty()) fail(ErrorCode::ConfigError, "audit.strategies: at least one strategy required");
}

namespace {

// Reads typed fields out of one JSON object and rejects anything left over.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(ErrorCode::ConfigError, name("") + ": expected a mapping");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw std::runtime_error("expected true/false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw std::runtime_error("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && it->get<std::int64_t>() < 0) throw std::runtime_error("expected >= 0");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw std::runtime_error("expected a number");
      }
      out = it->get<T>();
    } catch (const std::exception& e) {
      fail(ErrorCode::ConfigError, name(key) + ": " + e.what());
    }
  }

  template <typename Enum, typename Parse>
  void get_enum(const char* key, Enum& out, Parse parse) {
    std::string s;
    get(key, s);
    if (obj_.contains(key)) {
      try {
        out = parse(s);
      } catch (const Error& e) {
        fail(ErrorCode::ConfigError, name(key) + ": " + e.what());
      }
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string name(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) fail(ErrorCode::ConfigError, "unknown key '" + name(key) + "'");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

HeadInit head_init_from_string(const std::string& s) {
  if (s == "warm_start") return HeadInit::WarmStart;
  if (s == "cold_random") return HeadInit::ColdRandom;
  fail(ErrorCode::ConfigError, "expected warm_start|cold_random, got '" + s + "'");
}
std::string to_string(HeadInit h) { return h == HeadInit::WarmStart ? "warm_start" : "cold_random"; }

InferenceAverage inference_from_string(const std::string& s) {
  if (s == "probability") return InferenceAverage::Probability;
  if (s == "logit") return InferenceAverage::Logit;
  fail(ErrorCode::ConfigError, "expected probability|logit, got '" + s + "'");
}
std::string to_string(InferenceAverage m) { return m == InferenceAverage::Probability ? "probability" : "logit"; }

IsoDenominator denominator_from_string(const std::string& s) {
  if (s == "negatives_only") return IsoDenominator::NegativesOnly;
  if (s == "all_others") return IsoDenominator::AllOthers;
  fail(ErrorCode::ConfigError, "expected negatives_only|all_others, got '" + s + "'");
}
std::string to_string(IsoDenominator d) { return d == IsoDenominator::NegativesOnly ? "negatives_only" : "all_others"; }

CentroidSource centroid_from_string(const std::string& s) {
  if (s == "epoch_replay_mean") return CentroidSource::EpochReplayMean;
  if (s == "build_time") return CentroidSource::BuildTime;
  fail(ErrorCode::ConfigError, "expected epoch_replay_mean|build_time, got '" + s + "'");
}
std::string to_string(CentroidSource c) { return c == CentroidSource::EpochReplayMean ? "epoch_replay_mean" : "build_time"; }

void parse_protocol(const json& obj, ProtocolSpec& p) {
  Section s(obj, "protocol");
  s.get_enum("mode", p.mode, protocol_mode_from_string);
  s.get("tasks", p.tasks);
  s.get("train_per_task", p.train_per_task);
  s.get("eval_per_task", p.eval_per_task);
  s.get("grid", p.grid);
  s.get("block_dim", p.block_dim);
  s.get("cue_scale", p.cue_scale);
  s.get("content_mean_scale", p.content_mean_scale);
  s.get("noise_scale", p.noise_scale);
  s.get("max_cue_cosine", p.max_cue_cosine);
  s.get("lobes", p.lobes);
  s.get("lobe_separation", p.lobe_separation);
  s.finish();
}

void parse_loss(const json& obj, LossConfig& l) {
  Section s(obj, "train.loss");
  s.get("temperature", l.temperature);
  s.get("mu1", l.mu1);
  s.get("mu2", l.mu2);
  s.get("normalize_features", l.normalize_features);
  s.get_enum("denominator", l.denominator, denominator_from_string);
  s.get_enum("centroid", l.centroid, centroid_from_string);
  s.get("refill_count", l.refill_count);
  s.finish();
}

void parse_ablation(const json& obj, AblationFlags& a, const std::string& path) {
  Section s(obj, path);
  s.get("disable_ida", a.disable_ida);
  s.get("disable_iso", a.disable_iso);
  s.get("disable_dr", a.disable_dr);
  s.get("disable_all", a.disable_all);
  s.finish();
}

void parse_train(const json& obj, TrainConfig& t) {
  Section s(obj, "train");
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("lr", t.lr);
  s.get("gamma", t.gamma);
  s.get("replay_per_domain", t.replay_per_domain);
  s.get_enum("strategy", t.strategy, replay_strategy_from_string);
  s.get("replay_fraction", t.replay_fraction);
  s.get("hidden", t.hidden);
  s.get("feature_dim", t.feature_dim);
  s.get_enum("head_init", t.head_init, head_init_from_string);
  s.get_enum("inference", t.inference, inference_from_string);
  s.get("stability_draws", t.stability_draws);
  s.get("reset_optimizer_per_task", t.reset_optimizer_per_task);
  s.get("trace_every", t.trace_every);
  s.get("dump_features", t.dump_features);
  if (const json* loss = s.child("loss")) parse_loss(*loss, t.loss);
  if (const json* abl = s.child("ablation")) parse_ablation(*abl, t.ablation, "train.ablation");
  s.finish();
}

}  // namespace

void parse_ablation_flags(const json& obj, AblationFlags& a, const std::string& path) { parse_ablation(obj, a, path); }

RunConfig run_config_from_json(const json& doc) {
  RunConfig cfg;
  const json root = doc.is_null() ? json::object() : doc;
  Section s(root, "");
  s.get("seed", cfg.seed);
  s.get("toy2d", cfg.toy2d);
  if (const json* p = s.child("protocol")) parse_protocol(*p, cfg.protocol);
  if (const json* t = s.child("train")) parse_train(*t, cfg.train);
  if (const json* o = s.child("output")) {
    Section out(*o, "output");
    out.get("dir", cfg.out_dir);
    out.get_enum("format", cfg.format, report_format_from_string);
    out.get("checkpoint_each_task", cfg.checkpoint_each_task);
    out.finish();
  }
  if (const json* a = s.child("audit")) {
    Section audit(*a, "audit");
    std::vector<std::string> names;
    audit.get("strategies", names);
    if (a->contains("strategies")) {
      cfg.audit.strategies.clear();
      for (const auto& n : names) {
        try {
          cfg.audit.strategies.push_back(replay_strategy_from_string(n));
        } catch (const Error& e) {
          fail(ErrorCode::ConfigError, std::string("audit.strategies: ") + e.what());
        }
      }
    }
    audit.get("seeds", cfg.audit.seeds);
    audit.finish();
  }
  s.finish();
  cfg.resolve();
  cfg.validate();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const auto& p = cfg.protocol;
  const auto& t = cfg.train;
  json audit_strategies = json::array();
  for (auto st : cfg.audit.strategies) audit_strategies.push_back(to_string(st));
  return json{
      {"seed", cfg.seed},
      {"toy2d", cfg.toy2d},
      {"protocol",
       {{"mode", to_string(p.mode)},
        {"tasks", p.tasks},
        {"train_per_task", p.train_per_task},
        {"eval_per_task", p.eval_per_task},
        {"grid", p.grid},
        {"block_dim", p.block_dim},
        {"cue_scale", p.cue_scale},
        {"content_mean_scale", p.content_mean_scale},
        {"noise_scale", p.noise_scale},
        {"max_cue_cosine", p.max_cue_cosine},
        {"lobes", p.lobes},
        {"lobe_separation", p.lobe_separation}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"lr", t.lr},
        {"gamma", t.gamma},
        {"replay_per_domain", t.replay_per_domain},
        {"strategy", to_string(t.strategy)},
        {"replay_fraction", t.replay_fraction},
        {"hidden", t.hidden},
        {"feature_dim", t.feature_dim},
        {"head_init", to_string(t.head_init)},
        {"inference", to_string(t.inference)},
        {"stability_draws", t.stability_draws},
        {"reset_optimizer_per_task", t.reset_optimizer_per_task},
        {"trace_every", t.trace_every},
        {"dump_features", t.dump_features},
        {"loss",
         {{"temperature", t.loss.temperature},
          {"mu1", t.loss.mu1},
          {"mu2", t.loss.mu2},
          {"normalize_features", t.loss.normalize_features},
          {"denominator", to_string(t.loss.denominator)},
          {"centroid", to_string(t.loss.centroid)},
          {"refill_count", t.loss.refill_count}}},
        {"ablation",
         {{"disable_ida", t.ablation.disable_ida},
          {"disable_iso", t.ablation.disable_iso},
          {"disable_dr", t.ablation.disable_dr},
          {"disable_all", t.ablation.disable_all}}}}},
      {"output",
       {{"dir", cfg.out_dir}, {"format", to_string(cfg.format)}, {"checkpoint_each_task", cfg.checkpoint_each_task}}},
      {"audit", {{"strategies", audit_strategies}, {"seeds", cfg.audit.seeds}}},
  };
}

namespace {

json scalar_to_json(const YAML::Node& node) {
  const std::string& text = node.Scalar();
  if (node.Tag() == "!") return text;  // quoted
  if (text == "true" || text == "True") return true;
  if (text == "false" || text == "False") return false;
  if (text == "~" || text == "null" || text.empty()) return nullptr;
  {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(text.c_str(), &end, 10);
    if (errno == 0 && end && *end == '\0') return v;
  }
  {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (errno == 0 && end && *end == '\0') return v;
  }
  return text;
}

json node_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(node_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = node_to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

}  // namespace

json yaml_to_json(const std::string& text) {
  try {
    return node_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::ConfigError, std::string("malformed config: ") + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig parse_run_config(const std::string& yaml_text) { return run_config_from_json(yaml_to_json(yaml_text)); }

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }
  return parse_run_config(text);
}

}  // namespace bricklayer
