#include "bricklayer/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "bricklayer/report.hpp"

namespace bricklayer {

namespace {

constexpr char kMagic[8] = {'B', 'R', 'K', 'L', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void boolean(bool v) { u8(v ? 1 : 0); }
  void bytes(const std::string& s) {
    u64(s.size());
    buf_ += s;
  }
  void doubles(std::span<const double> xs) {
    u64(xs.size());
    for (double x : xs) f64(x);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }

  void section(const char (&tag)[5], const Writer& body) {
    raw(tag, 4);
    bytes(body.buf_);
  }
  const std::string& data() const noexcept { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool boolean() {
    const auto v = u8();
    if (v > 1) corrupt("bad boolean");
    return v == 1;
  }
  std::size_t count(std::size_t elem_size) {
    const std::uint64_t n = u64();
    if (elem_size > 0 && n > (data_.size() - pos_) / elem_size) corrupt("length exceeds payload");
    return static_cast<std::size_t>(n);
  }
  std::string bytes() {
    const std::size_t n = count(1);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Vector doubles() {
    Vector xs(count(8));
    for (double& x : xs) x = f64();
    return xs;
  }
  std::string_view tag() {
    need(4);
    const auto t = data_.substr(pos_, 4);
    pos_ += 4;
    return t;
  }
  Reader section(std::string_view expected) {
    if (tag() != expected) corrupt("expected section " + std::string(expected));
    const std::size_t n = count(1);
    Reader sub(data_.substr(pos_, n));
    pos_ += n;
    return sub;
  }
  void expect_end() const {
    if (pos_ != data_.size()) corrupt("trailing bytes in section");
  }

  [[noreturn]] static void corrupt(const std::string& why) { fail(ErrorCode::CorruptFile, "checkpoint: " + why); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) corrupt("unexpected end of data");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint64_t checksum(std::string_view bytes) {
  return fnv1a64(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
}

void put_backbone(Writer& w, const BackboneParams& p) {
  w.u64(p.layer_count());
  for (const auto& l : p.layers()) {
    w.u64(l.in);
    w.u64(l.out);
    w.u8(static_cast<std::uint8_t>(l.activation));
  }
  w.doubles(p.values());
}

BackboneParams get_backbone(Reader& r) {
  std::vector<LayerShape> layers(r.count(17));
  for (auto& l : layers) {
    l.in = r.u64();
    l.out = r.u64();
    const auto act = r.u8();
    if (act > 1) Reader::corrupt("bad activation");
    l.activation = static_cast<Activation>(act);
  }
  BackboneParams p(std::move(layers));
  const Vector values = r.doubles();
  if (values.size() != p.values().size()) Reader::corrupt("backbone value count mismatch");
  std::copy(values.begin(), values.end(), p.values().begin());
  return p;
}

void put_adam(Writer& w, const AdamState& s) {
  w.doubles(s.m);
  w.doubles(s.v);
  w.u64(s.step);
}

AdamState get_adam(Reader& r) {
  AdamState s;
  s.m = r.doubles();
  s.v = r.doubles();
  s.step = r.u64();
  return s;
}

void put_sample(Writer& w, const Sample& s) {
  w.u64(s.id);
  w.i64(s.grid);
  w.i64(s.block_dim);
  w.u8(static_cast<std::uint8_t>(s.label));
  w.i64(s.task_id);
  w.doubles(s.values);
}

Sample get_sample(Reader& r) {
  Sample s;
  s.id = r.u64();
  s.grid = static_cast<int>(r.i64());
  s.block_dim = static_cast<int>(r.i64());
  s.label = r.boolean() ? ClassLabel::Fake : ClassLabel::Real;
  s.task_id = static_cast<int>(r.i64());
  s.values = r.doubles();
  return s;
}

void put_replay(Writer& w, const ReplaySet& set) {
  w.i64(set.builder_task_id);
  w.u8(static_cast<std::uint8_t>(set.strategy));
  for (const auto& dom : set.domains) {
    w.i64(dom.domain.task_id);
    w.u8(static_cast<std::uint8_t>(dom.domain.cls));
    w.u64(dom.requested);
    w.u64(dom.shortfall);
    w.doubles(dom.build_centroid);
    w.u64(dom.entries.size());
    for (const auto& e : dom.entries) {
      put_sample(w, e.sample);
      w.doubles(e.cached_feature);
    }
  }
}

ReplaySet get_replay(Reader& r) {
  ReplaySet set;
  set.builder_task_id = static_cast<int>(r.i64());
  const auto strategy = r.u8();
  if (strategy > static_cast<std::uint8_t>(ReplayStrategy::RandomUniform)) Reader::corrupt("bad replay strategy");
  set.strategy = static_cast<ReplayStrategy>(strategy);
  for (auto& dom : set.domains) {
    dom.domain.task_id = static_cast<int>(r.i64());
    dom.domain.cls = r.boolean() ? ClassLabel::Fake : ClassLabel::Real;
    dom.requested = r.u64();
    dom.shortfall = r.u64();
    dom.build_centroid = r.doubles();
    dom.entries.resize(r.count(1));
    for (auto& e : dom.entries) {
      e.sample = get_sample(r);
      e.cached_feature = r.doubles();
    }
  }
  return set;
}

void put_matrix(Writer& w, const Matrix& m) {
  w.u64(m.rows());
  w.u64(m.cols());
  w.doubles(m.values());
}

Matrix get_matrix(Reader& r) {
  const std::size_t rows = r.u64();
  const std::size_t cols = r.u64();
  const Vector values = r.doubles();
  if (values.size() != rows * cols) Reader::corrupt("matrix size mismatch");
  Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.values().begin());
  return m;
}

void put_table(Writer& w, const std::vector<std::vector<double>>& rows) {
  w.u64(rows.size());
  for (const auto& row : rows) w.doubles(row);
}

std::vector<std::vector<double>> get_table(Reader& r) {
  std::vector<std::vector<double>> rows(r.count(8));
  for (auto& row : rows) row = r.doubles();
  return rows;
}

void put_trace(Writer& w, const std::vector<LossTraceRow>& trace) {
  w.u64(trace.size());
  for (const auto& t : trace) {
    w.i64(t.task);
    w.u64(t.step);
    w.f64(t.l_iso);
    w.f64(t.l_dis);
    w.f64(t.l_det);
    w.f64(t.l_overall);
  }
}

std::vector<LossTraceRow> get_trace(Reader& r) {
  std::vector<LossTraceRow> trace(r.count(48));
  for (auto& t : trace) {
    t.task = static_cast<int>(r.i64());
    t.step = r.u64();
    t.l_iso = r.f64();
    t.l_dis = r.f64();
    t.l_det = r.f64();
    t.l_overall = r.f64();
  }
  return trace;
}

void put_result(Writer& w, const ProtocolResult& res) {
  put_table(w, res.auc);
  put_table(w, res.acc);
  w.u64(res.forgetting.size());
  for (const auto& f : res.forgetting) {
    w.i64(f.task);
    w.f64(f.auc_first);
    w.f64(f.auc_last);
    w.f64(f.fr);
  }
  w.u64(res.mmd_audit.size());
  for (const auto& m : res.mmd_audit) {
    w.i64(m.task);
    w.u8(static_cast<std::uint8_t>(m.domain));
    w.bytes(m.strategy);
    w.f64(m.mmd);
  }
  w.u64(res.stream_hash);
  w.f64(res.silhouette);
  put_matrix(w, res.features);
  w.u64(res.feature_domains.size());
  for (int d : res.feature_domains) w.i64(d);
}

ProtocolResult get_result(Reader& r) {
  ProtocolResult res;
  res.auc = get_table(r);
  res.acc = get_table(r);
  res.forgetting.resize(r.count(32));
  for (auto& f : res.forgetting) {
    f.task = static_cast<int>(r.i64());
    f.auc_first = r.f64();
    f.auc_last = r.f64();
    f.fr = r.f64();
  }
  res.mmd_audit.resize(r.count(25));
  for (auto& m : res.mmd_audit) {
    m.task = static_cast<int>(r.i64());
    m.domain = r.boolean() ? ClassLabel::Fake : ClassLabel::Real;
    m.strategy = r.bytes();
    m.mmd = r.f64();
  }
  res.stream_hash = r.u64();
  res.silhouette = r.f64();
  res.features = get_matrix(r);
  res.feature_domains.resize(r.count(8));
  for (int& d : res.feature_domains) d = static_cast<int>(r.i64());
  return res;
}

}  // namespace

std::string encode_checkpoint(const RunConfig& cfg, const ProtocolRunner& runner) {
  const auto& trainer = runner.trainer();
  const auto& state = trainer.state();
  const auto& cursor = trainer.cursor();

  Writer out;
  out.raw(kMagic, sizeof kMagic);
  out.u32(kCheckpointVersion);

  Writer conf;
  conf.bytes(to_json(cfg).dump());
  out.section("CONF", conf);

  Writer rng;
  rng.u64(trainer.rng().key());
  rng.u64(trainer.rng().counter());
  rng.u64(runner.result().stream_hash);
  out.section("RNGS", rng);

  Writer live;
  put_backbone(live, state.live);
  out.section("LIVE", live);

  Writer frozen;
  frozen.boolean(state.frozen.has_value());
  if (state.frozen) put_backbone(frozen, state.frozen->params());
  out.section("FROZ", frozen);

  Writer heads;
  heads.u64(state.bank.size());
  for (const auto& h : state.bank.heads()) {
    heads.i64(h.task_id);
    heads.doubles(h.w);
    heads.f64(h.b);
    heads.boolean(h.frozen);
  }
  out.section("HEAD", heads);

  Writer replay;
  replay.u64(state.replay.size());
  for (const auto& set : state.replay) put_replay(replay, set);
  out.section("REPL", replay);

  Writer opt;
  put_adam(opt, state.backbone_opt);
  put_adam(opt, state.head_opt);
  out.section("OPTM", opt);

  Writer curs;
  curs.i64(state.tasks_done);
  curs.i64(runner.next_task());
  curs.i64(cursor.task_id);
  curs.i64(cursor.epoch);
  curs.u64(cursor.step_in_epoch);
  curs.u64(cursor.task_step);
  curs.u64(cursor.epoch_centroids.size());
  for (const auto& c : cursor.epoch_centroids) curs.doubles(c);
  out.section("CURS", curs);

  Writer trace;
  put_trace(trace, trainer.trace());
  out.section("TRAC", trace);

  Writer result;
  put_result(result, runner.result());
  out.section("RSLT", result);

  std::string bytes = out.data();
  Writer sum;
  sum.u64(checksum(bytes));
  return bytes + sum.data();
}

LoadedCheckpoint decode_checkpoint(const std::string& bytes) {
  constexpr std::size_t header = sizeof kMagic + 4;
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    Reader::corrupt("missing magic header");
  }
  Reader head(std::string_view(bytes).substr(sizeof kMagic, 4));
  const std::uint32_t version = head.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::VersionMismatch, "checkpoint format version " + std::to_string(version) + ", expected " +
                                         std::to_string(kCheckpointVersion));
  }
  if (bytes.size() < header + 8) Reader::corrupt("missing checksum");
  const std::string_view body = std::string_view(bytes).substr(0, bytes.size() - 8);
  Reader tail(std::string_view(bytes).substr(bytes.size() - 8));
  if (tail.u64() != checksum(body)) Reader::corrupt("checksum mismatch");

  Reader r(body.substr(header));
  LoadedCheckpoint out;

  Reader conf = r.section("CONF");
  try {
    out.config = run_config_from_json(nlohmann::json::parse(conf.bytes()));
  } catch (const nlohmann::json::exception& e) {
    Reader::corrupt(std::string("config: ") + e.what());
  }
  conf.expect_end();

  out.runner = std::make_unique<ProtocolRunner>(out.config.protocol, out.config.train);
  auto& trainer = out.runner->trainer();
  auto& state = trainer.mutable_state();

  Reader rng = r.section("RNGS");
  const std::uint64_t key = rng.u64();
  const std::uint64_t counter = rng.u64();
  const std::uint64_t stream = rng.u64();
  rng.expect_end();
  if (key != trainer.rng().key() || counter != trainer.rng().counter()) Reader::corrupt("rng state disagrees with seed");
  if (stream != out.runner->result().stream_hash) Reader::corrupt("task stream hash disagrees with config");

  Reader live = r.section("LIVE");
  state.live = get_backbone(live);
  live.expect_end();

  Reader frozen = r.section("FROZ");
  if (frozen.boolean()) {
    state.frozen = FrozenBackbone(get_backbone(frozen));
  } else {
    state.frozen.reset();
  }
  frozen.expect_end();

  Reader heads = r.section("HEAD");
  std::vector<TaskHead> bank(heads.count(1));
  for (auto& h : bank) {
    h.task_id = static_cast<int>(heads.i64());
    h.w = heads.doubles();
    h.b = heads.f64();
    h.frozen = heads.boolean();
  }
  heads.expect_end();
  state.bank = HeadBank(std::move(bank));

  Reader replay = r.section("REPL");
  state.replay.resize(replay.count(1));
  for (auto& set : state.replay) set = get_replay(replay);
  replay.expect_end();

  Reader opt = r.section("OPTM");
  state.backbone_opt = get_adam(opt);
  state.head_opt = get_adam(opt);
  opt.expect_end();

  Reader curs = r.section("CURS");
  state.tasks_done = static_cast<int>(curs.i64());
  out.runner->set_next_task(static_cast<int>(curs.i64()));
  auto& cursor = trainer.mutable_cursor();
  cursor.task_id = static_cast<int>(curs.i64());
  cursor.epoch = static_cast<int>(curs.i64());
  cursor.step_in_epoch = curs.u64();
  cursor.task_step = curs.u64();
  cursor.epoch_centroids.resize(curs.count(8));
  for (auto& c : cursor.epoch_centroids) c = curs.doubles();
  curs.expect_end();

  Reader trace = r.section("TRAC");
  trainer.mutable_trace() = get_trace(trace);
  trace.expect_end();

  Reader result = r.section("RSLT");
  out.runner->result() = get_result(result);
  result.expect_end();
  r.expect_end();
  return out;
}

void save_checkpoint(const std::string& path, const RunConfig& cfg, const ProtocolRunner& runner) {
  write_atomic(path, encode_checkpoint(cfg, runner));
}

LoadedCheckpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace bricklayer
