// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/continual/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/seeding.hpp"

namespace cczsl::continual {
namespace nc = numcore;

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace {

constexpr std::string_view kMagic = "CCZSLCKP";

enum class Kind : std::uint8_t { U64 = 0, F64 = 1, Text = 2, Tensor = 3, U64s = 4, F64s = 5, Metrics = 6 };

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Writer {
 public:
  void field(std::string_view name, Kind kind, const std::string& payload) {
    put<std::uint32_t>(out_, static_cast<std::uint32_t>(name.size()));
    out_.append(name);
    put<std::uint8_t>(out_, static_cast<std::uint8_t>(kind));
    put<std::uint64_t>(out_, payload.size());
    out_.append(payload);
  }
  void u64(std::string_view name, std::uint64_t v) {
    std::string p;
    put(p, v);
    field(name, Kind::U64, p);
  }
  void f64(std::string_view name, double v) {
    std::string p;
    put(p, v);
    field(name, Kind::F64, p);
  }
  void text(std::string_view name, const std::string& v) { field(name, Kind::Text, v); }
  void tensor(std::string_view name, const nc::Tensor& t) {
    std::string p;
    put<std::uint32_t>(p, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(p, d);
    for (double v : t.values()) put(p, v);
    field(name, Kind::Tensor, p);
  }
  void u64s(std::string_view name, const std::vector<std::size_t>& v) {
    std::string p;
    for (std::size_t x : v) put<std::uint64_t>(p, x);
    field(name, Kind::U64s, p);
  }
  void f64s(std::string_view name, const std::vector<double>& v) {
    std::string p;
    for (double x : v) put(p, x);
    field(name, Kind::F64s, p);
  }
  void metrics(std::string_view name, const std::vector<std::pair<std::string, double>>& m) {
    std::string p;
    put<std::uint32_t>(p, static_cast<std::uint32_t>(m.size()));
    for (const auto& [k, v] : m) {
      put<std::uint32_t>(p, static_cast<std::uint32_t>(k.size()));
      p.append(k);
      put(p, v);
    }
    field(name, Kind::Metrics, p);
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

struct Field {
  Kind kind;
  std::string_view payload;
};

// Bounds-checked cursor; every failure names the field being read.
class Cursor {
 public:
  Cursor(std::string_view bytes, std::string field) : bytes_(bytes), field_(std::move(field)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }
  [[noreturn]] void fail(const std::string& why) const {
    throw IntegrityError("checkpoint field \"" + field_ + "\": " + why);
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated");
  }
  std::string_view bytes_;
  std::string field_;
  std::size_t pos_ = 0;
};

class Reader {
 public:
  explicit Reader(std::map<std::string, Field, std::less<>> fields) : fields_(std::move(fields)) {}

  std::uint64_t u64(const std::string& name) { return scalar<std::uint64_t>(name, Kind::U64); }
  double f64(const std::string& name) { return scalar<double>(name, Kind::F64); }
  std::string text(const std::string& name) { return std::string(find(name, Kind::Text)); }

  nc::Tensor tensor(const std::string& name) {
    Cursor c(find(name, Kind::Tensor), name);
    const auto rank = c.get<std::uint32_t>();
    if (rank < 1 || rank > 2) c.fail("rank " + std::to_string(rank));
    nc::Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(c.get<std::uint64_t>());
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0 || d > (std::size_t{1} << 32)) c.fail("bad extent");
      n *= d;
    }
    std::vector<double> v(n);
    for (double& x : v) x = c.get<double>();
    if (!c.done()) c.fail("trailing bytes");
    try {
      return nc::Tensor::from(std::move(shape), std::move(v));
    } catch (const Error& e) {
      c.fail(e.what());
    }
  }

  std::vector<std::size_t> u64s(const std::string& name) {
    auto p = find(name, Kind::U64s);
    Cursor c(p, name);
    if (p.size() % 8) c.fail("length not a multiple of 8");
    std::vector<std::size_t> v(p.size() / 8);
    for (auto& x : v) x = c.get<std::uint64_t>();
    return v;
  }

  std::vector<double> f64s(const std::string& name) {
    auto p = find(name, Kind::F64s);
    Cursor c(p, name);
    if (p.size() % 8) c.fail("length not a multiple of 8");
    std::vector<double> v(p.size() / 8);
    for (auto& x : v) x = c.get<double>();
    return v;
  }

  std::vector<std::pair<std::string, double>> metrics(const std::string& name) {
    Cursor c(find(name, Kind::Metrics), name);
    const auto n = c.get<std::uint32_t>();
    std::vector<std::pair<std::string, double>> out;
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto len = c.get<std::uint32_t>();
      std::string key(c.take(len));
      out.emplace_back(std::move(key), c.get<double>());
    }
    if (!c.done()) c.fail("trailing bytes");
    return out;
  }

  // Every field must have been consumed.
  void finish() const {
    for (const auto& [name, f] : fields_) {
      if (!used_.count(name)) throw IntegrityError("checkpoint field \"" + name + "\": unexpected field");
    }
  }

 private:
  std::string_view find(const std::string& name, Kind kind) {
    auto it = fields_.find(name);
    if (it == fields_.end()) throw IntegrityError("checkpoint field \"" + name + "\": missing");
    if (it->second.kind != kind) throw IntegrityError("checkpoint field \"" + name + "\": wrong kind");
    used_[name] = true;
    return it->second.payload;
  }
  template <class T>
  T scalar(const std::string& name, Kind kind) {
    Cursor c(find(name, kind), name);
    T v = c.get<T>();
    if (!c.done()) c.fail("trailing bytes");
    return v;
  }

  std::map<std::string, Field, std::less<>> fields_;
  std::map<std::string, bool> used_;
};

void write_head(Writer& w, const std::string& p, const model::DecompositionHead& h) {
  w.tensor(p + ".w", h.w);
  w.tensor(p + ".b", h.b);
  w.tensor(p + ".gamma", h.gamma);
  w.tensor(p + ".beta", h.beta);
  w.f64s(p + ".running_mean", h.running_mean);
  w.f64s(p + ".running_var", h.running_var);
  w.f64(p + ".dropout", h.dropout);
  w.f64(p + ".momentum", h.momentum);
  w.f64(p + ".eps", h.eps);
}

model::DecompositionHead read_head(Reader& r, const std::string& p) {
  model::DecompositionHead h;
  h.w = r.tensor(p + ".w");
  h.b = r.tensor(p + ".b");
  h.gamma = r.tensor(p + ".gamma");
  h.beta = r.tensor(p + ".beta");
  h.running_mean = r.f64s(p + ".running_mean");
  h.running_var = r.f64s(p + ".running_var");
  h.dropout = r.f64(p + ".dropout");
  h.momentum = r.f64(p + ".momentum");
  h.eps = r.f64(p + ".eps");
  return h;
}

void write_block(Writer& w, const std::string& p, const model::FusionBlock& b) {
  w.tensor(p + ".wq", b.wq);
  w.tensor(p + ".wk", b.wk);
  w.tensor(p + ".wv", b.wv);
  w.tensor(p + ".mlp.w1", b.mlp.w1);
  w.tensor(p + ".mlp.b1", b.mlp.b1);
  w.tensor(p + ".mlp.w2", b.mlp.w2);
  w.tensor(p + ".mlp.b2", b.mlp.b2);
}

model::FusionBlock read_block(Reader& r, const std::string& p) {
  model::FusionBlock b;
  b.wq = r.tensor(p + ".wq");
  b.wk = r.tensor(p + ".wk");
  b.wv = r.tensor(p + ".wv");
  b.mlp.w1 = r.tensor(p + ".mlp.w1");
  b.mlp.b1 = r.tensor(p + ".mlp.b1");
  b.mlp.w2 = r.tensor(p + ".mlp.w2");
  b.mlp.b2 = r.tensor(p + ".mlp.b2");
  return b;
}

void expect_shape(const nc::Tensor& t, nc::Shape shape, const std::string& name) {
  if (t.shape() != shape) {
    throw IntegrityError("checkpoint field \"" + name + "\": shape " + nc::shape_string(t.shape()) + ", expected " +
                         nc::shape_string(shape));
  }
}

// Shapes and bookkeeping must agree with each other before the state is
// handed out.
void check_state(const model::ModelState& s) {
  const auto& b = s.bank;
  const std::size_t d = b.attr_rows.cols();
  expect_shape(b.attr_rows, {b.attr_ids.size(), d}, "bank.attr_rows");
  expect_shape(b.obj_rows, {b.obj_ids.size(), d}, "bank.obj_rows");
  expect_shape(b.prefix_a, {b.m, d}, "bank.prefix_a");
  expect_shape(b.prefix_o, {b.m, d}, "bank.prefix_o");
  expect_shape(b.prefix_c, {b.m, d}, "bank.prefix_c");
  for (const auto& c : b.comp_index) {
    if (!b.attr_row(c.attr) || !b.obj_row(c.obj)) {
      throw IntegrityError("checkpoint field \"bank.comp_index\": composition uses an unknown primitive");
    }
  }
  const auto& p = s.partition;
  if (p.comp_total != b.comp_index.size() || p.comp_head > p.comp_total || p.attr_total != b.attr_ids.size() ||
      p.attr_head > p.attr_total || p.obj_total != b.obj_ids.size() || p.obj_head > p.obj_total) {
    throw IntegrityError("checkpoint field \"partition\": does not match the bank");
  }
  for (const auto& [name, h] : {std::pair<std::string, const model::DecompositionHead*>{"heads.attr", &s.params.heads.attr},
                                {"heads.obj", &s.params.heads.obj}}) {
    expect_shape(h->w, {d, d}, name + ".w");
    expect_shape(h->b, {d}, name + ".b");
    expect_shape(h->gamma, {d}, name + ".gamma");
    expect_shape(h->beta, {d}, name + ".beta");
    if (h->running_mean.size() != d) throw IntegrityError("checkpoint field \"" + name + ".running_mean\": length");
    if (h->running_var.size() != d) throw IntegrityError("checkpoint field \"" + name + ".running_var\": length");
  }
  for (const auto& [name, f] : {std::pair<std::string, const model::FusionBlock*>{"fusion.agnostic", &s.params.fusion.agnostic},
                                {"fusion.aware", &s.params.fusion.aware}}) {
    for (const auto& [suffix, t] : {std::pair<const char*, const nc::Tensor*>{".wq", &f->wq}, {".wk", &f->wk},
                                    {".wv", &f->wv}, {".mlp.w1", &f->mlp.w1}, {".mlp.w2", &f->mlp.w2}}) {
      expect_shape(*t, {d, d}, name + suffix);
    }
    expect_shape(f->mlp.b1, {d}, name + ".mlp.b1");
    expect_shape(f->mlp.b2, {d}, name + ".mlp.b2");
  }
  expect_shape(s.params.log_scale, {1}, "log_scale");
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes().append(kMagic);
  put<std::uint32_t>(w.bytes(), ckpt.version);

  const auto& s = ckpt.state;
  w.u64("session", ckpt.session);
  w.u64("world_seed", ckpt.world_seed);
  w.text("config", ckpt.config);
  w.metrics("metrics", ckpt.metrics);

  w.tensor("bank.attr_rows", s.bank.attr_rows);
  w.tensor("bank.obj_rows", s.bank.obj_rows);
  w.tensor("bank.prefix_a", s.bank.prefix_a);
  w.tensor("bank.prefix_o", s.bank.prefix_o);
  w.tensor("bank.prefix_c", s.bank.prefix_c);
  w.u64s("bank.attr_ids", s.bank.attr_ids);
  w.u64s("bank.obj_ids", s.bank.obj_ids);
  std::vector<std::size_t> comps;
  for (const auto& c : s.bank.comp_index) {
    comps.push_back(c.attr);
    comps.push_back(c.obj);
  }
  w.u64s("bank.comp_index", comps);
  w.u64("bank.m", s.bank.m);
  w.u64("bank.seed", s.bank.seed);

  const auto& p = s.partition;
  w.u64s("partition", {p.comp_head, p.comp_total, p.attr_head, p.attr_total, p.obj_head, p.obj_total});

  write_head(w, "heads.attr", s.params.heads.attr);
  write_head(w, "heads.obj", s.params.heads.obj);
  write_block(w, "fusion.agnostic", s.params.fusion.agnostic);
  write_block(w, "fusion.aware", s.params.fusion.aware);
  w.tensor("log_scale", s.params.log_scale);

  const auto& bytes = w.bytes();
  const std::uint64_t sum =
      fnv1a64(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
  put(w.bytes(), sum);
  return std::move(w.bytes());
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 4 + 8) throw IntegrityError("checkpoint field \"header\": truncated");
  if (bytes.substr(0, kMagic.size()) != kMagic) throw IntegrityError("checkpoint field \"header\": bad magic");
  const auto body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (fnv1a64(std::span(reinterpret_cast<const unsigned char*>(body.data()), body.size())) != stored) {
    throw IntegrityError("checkpoint field \"checksum\": mismatch (file truncated or corrupted)");
  }

  Cursor top(body.substr(kMagic.size()), "header");
  Checkpoint ck;
  ck.version = top.get<std::uint32_t>();
  if (ck.version != kCheckpointVersion) {
    throw IntegrityError("checkpoint field \"version\": unsupported version " + std::to_string(ck.version));
  }
  std::map<std::string, Field, std::less<>> fields;
  while (!top.done()) {
    const auto len = top.get<std::uint32_t>();
    std::string name(top.take(len));
    const auto kind = top.get<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(Kind::Metrics)) {
      throw IntegrityError("checkpoint field \"" + name + "\": unknown kind " + std::to_string(kind));
    }
    const auto size = top.get<std::uint64_t>();
    auto payload = top.take(size);
    if (!fields.emplace(name, Field{static_cast<Kind>(kind), payload}).second) {
      throw IntegrityError("checkpoint field \"" + name + "\": duplicated");
    }
  }

  Reader r(std::move(fields));
  ck.session = r.u64("session");
  ck.world_seed = r.u64("world_seed");
  ck.config = r.text("config");
  ck.metrics = r.metrics("metrics");

  auto& s = ck.state;
  s.bank.attr_rows = r.tensor("bank.attr_rows");
  s.bank.obj_rows = r.tensor("bank.obj_rows");
  s.bank.prefix_a = r.tensor("bank.prefix_a");
  s.bank.prefix_o = r.tensor("bank.prefix_o");
  s.bank.prefix_c = r.tensor("bank.prefix_c");
  s.bank.attr_ids = r.u64s("bank.attr_ids");
  s.bank.obj_ids = r.u64s("bank.obj_ids");
  const auto comps = r.u64s("bank.comp_index");
  if (comps.size() % 2) throw IntegrityError("checkpoint field \"bank.comp_index\": odd length");
  for (std::size_t i = 0; i < comps.size(); i += 2) s.bank.comp_index.push_back({comps[i], comps[i + 1]});
  s.bank.m = r.u64("bank.m");
  s.bank.seed = r.u64("bank.seed");
  s.bank.reindex();

  const auto part = r.u64s("partition");
  if (part.size() != 6) throw IntegrityError("checkpoint field \"partition\": expected 6 counts");
  s.partition = {part[0], part[1], part[2], part[3], part[4], part[5]};

  s.params.heads.attr = read_head(r, "heads.attr");
  s.params.heads.obj = read_head(r, "heads.obj");
  s.params.fusion.agnostic = read_block(r, "fusion.agnostic");
  s.params.fusion.aware = read_block(r, "fusion.aware");
  s.params.log_scale = r.tensor("log_scale");
  r.finish();
  check_state(s);
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IntegrityError("cannot open checkpoint \"" + path + "\" for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IntegrityError("failed writing checkpoint \"" + path + "\"");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace cczsl::continual
