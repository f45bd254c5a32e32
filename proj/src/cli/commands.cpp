// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/cli/commands.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/log.hpp"
#include "cczsl/common/seeding.hpp"
#include "cczsl/continual/checkpoint.hpp"
#include "cczsl/eval/dump.hpp"
#include "json.hpp"

namespace cczsl::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

const char* const kArtifacts[] = {"manifest.json", "summary.json", "forgetting.tsv", "metrics",
                                  "curves",        "dumps",        "checkpoints",    kIncompleteMarker};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write \"" + path.string() + "\"");
  out << text;
  if (!out) throw ConfigError("failed writing \"" + path.string() + "\"");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IncomparableError("cannot read \"" + path.string() + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void prepare_dir(const fs::path& dir, bool force) {
  fs::create_directories(dir);
  for (const char* name : kArtifacts) {
    if (!fs::exists(dir / name)) continue;
    if (!force) {
      throw ConfigError("output directory \"" + dir.string() + "\" already holds run artifacts (" + name +
                        "); pass --force to replace them");
    }
    fs::remove_all(dir / name);
  }
}

ojson report_obj(const eval::MetricsReport& r) {
  ojson j;
  j["session"] = r.session;
  j["scope"] = eval::to_string(r.scope);
  if (r.scope == eval::Scope::Slice) j["slice"] = r.slice;
  j["records"] = r.records;
  j["auc"] = r.auc;
  j["best_seen"] = r.best_seen;
  j["best_unseen"] = r.best_unseen;
  j["hm"] = r.hm;
  j["attr_acc"] = r.attr_acc;
  j["obj_acc"] = r.obj_acc;
  j["comp_acc"] = r.comp_acc;
  j["unbiased_seen"] = r.unbiased_seen;
  j["unbiased_unseen"] = r.unbiased_unseen;
  return j;
}

std::string curve_tsv(const eval::BiasSweepCurve& curve) {
  std::string out = "bias\tseen_acc\tunseen_acc\n";
  for (const auto& p : curve.points) out += num(p.bias) + "\t" + num(p.seen_acc) + "\t" + num(p.unseen_acc) + "\n";
  return out;
}

ojson manifest(const ExperimentConfig& config, const continual::TrainConfig& train, const LoadedSplits& splits) {
  ojson m;
  m["manifest_version"] = kManifestVersion;
  m["code_version"] = kCodeVersion;
  m["checkpoint_version"] = continual::kCheckpointVersion;
  m["config"] = ojson::parse(config_to_json(config));
  m["effective_loss"] = {{"lambda_ce", train.loss.lambda_ce},   {"lambda_kd", train.loss.lambda_kd},
                         {"lambda_cal", train.loss.lambda_cal}, {"lambda_opl", train.loss.lambda_opl},
                         {"lambda_idl", train.loss.lambda_idl}};
  m["seeds"] = {{"train", train.seed},
                {"world", train.world_seed()},
                {"bank", derive_seed(train.seed, "bank")},
                {"params", derive_seed(train.seed, "params")}};
  ojson sessions = ojson::array();
  for (const auto& s : splits.sessions) {
    sessions.push_back({{"index", s.index},
                        {"attrs", s.attrs.size()},
                        {"objs", s.objs.size()},
                        {"seen", s.seen.size()},
                        {"val", s.val.size()},
                        {"unseen", s.unseen.size()}});
  }
  m["splits"] = {{"source", splits.description},
                 {"digest", hex64(world::splits_digest(splits.space, splits.sessions))},
                 {"sessions", sessions}};
  return m;
}

ojson summary(const continual::ProtocolResult& result) {
  ojson s;
  s["splits_digest"] = hex64(result.splits_digest);
  ojson sessions = ojson::array();
  for (const auto& o : result.sessions) {
    ojson e;
    e["session"] = o.evaluation.session;
    e["final_loss"] = o.epoch_loss.empty() ? 0.0 : o.epoch_loss.back();
    e["czs"] = report_obj(o.evaluation.czs);
    e["zs"] = report_obj(o.evaluation.zs);
    ojson slices = ojson::array();
    for (const auto& r : o.evaluation.slices) slices.push_back(report_obj(r));
    e["slices"] = slices;
    sessions.push_back(e);
  }
  s["sessions"] = sessions;
  const auto& f = result.forgetting;
  ojson auc = ojson::array();
  for (const auto& row : f.auc) {
    ojson r = ojson::array();
    for (const auto& v : row) r.push_back(v ? ojson(*v) : ojson(nullptr));
    auc.push_back(r);
  }
  s["forgetting"] = {{"lower_is_better", eval::ForgettingMatrix::lower_is_better},
                     {"f_auc", f.f_auc},
                     {"per_set", f.per_set},
                     {"auc", auc}};
  return s;
}

std::string forgetting_tsv(const eval::ForgettingMatrix& f) {
  std::string out = "slice";
  for (std::size_t t = 0; t < f.auc.size(); ++t) out += "\tafter_session_" + std::to_string(t);
  out += "\tforgetting\n";
  for (std::size_t i = 0; i < f.auc.size(); ++i) {
    out += std::to_string(i);
    for (const auto& v : f.auc[i]) out += "\t" + (v ? num(*v) : std::string("-"));
    out += "\t" + num(f.per_set[i]) + "\n";
  }
  out += "f_auc\t" + num(f.f_auc) + "\n";
  return out;
}

struct RunSummary {
  std::string digest;
  json doc;
};

RunSummary load_summary(const std::string& dir) {
  const fs::path p(dir);
  if (fs::exists(p / kIncompleteMarker)) throw IncomparableError("run \"" + dir + "\" is incomplete");
  RunSummary s;
  try {
    s.doc = json::parse(read_file(p / "summary.json"));
  } catch (const json::parse_error& e) {
    throw IncomparableError("run \"" + dir + "\": summary.json does not parse: " + e.what());
  }
  if (!s.doc.contains("splits_digest") || !s.doc.contains("sessions")) {
    throw IncomparableError("run \"" + dir + "\": summary.json lacks sessions or split digest");
  }
  if (!s.doc.contains("forgetting") || !s.doc["forgetting"].contains("f_auc")) {
    throw IncomparableError("run \"" + dir + "\" has no forgetting matrix");
  }
  s.digest = s.doc["splits_digest"].get<std::string>();
  return s;
}

MetricDelta delta(std::string name, double a, double b, bool lower_is_better) {
  return {std::move(name), a, b, a - b, lower_is_better};
}

}  // namespace

std::string report_json(const eval::MetricsReport& report) { return report_obj(report).dump(2); }

continual::ProtocolResult run_experiment(const ExperimentConfig& config, bool force) {
  const auto train = config.resolved();
  const auto splits = load_splits(config.split);
  const fs::path dir(config.output.dir);
  prepare_dir(dir, force);
  write_file(dir / kIncompleteMarker, "run in progress\n");
  try {
    write_file(dir / "manifest.json", manifest(config, train, splits).dump(2) + "\n");
    fs::create_directories(dir / "metrics");
    fs::create_directories(dir / "curves");
    if (config.output.dumps) fs::create_directories(dir / "dumps");
    if (config.output.checkpoints) fs::create_directories(dir / "checkpoints");
    const std::string config_echo = config_to_json(config, -1);

    auto hook = [&](const continual::SessionOutcome& o) {
      const auto& ev = o.evaluation;
      const std::string stem = "session_" + std::to_string(ev.session);
      ojson m;
      m["czs"] = report_obj(ev.czs);
      m["zs"] = report_obj(ev.zs);
      ojson slices = ojson::array();
      for (const auto& r : ev.slices) slices.push_back(report_obj(r));
      m["slices"] = slices;
      write_file(dir / "metrics" / (stem + ".json"), m.dump(2) + "\n");
      write_file(dir / "curves" / (stem + ".tsv"), curve_tsv(ev.czs_curve));
      if (config.output.dumps) {
        std::ofstream out(dir / "dumps" / (stem + ".txt"), std::ios::binary | std::ios::trunc);
        eval::write_dump(out, eval::czs_accumulate(ev.records));
        if (!out) throw ConfigError("failed writing prediction dump for " + stem);
      }
      if (config.output.checkpoints) {
        continual::Checkpoint ck;
        ck.session = ev.session;
        ck.state = o.state;
        ck.world_seed = train.world_seed();
        ck.config = config_echo;
        ck.metrics = {{"czs.auc", ev.czs.auc},       {"czs.hm", ev.czs.hm},
                      {"czs.best_seen", ev.czs.best_seen}, {"czs.best_unseen", ev.czs.best_unseen},
                      {"czs.attr_acc", ev.czs.attr_acc}, {"czs.obj_acc", ev.czs.obj_acc},
                      {"czs.comp_acc", ev.czs.comp_acc}, {"zs.auc", ev.zs.auc}};
        continual::save_checkpoint(ck, (dir / "checkpoints" / (stem + ".ckpt")).string());
      }
      log::notice(stem + ": accumulated AUC " + num(ev.czs.auc) + ", HM " + num(ev.czs.hm));
    };

    auto result = continual::run_protocol(train, splits.space, splits.sessions, hook);
    write_file(dir / "summary.json", summary(result).dump(2) + "\n");
    write_file(dir / "forgetting.tsv", forgetting_tsv(result.forgetting));
    fs::remove(dir / kIncompleteMarker);
    log::notice("F_AUC " + num(result.forgetting.f_auc) + "; artifacts in " + dir.string());
    return result;
  } catch (const std::exception& e) {
    write_file(dir / kIncompleteMarker, std::string("run failed: ") + e.what() + "\n");
    throw;
  }
}

CompareReport compare_runs(const std::string& dir_a, const std::string& dir_b) {
  const auto a = load_summary(dir_a);
  const auto b = load_summary(dir_b);
  if (a.digest != b.digest) {
    throw IncomparableError("split digests differ (" + a.digest + " vs " + b.digest + ")");
  }
  const auto& sa = a.doc["sessions"];
  const auto& sb = b.doc["sessions"];
  if (sa.size() != sb.size()) throw IncomparableError("runs cover different numbers of sessions");

  CompareReport report;
  static const char* const czs_keys[] = {"auc", "hm", "best_seen", "best_unseen", "attr_acc", "obj_acc", "comp_acc"};
  for (std::size_t t = 0; t < sa.size(); ++t) {
    SessionDelta sd;
    sd.session = t;
    for (const char* k : czs_keys) {
      sd.metrics.push_back(delta(std::string("czs.") + k, sa[t]["czs"][k].get<double>(),
                                 sb[t]["czs"][k].get<double>(), false));
    }
    sd.metrics.push_back(delta("zs.auc", sa[t]["zs"]["auc"].get<double>(), sb[t]["zs"]["auc"].get<double>(), false));
    report.sessions.push_back(std::move(sd));
  }
  report.f_auc = delta("f_auc", a.doc["forgetting"]["f_auc"].get<double>(),
                       b.doc["forgetting"]["f_auc"].get<double>(), eval::ForgettingMatrix::lower_is_better);
  return report;
}

void print_compare(std::ostream& out, const CompareReport& report, const std::string& a, const std::string& b) {
  out << "a = " << a << "\nb = " << b << "\ndelta = a - b\n";
  char line[160];
  auto row = [&](const std::string& where, const MetricDelta& m) {
    const char* verdict = m.delta == 0.0 ? "same" : (m.a_better() ? "a better" : "b better");
    std::snprintf(line, sizeof line, "%-10s %-16s %12.6f %12.6f %+13.6f  %s%s\n", where.c_str(), m.name.c_str(), m.a,
                  m.b, m.delta, verdict, m.lower_is_better ? " (lower is better)" : "");
    out << line;
  };
  for (const auto& s : report.sessions) {
    for (const auto& m : s.metrics) row("session " + std::to_string(s.session), m);
  }
  row("overall", report.f_auc);
}

std::vector<world::SplitViolation> validate_and_print(const LoadedSplits& splits, std::ostream& out) {
  out << "splits " << splits.description << ": " << splits.space.attributes().size() << " attributes, "
      << splits.space.objects().size() << " objects, " << splits.sessions.size() << " sessions\n";
  for (const auto& s : splits.sessions) {
    out << "session " << s.index << ": " << s.attrs.size() << " new attrs, " << s.objs.size() << " new objs, "
        << s.seen.size() << " seen, " << s.val.size() << " val, " << s.unseen.size() << " unseen\n";
  }
  auto violations = world::validate_splits(splits.space, splits.sessions);
  for (const auto& v : violations) out << "violation: " << v.detail << "\n";
  out << (violations.empty() ? "valid\n" : "invalid\n");
  return violations;
}

std::string eval_dump(const std::string& path, std::size_t session, bool with_curve) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot read prediction dump \"" + path + "\"");
  const auto records = eval::read_dump(in);
  ojson j = report_obj(eval::evaluate(records, session, eval::Scope::CZSEval));
  if (with_curve) {
    ojson pts = ojson::array();
    for (const auto& p : eval::bias_sweep(records).points) {
      // JSON has no infinities; the sweep's end points are written as strings.
      const ojson bias = std::isfinite(p.bias) ? ojson(p.bias) : ojson(p.bias > 0 ? "inf" : "-inf");
      pts.push_back(ojson::array({bias, p.seen_acc, p.unseen_acc}));
    }
    j["curve"] = pts;
  }
  return j.dump(2);
}

}  // namespace cczsl::cli
