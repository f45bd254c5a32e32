// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/cli/experiment.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "cczsl/common/errors.hpp"
#include "cczsl/world/table.hpp"
#include "json.hpp"

namespace cczsl::cli {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// One configurable leaf: how to read it from JSON and how to write it back.
struct Field {
  std::string section, key;
  std::function<void(ExperimentConfig&, const json&, const std::string&)> read;
  std::function<ojson(const ExperimentConfig&)> write;
};

[[noreturn]] void type_error(const std::string& path, const char* expected, const json& v) {
  throw ConfigError(path + ": expected " + expected + ", got " + v.dump());
}

template <class Get>
Field real(std::string section, std::string key, Get get) {
  return {section, key,
          [get](ExperimentConfig& c, const json& v, const std::string& path) {
            if (!v.is_number()) type_error(path, "a number", v);
            get(c) = v.get<double>();
          },
          [get](const ExperimentConfig& c) { return ojson(get(c)); }};
}

template <class Get>
Field count(std::string section, std::string key, Get get) {
  return {section, key,
          [get](ExperimentConfig& c, const json& v, const std::string& path) {
            if (v.is_number_unsigned()) {
              get(c) = v.get<std::uint64_t>();
            } else if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
              get(c) = static_cast<std::uint64_t>(v.get<std::int64_t>());
            } else {
              type_error(path, "a non-negative integer", v);
            }
          },
          [get](const ExperimentConfig& c) {
            return ojson(static_cast<std::uint64_t>(get(c)));
          }};
}

template <class Get>
Field flag(std::string section, std::string key, Get get) {
  return {section, key,
          [get](ExperimentConfig& c, const json& v, const std::string& path) {
            if (!v.is_boolean()) type_error(path, "true or false", v);
            get(c) = v.get<bool>();
          },
          [get](const ExperimentConfig& c) { return ojson(get(c)); }};
}

template <class Get>
Field text(std::string section, std::string key, Get get) {
  return {section, key,
          [get](ExperimentConfig& c, const json& v, const std::string& path) {
            if (!v.is_string()) type_error(path, "a string", v);
            get(c) = v.get<std::string>();
          },
          [get](const ExperimentConfig& c) { return ojson(get(c)); }};
}

// A string field whose value goes through a parser and printer.
template <class Parse, class Print>
Field choice(std::string section, std::string key, Parse parse, Print print) {
  return {section, key,
          [parse](ExperimentConfig& c, const json& v, const std::string& path) {
            if (!v.is_string()) type_error(path, "a string", v);
            try {
              parse(c, v.get<std::string>());
            } catch (const ConfigError& e) {
              throw ConfigError(path + ": " + e.what());
            }
          },
          [print](const ExperimentConfig& c) { return ojson(print(c)); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    using C = ExperimentConfig;
    std::vector<Field> f;
    f.push_back(choice(
        "split", "source",
        [](C& c, const std::string& s) {
          if (s == "table") c.split.kind = SplitSource::Kind::Table;
          else if (s == "generated") c.split.kind = SplitSource::Kind::Generated;
          else throw ConfigError("unknown split source \"" + s + "\" (expected table or generated)");
        },
        [](const C& c) { return c.split.kind == SplitSource::Kind::Table ? "table" : "generated"; }));
    f.push_back(text("split", "dataset", [](auto& c) -> auto& { return c.split.dataset; }));
    f.push_back(text("split", "table", [](auto& c) -> auto& { return c.split.table_path; }));
    f.push_back(count("split", "attrs", [](auto& c) -> auto& { return c.split.attrs; }));
    f.push_back(count("split", "objs", [](auto& c) -> auto& { return c.split.objs; }));
    f.push_back(count("split", "sessions", [](auto& c) -> auto& { return c.split.sessions; }));
    f.push_back(count("split", "seed", [](auto& c) -> auto& { return c.split.seed; }));
    f.push_back({"split", "seen_fraction",
                 [](C& c, const json& v, const std::string& path) {
                   if (!v.is_array() || v.empty()) type_error(path, "a non-empty array of numbers", v);
                   std::vector<double> out;
                   for (const auto& x : v) {
                     if (!x.is_number()) type_error(path, "a non-empty array of numbers", v);
                     out.push_back(x.get<double>());
                   }
                   c.split.seen_fraction = std::move(out);
                 },
                 [](const C& c) { return ojson(c.split.seen_fraction); }});

    f.push_back(count("world", "d", [](auto& c) -> auto& { return c.train.d; }));
    f.push_back(count("world", "L", [](auto& c) -> auto& { return c.train.L; }));
    f.push_back(count("world", "m", [](auto& c) -> auto& { return c.train.m; }));
    f.push_back(real("world", "sigma", [](auto& c) -> auto& { return c.train.sigma; }));

    f.push_back(count("train", "epochs", [](auto& c) -> auto& { return c.train.epochs; }));
    f.push_back(real("train", "lr", [](auto& c) -> auto& { return c.train.lr; }));
    f.push_back(count("train", "batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
    f.push_back(count("train", "seed", [](auto& c) -> auto& { return c.train.seed; }));
    f.push_back(choice(
        "train", "optimizer",
        [](C& c, const std::string& s) { c.train.optimizer.kind = continual::optimizer_from_string(s); },
        [](const C& c) { return continual::to_string(c.train.optimizer.kind); }));
    f.push_back(real("train", "beta1", [](auto& c) -> auto& { return c.train.optimizer.beta1; }));
    f.push_back(real("train", "beta2", [](auto& c) -> auto& { return c.train.optimizer.beta2; }));
    f.push_back(real("train", "eps", [](auto& c) -> auto& { return c.train.optimizer.eps; }));
    f.push_back(count("train", "samples_per_seen", [](auto& c) -> auto& { return c.train.samples_per_seen; }));
    f.push_back(count("train", "test_samples", [](auto& c) -> auto& { return c.train.test_samples; }));
    f.push_back(real("train", "dropout", [](auto& c) -> auto& { return c.train.dropout; }));
    f.push_back(count("train", "max_teachers", [](auto& c) -> auto& { return c.train.max_teachers; }));

    f.push_back(real("loss", "alpha_a", [](auto& c) -> auto& { return c.train.loss.alpha_a; }));
    f.push_back(real("loss", "alpha_o", [](auto& c) -> auto& { return c.train.loss.alpha_o; }));
    f.push_back(real("loss", "alpha_c", [](auto& c) -> auto& { return c.train.loss.alpha_c; }));
    f.push_back(real("loss", "lambda_ce", [](auto& c) -> auto& { return c.train.loss.lambda_ce; }));
    f.push_back(real("loss", "lambda_kd", [](auto& c) -> auto& { return c.train.loss.lambda_kd; }));
    f.push_back(real("loss", "lambda_cal", [](auto& c) -> auto& { return c.train.loss.lambda_cal; }));
    f.push_back(real("loss", "lambda_opl", [](auto& c) -> auto& { return c.train.loss.lambda_opl; }));
    f.push_back(real("loss", "lambda_idl", [](auto& c) -> auto& { return c.train.loss.lambda_idl; }));
    f.push_back(real("loss", "branch_a", [](auto& c) -> auto& { return c.train.loss.branch_a; }));
    f.push_back(real("loss", "branch_o", [](auto& c) -> auto& { return c.train.loss.branch_o; }));
    f.push_back(real("loss", "branch_c", [](auto& c) -> auto& { return c.train.loss.branch_c; }));
    f.push_back(real("loss", "tau_kd", [](auto& c) -> auto& { return c.train.loss.tau_kd; }));
    f.push_back(real("loss", "recency_gamma", [](auto& c) -> auto& { return c.train.loss.recency_gamma; }));

    f.push_back(real("inference", "lambda_c", [](auto& c) -> auto& { return c.train.inference.lambda_c; }));
    f.push_back(real("inference", "lambda_a", [](auto& c) -> auto& { return c.train.inference.lambda_a; }));
    f.push_back(real("inference", "lambda_o", [](auto& c) -> auto& { return c.train.inference.lambda_o; }));
    f.push_back(real("inference", "tau", [](auto& c) -> auto& { return c.train.model.tau; }));

    f.push_back(flag("ablation", "cskd", [](auto& c) -> auto& { return c.ablation.cskd; }));
    f.push_back(flag("ablation", "cal", [](auto& c) -> auto& { return c.ablation.cal; }));
    f.push_back(flag("ablation", "opl", [](auto& c) -> auto& { return c.ablation.opl; }));
    f.push_back(flag("ablation", "idl", [](auto& c) -> auto& { return c.ablation.idl; }));
    f.push_back(choice(
        "ablation", "comp_fusion",
        [](C& c, const std::string& s) { c.ablation.comp_fusion = model::comp_fusion_from_string(s); },
        [](const C& c) { return model::to_string(c.ablation.comp_fusion); }));

    f.push_back(text("output", "dir", [](auto& c) -> auto& { return c.output.dir; }));
    f.push_back(flag("output", "dumps", [](auto& c) -> auto& { return c.output.dumps; }));
    f.push_back(flag("output", "checkpoints", [](auto& c) -> auto& { return c.output.checkpoints; }));
    return f;
  }();
  return all;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

bool known_section(const std::string& name) {
  for (const auto& f : fields()) {
    if (f.section == name) return true;
  }
  return false;
}

}  // namespace

continual::TrainConfig ExperimentConfig::resolved() const {
  continual::TrainConfig t = train;
  if (!ablation.cskd) t.loss.lambda_kd = 0.0;
  if (!ablation.cal) t.loss.lambda_cal = 0.0;
  if (!ablation.opl) t.loss.lambda_opl = 0.0;
  if (!ablation.idl) t.loss.lambda_idl = 0.0;
  t.model.comp_fusion = ablation.comp_fusion;
  t.validate();
  return t;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json doc;
  if (json_text.find_first_not_of(" \t\r\n") == std::string::npos) {
    doc = json::object();
  } else {
    try {
      doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  if (doc.contains("manifest_version")) {
    if (!doc.contains("config") || !doc["config"].is_object()) throw ConfigError("manifest has no config object");
    doc = doc["config"];
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : doc.items()) {
    if (!known_section(section)) throw ConfigError("unknown config key \"" + section + "\"");
    if (!body.is_object()) type_error(section, "an object", body);
    for (const auto& [key, value] : body.items()) {
      const std::string path = section + "." + key;
      const Field* f = find_field(section, key);
      if (!f) throw ConfigError("unknown config key \"" + path + "\"");
      f->read(cfg, value, path);
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override \"" + item + "\" is not key=value");
    const std::string key = item.substr(0, eq), raw = item.substr(eq + 1);
    const Field* f = nullptr;
    const auto dot = key.find('.');
    if (dot != std::string::npos) {
      f = find_field(key.substr(0, dot), key.substr(dot + 1));
    } else {
      std::vector<const Field*> hits;
      for (const auto& cand : fields()) {
        if (cand.key == key) hits.push_back(&cand);
      }
      if (hits.size() > 1) {
        std::string names;
        for (const auto* h : hits) names += (names.empty() ? "" : ", ") + h->section + "." + h->key;
        throw ConfigError("override key \"" + key + "\" is ambiguous (" + names + ")");
      }
      if (!hits.empty()) f = hits.front();
    }
    if (!f) throw ConfigError("unknown config key \"" + key + "\"");
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    f->read(config, value, f->section + "." + f->key);
  }
}

std::string config_to_json(const ExperimentConfig& config, int indent) {
  ojson doc = ojson::object();
  for (const auto& f : fields()) doc[f.section][f.key] = f.write(config);
  return doc.dump(indent);
}

void set_split_source(ExperimentConfig& config, const std::string& spec) {
  if (spec == "generated") {
    config.split.kind = SplitSource::Kind::Generated;
    return;
  }
  if (spec.rfind("table:", 0) == 0) {
    std::string rest = spec.substr(6);
    const auto at = rest.find('@');
    config.split.kind = SplitSource::Kind::Table;
    config.split.dataset = rest.substr(0, at);
    config.split.table_path = at == std::string::npos ? "" : rest.substr(at + 1);
    if (config.split.dataset.empty()) throw ConfigError("--splits table: needs a dataset name");
    return;
  }
  throw ConfigError("unknown split source \"" + spec + "\" (expected table:<dataset>[@path] or generated)");
}

LoadedSplits load_splits(const SplitSource& source) {
  LoadedSplits out;
  if (source.kind == SplitSource::Kind::Table) {
    const std::string path = source.table_path.empty() ? world::bundled_table_path() : source.table_path;
    auto t = world::load_table_splits(path, source.dataset);
    out.space = std::move(t.space);
    out.sessions = std::move(t.sessions);
    out.description = "table:" + source.dataset;
  } else {
    out.space = world::grid_space(source.attrs, source.objs);
    out.sessions = world::split_constrained(out.space, source.sessions, source.seed, source.seen_fraction);
    out.description = "generated:" + std::to_string(source.attrs) + "x" + std::to_string(source.objs) + "/" +
                      std::to_string(source.sessions);
  }
  return out;
}

}  // namespace cczsl::cli
