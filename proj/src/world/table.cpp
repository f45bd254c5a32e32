// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/world/table.hpp"

#include <fstream>
#include <unordered_map>

#include "cczsl/common/errors.hpp"
#include "json.hpp"

namespace cczsl::world {
namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

const json& field(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw SchemaError(where + ": missing \"" + key + "\"");
  return obj.at(key);
}

std::size_t count_field(const json& counts, const std::string& key, const std::string& where) {
  const json& v = field(counts, key, where);
  if (!v.is_number_unsigned()) throw SchemaError(where + "." + key + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

std::vector<std::string> names(const json& v, const std::string& where) {
  if (!v.is_array()) throw SchemaError(where + ": expected a list of names");
  std::vector<std::string> out;
  for (const json& e : v) {
    if (!e.is_string()) throw SchemaError(where + ": expected a list of names");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

std::string bundled_table_path() { return std::string(CCZSL_DATA_DIR) + "/table_splits.json"; }

TableSplits load_table_splits(const std::string& path, const std::string& dataset) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open split file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  const json& version = field(doc, "format_version", path);
  if (!version.is_number_integer() || version.get<int>() != kFormatVersion) {
    throw SchemaError(path + ": unsupported format_version " + version.dump());
  }
  const json& datasets = field(doc, "datasets", path);
  const json& ds = field(datasets, dataset, path + ".datasets");
  const json& sessions = field(ds, "sessions", dataset);
  if (!sessions.is_array() || sessions.empty()) throw SchemaError(dataset + ".sessions: expected a non-empty list");

  std::vector<std::string> attr_names, obj_names;
  std::unordered_map<std::string, std::size_t> attr_of, obj_of;
  std::vector<Composition> comps;
  std::vector<SessionSpec> specs;

  for (std::size_t s = 0; s < sessions.size(); ++s) {
    const std::string where = dataset + ".sessions[" + std::to_string(s) + "]";
    const json& sj = sessions[s];
    const json& counts = field(sj, "counts", where);
    SessionSpec spec;
    spec.index = s;

    auto introduce = [&](const char* key, std::vector<std::string>& all, std::unordered_map<std::string, std::size_t>& lookup,
                         std::vector<std::size_t>& dst) {
      auto list = names(field(sj, key, where), where + "." + key);
      const std::size_t declared = count_field(counts, key, where + ".counts");
      if (list.size() != declared) {
        throw SchemaError(where + "." + key + ": declared " + std::to_string(declared) + " but listed " +
                          std::to_string(list.size()));
      }
      for (auto& n : list) {
        if (!lookup.emplace(n, all.size()).second) {
          throw SchemaError(where + "." + key + ": \"" + n + "\" was already introduced");
        }
        dst.push_back(all.size());
        all.push_back(std::move(n));
      }
    };
    introduce("attrs", attr_names, attr_of, spec.attrs);
    introduce("objs", obj_names, obj_of, spec.objs);

    auto pairs = [&](const char* key, std::vector<Composition>& dst) {
      const json& list = field(sj, key, where);
      if (!list.is_array()) throw SchemaError(where + "." + key + ": expected a list of pairs");
      const std::size_t declared = count_field(counts, key, where + ".counts");
      if (list.size() != declared) {
        throw SchemaError(where + "." + key + ": declared " + std::to_string(declared) + " but listed " +
                          std::to_string(list.size()));
      }
      for (const json& p : list) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string()) {
          throw SchemaError(where + "." + key + ": expected [attr, obj] name pairs");
        }
        auto a = attr_of.find(p[0].get<std::string>());
        auto o = obj_of.find(p[1].get<std::string>());
        if (a == attr_of.end() || o == obj_of.end()) {
          throw SchemaError(where + "." + key + ": pair " + p.dump() + " uses a primitive not introduced yet");
        }
        Composition c{a->second, o->second};
        dst.push_back(c);
        comps.push_back(c);
      }
    };
    pairs("seen", spec.seen);
    pairs("val", spec.val);
    pairs("unseen", spec.unseen);
    specs.push_back(std::move(spec));
  }

  TableSplits out;
  out.dataset = dataset;
  try {
    out.space = build_space(std::move(attr_names), std::move(obj_names), std::move(comps));
  } catch (const ValidationError& e) {
    throw SchemaError(dataset + ": " + e.what());
  }
  out.sessions = std::move(specs);
  return out;
}

}  // namespace cczsl::world
