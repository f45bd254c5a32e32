// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

// Regenerates data/table_splits.json: synthetic concept names laid out with
// the published per-session counts of UT-Zappos and C-GQA.
//
//   make_table_splits <output.json>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace {

struct Counts {
  std::size_t attrs, objs, seen, val, unseen;
};

std::string label(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
  return buf;
}

nlohmann::json make_dataset(const std::string& tag, const std::vector<Counts>& sessions, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> attrs, objs;
  std::vector<std::size_t> attr_intro, obj_intro;
  std::set<std::pair<std::size_t, std::size_t>> used;
  nlohmann::json out = {{"sessions", nlohmann::json::array()}};

  for (std::size_t s = 0; s < sessions.size(); ++s) {
    const Counts& c = sessions[s];
    const std::size_t a0 = attrs.size(), o0 = objs.size();
    for (std::size_t i = 0; i < c.attrs; ++i) attrs.push_back(label((tag + "_attr_").c_str(), a0 + i));
    for (std::size_t i = 0; i < c.objs; ++i) objs.push_back(label((tag + "_obj_").c_str(), o0 + i));

    // Pairs that involve at least one primitive introduced now.
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t a = 0; a < attrs.size(); ++a)
      for (std::size_t o = 0; o < objs.size(); ++o)
        if ((a >= a0 || o >= o0) && !used.count({a, o})) pool.push_back({a, o});
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t need = c.seen + c.val + c.unseen;
    if (pool.size() < need) {
      std::cerr << tag << " session " << s << ": only " << pool.size() << " pairs available\n";
      std::exit(1);
    }

    std::vector<bool> taken(pool.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> seen;
    std::set<std::size_t> cov_a, cov_o;
    for (std::size_t i = 0; i < pool.size() && seen.size() < c.seen; ++i) {
      auto [a, o] = pool[i];
      if ((a >= a0 && !cov_a.count(a)) || (o >= o0 && !cov_o.count(o))) {
        taken[i] = true;
        seen.push_back(pool[i]);
        cov_a.insert(a);
        cov_o.insert(o);
      }
    }
    const auto new_a = std::count_if(cov_a.begin(), cov_a.end(), [&](std::size_t a) { return a >= a0; });
    const auto new_o = std::count_if(cov_o.begin(), cov_o.end(), [&](std::size_t o) { return o >= o0; });
    if (static_cast<std::size_t>(new_a) != c.attrs || static_cast<std::size_t>(new_o) != c.objs) {
      std::cerr << tag << " session " << s << ": seen pairs cannot cover every new primitive\n";
      std::exit(1);
    }
    std::vector<std::pair<std::size_t, std::size_t>> rest;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (!taken[i]) rest.push_back(pool[i]);
    std::size_t next = 0;
    while (seen.size() < c.seen) seen.push_back(rest[next++]);
    std::vector<std::pair<std::size_t, std::size_t>> val(rest.begin() + next, rest.begin() + next + c.val);
    next += c.val;
    std::vector<std::pair<std::size_t, std::size_t>> unseen(rest.begin() + next, rest.begin() + next + c.unseen);

    auto emit = [&](std::vector<std::pair<std::size_t, std::size_t>> list) {
      std::sort(list.begin(), list.end());
      nlohmann::json arr = nlohmann::json::array();
      for (auto [a, o] : list) {
        used.insert({a, o});
        arr.push_back({attrs[a], objs[o]});
      }
      return arr;
    };
    nlohmann::json sj;
    sj["counts"] = {{"attrs", c.attrs}, {"objs", c.objs}, {"seen", c.seen}, {"val", c.val}, {"unseen", c.unseen}};
    sj["attrs"] = std::vector<std::string>(attrs.begin() + a0, attrs.end());
    sj["objs"] = std::vector<std::string>(objs.begin() + o0, objs.end());
    sj["seen"] = emit(seen);
    sj["val"] = emit(val);
    sj["unseen"] = emit(unseen);
    out["sessions"].push_back(std::move(sj));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_table_splits <output.json>\n";
    return 2;
  }
  const std::vector<Counts> utzappos = {{8, 6, 24, 7, 9}, {4, 3, 27, 10, 14}, {4, 3, 32, 13, 13}};
  const std::vector<Counts> cgqa = {{233, 363, 2392, 958, 730}, {35, 58, 491, 168, 172},
                                    {32, 67, 772, 358, 265},    {36, 64, 836, 366, 275},
                                    {39, 62, 562, 225, 166},    {38, 60, 539, 217, 203}};
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["datasets"]["utzappos"] = make_dataset("zap", utzappos, 20240601);
  doc["datasets"]["cgqa"] = make_dataset("cgqa", cgqa, 20240602);
  std::ofstream out(argv[1]);
  out << doc.dump(1) << '\n';
  return out ? 0 : 1;
}
