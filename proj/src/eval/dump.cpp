// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/eval/dump.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "cczsl/common/errors.hpp"

namespace cczsl::eval {

namespace {

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

[[noreturn]] void bad(std::size_t line, const std::string& what) {
  throw SchemaError("prediction dump line " + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_int(const std::string& tok, std::size_t line, int base = 10) {
  T v{};
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, base);
  if (ec != std::errc() || p != tok.data() + tok.size()) bad(line, "expected an integer, got \"" + tok + "\"");
  return v;
}

double parse_double(const std::string& tok, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) bad(line, "expected a number, got \"" + tok + "\"");
  return v;
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

}  // namespace

void write_dump(std::ostream& out, std::span<const PredictionRecord> records) {
  out << "cczsl-predictions 1\n";
  std::map<std::uint64_t, bool> written;
  for (const auto& r : records) {
    r.truth_position();
    const std::uint64_t d = r.candidates->digest();
    if (!written[d]) {
      written[d] = true;
      const auto& cs = *r.candidates;
      out << "candidates " << hex(d) << ' ' << cs.comps.size() << '\n';
      for (std::size_t i = 0; i < cs.comps.size(); ++i) {
        out << "c " << cs.comps[i].attr << ' ' << cs.comps[i].obj << ' ' << (cs.seen[i] ? 1 : 0) << '\n';
      }
    }
    out << "r " << r.sample_id << ' ' << r.truth.attr << ' ' << r.truth.obj << ' ' << hex(d) << ' ' << r.attr_pred
        << ' ' << r.obj_pred;
    for (double s : r.scores) out << ' ' << number(s);
    out << '\n';
  }
}

std::vector<PredictionRecord> read_dump(std::istream& in) {
  std::string line;
  std::size_t no = 0;
  if (!std::getline(in, line) || (++no, tokens(line) != std::vector<std::string>{"cczsl-predictions", "1"})) {
    throw SchemaError("prediction dump: missing or unsupported header");
  }
  std::map<std::uint64_t, std::shared_ptr<const CandidateSet>> blocks;
  std::vector<PredictionRecord> out;
  while (std::getline(in, line)) {
    ++no;
    auto tok = tokens(line);
    if (tok.empty()) continue;
    if (tok[0] == "candidates") {
      if (tok.size() != 3) bad(no, "candidates needs a digest and a count");
      const auto digest = parse_int<std::uint64_t>(tok[1], no, 16);
      const auto n = parse_int<std::size_t>(tok[2], no);
      CandidateSet cs;
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) bad(no, "candidate block ends early");
        ++no;
        auto c = tokens(line);
        if (c.size() != 4 || c[0] != "c") bad(no, "expected a candidate line");
        cs.comps.push_back({parse_int<std::size_t>(c[1], no), parse_int<std::size_t>(c[2], no)});
        const auto seen = parse_int<int>(c[3], no);
        if (seen != 0 && seen != 1) bad(no, "seen flag must be 0 or 1");
        cs.seen.push_back(seen == 1);
      }
      if (cs.comps.empty()) bad(no, "empty candidate block");
      if (cs.digest() != digest) bad(no, "candidate block does not match its digest");
      blocks[digest] = std::make_shared<const CandidateSet>(std::move(cs));
    } else if (tok[0] == "r") {
      if (tok.size() < 7) bad(no, "record line is too short");
      PredictionRecord r;
      r.sample_id = parse_int<std::uint64_t>(tok[1], no);
      r.truth = {parse_int<std::size_t>(tok[2], no), parse_int<std::size_t>(tok[3], no)};
      auto it = blocks.find(parse_int<std::uint64_t>(tok[4], no, 16));
      if (it == blocks.end()) bad(no, "record refers to an unknown candidate block");
      r.candidates = it->second;
      r.attr_pred = parse_int<std::size_t>(tok[5], no);
      r.obj_pred = parse_int<std::size_t>(tok[6], no);
      for (std::size_t i = 7; i < tok.size(); ++i) r.scores.push_back(parse_double(tok[i], no));
      try {
        r.truth_position();
      } catch (const ConsistencyError& e) {
        bad(no, e.what());
      }
      out.push_back(std::move(r));
    } else {
      bad(no, "unknown line kind \"" + tok[0] + "\"");
    }
  }
  return out;
}

}  // namespace cczsl::eval
