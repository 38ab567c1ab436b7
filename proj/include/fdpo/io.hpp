#pragma once

// Line-delimited JSON wire formats.
//
// Field order inside each line is fixed (ordered_json) so files written from
// the same records are byte-identical.

#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdpo/core.hpp"

namespace fdpo {

using ojson = nlohmann::ordered_json;

namespace detail {

inline const ojson& require(const ojson& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(Errc::Schema, std::string("missing field '") + key + "'");
  return *it;
}

inline std::string require_string(const ojson& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw Error(Errc::Schema, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline int require_label(const ojson& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_number_integer() || (v.get<long long>() != 0 && v.get<long long>() != 1))
    throw Error(Errc::Schema, std::string("field '") + key + "' must be 0 or 1");
  return v.get<int>();
}

inline bool require_bool(const ojson& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_boolean()) throw Error(Errc::Schema, std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

inline void reject_unknown(const ojson& j, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error(Errc::Schema, "expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw Error(Errc::Schema, "unknown field '" + it.key() + "'");
  }
}

}  // namespace detail

// --- PreferencePair ----------------------------------------------------------

inline ojson to_json(const PreferencePair& p) {
  ojson j;
  j["prompt"] = p.prompt;
  j["chosen"] = p.chosen;
  j["rejected"] = p.rejected;
  j["h_w"] = p.h_chosen;
  j["h_l"] = p.h_rejected;
  j["flipped"] = p.flipped;
  j["source"] = std::string(to_string(p.source));
  return j;
}

inline PreferencePair pair_from_json(const ojson& j) {
  detail::reject_unknown(j, {"prompt", "chosen", "rejected", "h_w", "h_l", "flipped", "source"});
  PreferencePair p;
  p.prompt = detail::require_string(j, "prompt");
  p.chosen = detail::require_string(j, "chosen");
  p.rejected = detail::require_string(j, "rejected");
  p.h_chosen = detail::require_label(j, "h_w");
  p.h_rejected = detail::require_label(j, "h_l");
  p.flipped = detail::require_bool(j, "flipped");
  p.source = source_from_string(detail::require_string(j, "source"));
  return p;
}

// --- CandidateSet -------------------------------------------------------------

inline ojson to_json(const CandidateSet& s) {
  ojson j;
  j["prompt"] = s.prompt;
  j["candidates"] = ojson::array();
  for (const auto& c : s.candidates) {
    ojson cj;
    cj["text"] = c.text;
    cj["h"] = c.h;
    if (c.score) cj["score"] = *c.score;
    j["candidates"].push_back(std::move(cj));
  }
  return j;
}

inline CandidateSet candidate_set_from_json(const ojson& j) {
  detail::reject_unknown(j, {"prompt", "candidates"});
  CandidateSet s;
  s.prompt = detail::require_string(j, "prompt");
  const auto& arr = detail::require(j, "candidates");
  if (!arr.is_array()) throw Error(Errc::Schema, "field 'candidates' must be an array");
  for (const auto& cj : arr) {
    detail::reject_unknown(cj, {"text", "h", "score"});
    Candidate c;
    c.text = detail::require_string(cj, "text");
    c.h = detail::require_label(cj, "h");
    if (auto it = cj.find("score"); it != cj.end()) {
      if (!it->is_number()) throw Error(Errc::Schema, "field 'score' must be a number");
      c.score = it->get<double>();
    }
    s.candidates.push_back(std::move(c));
  }
  s.validate();
  return s;
}

// --- Files ---------------------------------------------------------------------

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(Errc::Io, "write failed for '" + path.string() + "'");
}

/// Parses each non-blank line; schema errors carry the 1-based line number.
template <class T>
std::vector<T> read_jsonl(const std::filesystem::path& path, const std::function<T(const ojson&)>& parse) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open '" + path.string() + "'");
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(ojson::parse(line)));
    } catch (const ojson::exception& e) {
      throw Error(Errc::Schema, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() != Errc::Schema) throw;
      throw Error(Errc::Schema, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <class Range, class ToJson>
std::string dump_jsonl(const Range& records, ToJson&& to_json_fn) {
  std::string out;
  for (const auto& r : records) {
    out += to_json_fn(r).dump();
    out += '\n';
  }
  return out;
}

inline Dataset read_pairs(const std::filesystem::path& path) {
  return read_jsonl<PreferencePair>(path, pair_from_json);
}

inline void write_pairs(const std::filesystem::path& path, const Dataset& data) {
  write_text_file(path, dump_jsonl(data, [](const PreferencePair& p) { return to_json(p); }));
}

inline std::vector<CandidateSet> read_candidate_sets(const std::filesystem::path& path) {
  return read_jsonl<CandidateSet>(path, candidate_set_from_json);
}

inline void write_candidate_sets(const std::filesystem::path& path, const std::vector<CandidateSet>& sets) {
  write_text_file(path, dump_jsonl(sets, [](const CandidateSet& s) { return to_json(s); }));
}

}  // namespace fdpo
