#pragma once

// Factuality-aware dataset construction, stage by stage:
//   1 extract & clean      2 two-response view     3 binary labels
//   4 DPO-ready mapping     5 synthetic corruption   6 merge
//   7 per-bucket balancing  8 orientation correction
// plus stratified train/eval splitting.
//
// Every stage is a pure function of its inputs and seeds.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fdpo/core.hpp"
#include "fdpo/corrupt.hpp"
#include "fdpo/io.hpp"
#include "fdpo/transform.hpp"
#include "fdpo/util.hpp"

namespace fdpo {

// ---------------------------------------------------------------------------
// Record types
// ---------------------------------------------------------------------------

struct RawRecord {
  std::string prompt;
  std::string chosen;
  std::string rejected;

  bool operator==(const RawRecord&) const = default;
};

struct PairView {
  std::string prompt;
  std::string response_0;
  std::string response_1;
  int better_response_id = 0;
  std::optional<int> factual_flag_0;
  std::optional<int> factual_flag_1;

  bool has_labels() const { return factual_flag_0.has_value() && factual_flag_1.has_value(); }

  bool operator==(const PairView&) const = default;
};

/// One line of a verdict file. `verdict` is empty when the judge reply could
/// not be parsed; `error` then says why.
struct VerdictLine {
  std::size_t record_index = 0;
  int slot = 0;
  std::optional<int> verdict;
  std::string error;

  bool operator==(const VerdictLine&) const = default;
};

using MixTarget = std::map<FactualityConfig, std::size_t>;

/// Post-balancing mixture of the full-scale corpus (45,000 pairs).
inline MixTarget paper_mix_target() {
  return {{FactualityConfig::BothFactual, 15000},
          {FactualityConfig::FactualOverHallucinated, 20000},
          {FactualityConfig::BothHallucinated, 10000}};
}

/// The same proportions at 1/100 scale, used by the bundled toy corpus.
inline MixTarget toy_mix_target() {
  return {{FactualityConfig::BothFactual, 150},
          {FactualityConfig::FactualOverHallucinated, 200},
          {FactualityConfig::BothHallucinated, 100}};
}

// --- JSON --------------------------------------------------------------------

inline ojson to_json(const RawRecord& r) {
  ojson j;
  j["prompt"] = r.prompt;
  j["chosen"] = r.chosen;
  j["rejected"] = r.rejected;
  return j;
}

/// Extra fields in the source corpus are ignored: only the three text fields
/// are extracted.
inline RawRecord raw_from_json(const ojson& j) {
  if (!j.is_object()) throw Error(Errc::Schema, "expected a JSON object");
  return {detail::require_string(j, "prompt"), detail::require_string(j, "chosen"),
          detail::require_string(j, "rejected")};
}

inline ojson to_json(const PairView& v) {
  ojson j;
  j["prompt"] = v.prompt;
  j["response_0"] = v.response_0;
  j["response_1"] = v.response_1;
  j["better_response_id"] = v.better_response_id;
  if (v.has_labels()) {
    j["factual_flag_0"] = *v.factual_flag_0;
    j["factual_flag_1"] = *v.factual_flag_1;
  }
  return j;
}

inline PairView view_from_json(const ojson& j) {
  detail::reject_unknown(j, {"prompt", "response_0", "response_1", "better_response_id", "factual_flag_0",
                             "factual_flag_1"});
  PairView v;
  v.prompt = detail::require_string(j, "prompt");
  v.response_0 = detail::require_string(j, "response_0");
  v.response_1 = detail::require_string(j, "response_1");
  v.better_response_id = detail::require_label(j, "better_response_id");
  const bool f0 = j.contains("factual_flag_0"), f1 = j.contains("factual_flag_1");
  if (f0 != f1) throw Error(Errc::Schema, "factual flags must be both present or both absent");
  if (f0) {
    v.factual_flag_0 = detail::require_label(j, "factual_flag_0");
    v.factual_flag_1 = detail::require_label(j, "factual_flag_1");
  }
  return v;
}

inline ojson to_json(const VerdictLine& v) {
  ojson j;
  j["record_index"] = v.record_index;
  j["slot"] = v.slot;
  if (v.verdict) {
    j["verdict"] = *v.verdict;
  } else {
    j["verdict"] = nullptr;
    j["error"] = v.error;
  }
  return j;
}

inline VerdictLine verdict_from_json(const ojson& j) {
  detail::reject_unknown(j, {"record_index", "slot", "verdict", "error"});
  VerdictLine v;
  const auto& idx = detail::require(j, "record_index");
  if (!idx.is_number_unsigned() && !(idx.is_number_integer() && idx.get<long long>() >= 0))
    throw Error(Errc::Schema, "record_index must be a non-negative integer");
  v.record_index = idx.get<std::size_t>();
  v.slot = detail::require_label(j, "slot");
  const auto& verdict = detail::require(j, "verdict");
  if (verdict.is_null()) {
    v.error = j.value("error", std::string("unparseable"));
  } else {
    v.verdict = detail::require_label(j, "verdict");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Stage 1: extraction and cleaning
// ---------------------------------------------------------------------------

struct CleanReport {
  std::size_t input = 0;
  std::size_t empty = 0;
  std::size_t degenerate = 0;  // chosen == rejected
  std::size_t duplicates = 0;
  std::size_t kept = 0;
};

inline bool is_blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

/// Drops records with blank fields, records whose two responses are equal,
/// and exact duplicate triples. First occurrences keep their order.
inline std::vector<RawRecord> extract_and_clean(const std::vector<RawRecord>& records, CleanReport* report = nullptr) {
  CleanReport r;
  r.input = records.size();
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  std::vector<RawRecord> out;
  for (const auto& rec : records) {
    if (is_blank(rec.prompt) || is_blank(rec.chosen) || is_blank(rec.rejected)) {
      ++r.empty;
      continue;
    }
    if (rec.chosen == rec.rejected) {
      ++r.degenerate;
      continue;
    }
    if (!seen.emplace(rec.prompt, rec.chosen, rec.rejected).second) {
      ++r.duplicates;
      continue;
    }
    out.push_back(rec);
  }
  r.kept = out.size();
  if (report) *report = r;
  return out;
}

// ---------------------------------------------------------------------------
// Stage 2: two-response view
// ---------------------------------------------------------------------------

inline PairView normalize_pair_view(const RawRecord& record, int chosen_slot) {
  if (chosen_slot != 0 && chosen_slot != 1) throw Error(Errc::InvalidArgument, "slot must be 0 or 1");
  PairView v;
  v.prompt = record.prompt;
  v.response_0 = chosen_slot == 0 ? record.chosen : record.rejected;
  v.response_1 = chosen_slot == 0 ? record.rejected : record.chosen;
  v.better_response_id = chosen_slot;
  return v;
}

/// Slot of the chosen response, a pure function of (seed, record content).
inline int chosen_slot_for(const RawRecord& record, std::uint64_t order_seed) {
  return static_cast<int>(splitmix64(order_seed ^ hash_fields({record.prompt, record.chosen, record.rejected})) & 1);
}

inline PairView normalize_pair_view(const RawRecord& record, std::uint64_t order_seed) {
  return normalize_pair_view(record, chosen_slot_for(record, order_seed));
}

// ---------------------------------------------------------------------------
// Stages 3 and 4: labels and DPO mapping
// ---------------------------------------------------------------------------

inline PairView attach_labels(PairView view, const std::pair<JudgeVerdict, JudgeVerdict>& verdicts) {
  view.factual_flag_0 = verdicts.first.binary_value();
  view.factual_flag_1 = verdicts.second.binary_value();
  return view;
}

inline PreferencePair to_dpo_record(const PairView& view) {
  if (!view.has_labels()) throw Error(Errc::MissingLabels, "pair view for '" + view.prompt + "' has no labels");
  PreferencePair p;
  p.prompt = view.prompt;
  const bool first = view.better_response_id == 0;
  p.chosen = first ? view.response_0 : view.response_1;
  p.rejected = first ? view.response_1 : view.response_0;
  p.h_chosen = first ? *view.factual_flag_0 : *view.factual_flag_1;
  p.h_rejected = first ? *view.factual_flag_1 : *view.factual_flag_0;
  p.flipped = false;
  p.source = Source::Real;
  return p;
}

struct LabelReport {
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;  // missing or unparseable verdicts
};

/// Attaches verdict-file labels to views. Views lacking a usable verdict for
/// either slot are left unlabeled.
inline std::vector<PairView> apply_verdicts(std::vector<PairView> views, const std::vector<VerdictLine>& lines,
                                            LabelReport* report = nullptr) {
  std::map<std::pair<std::size_t, int>, const VerdictLine*> by_key;
  for (const auto& l : lines) {
    if (l.record_index >= views.size())
      throw Error(Errc::Schema, "verdict record_index " + std::to_string(l.record_index) + " out of range");
    auto [it, inserted] = by_key.emplace(std::make_pair(l.record_index, l.slot), &l);
    if (!inserted && !(*it->second == l))
      throw Error(Errc::Schema, "conflicting verdicts for record " + std::to_string(l.record_index));
  }
  LabelReport r;
  for (std::size_t i = 0; i < views.size(); ++i) {
    auto a = by_key.find({i, 0});
    auto b = by_key.find({i, 1});
    if (a == by_key.end() || b == by_key.end() || !a->second->verdict || !b->second->verdict) {
      ++r.unlabeled;
      continue;
    }
    views[i] = attach_labels(std::move(views[i]),
                             {JudgeVerdict::binary(*a->second->verdict), JudgeVerdict::binary(*b->second->verdict)});
    ++r.labeled;
  }
  if (report) *report = r;
  return views;
}

// ---------------------------------------------------------------------------
// Stage 5: synthetic corruption
// ---------------------------------------------------------------------------

/// New pair: the factual response of `pair` as chosen (h=0) against a
/// corrupted copy of it as rejected (h=1).
inline PreferencePair synthesize_corrupted(const PreferencePair& pair, const Corruptor& corruptor, std::uint64_t seed) {
  const std::string* source = nullptr;
  if (pair.h_chosen == 0) source = &pair.chosen;
  else if (pair.h_rejected == 0) source = &pair.rejected;
  if (!source) throw Error(Errc::NoFactualSource, "both responses are hallucinated");
  std::string corrupted = corruptor.corrupt(pair.prompt, *source, seed);
  if (corrupted == *source) throw Error(Errc::StrategyInapplicable, "corruption left the answer unchanged");
  PreferencePair out;
  out.prompt = pair.prompt;
  out.chosen = *source;
  out.rejected = std::move(corrupted);
  out.h_chosen = 0;
  out.h_rejected = 1;
  out.flipped = false;
  out.source = Source::Synthetic;
  return out;
}

struct SynthesisReport {
  std::size_t requested = 0;
  std::size_t produced = 0;
  std::size_t inapplicable = 0;
};

/// Produces up to `count` synthetic pairs from eligible sources (those in
/// `source_configs`, or any pair with a factual response when empty), visited
/// in a seeded order. Corruption runs on `jobs` threads; results do not
/// depend on it.
inline Dataset synthesize_many(const Dataset& real, const Corruptor& corruptor, std::size_t count,
                               const std::vector<FactualityConfig>& source_configs, std::uint64_t seed,
                               std::size_t jobs = 1, SynthesisReport* report = nullptr) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < real.size(); ++i) {
    const auto c = classify_config(real[i]);
    const bool has_factual = real[i].h_chosen == 0 || real[i].h_rejected == 0;
    const bool wanted =
        source_configs.empty() || std::find(source_configs.begin(), source_configs.end(), c) != source_configs.end();
    if (has_factual && wanted) eligible.push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(eligible);

  SynthesisReport r;
  r.requested = count;
  Dataset out;
  std::size_t next = 0;
  while (out.size() < count && next < eligible.size()) {
    const std::size_t batch = std::min(count - out.size(), eligible.size() - next);
    std::vector<std::optional<PreferencePair>> slots(batch);
    parallel_for(batch, jobs, [&](std::size_t k) {
      const std::size_t idx = eligible[next + k];
      try {
        slots[k] = synthesize_corrupted(real[idx], corruptor, splitmix64(seed + idx));
      } catch (const Error& e) {
        if (e.code() != Errc::StrategyInapplicable) throw;
      }
    });
    for (auto& s : slots) {
      if (s) out.push_back(std::move(*s));
      else ++r.inapplicable;
    }
    next += batch;
  }
  r.produced = out.size();
  if (report) *report = r;
  return out;
}

// ---------------------------------------------------------------------------
// Stages 6-8
// ---------------------------------------------------------------------------

inline Dataset merge(const Dataset& real, const Dataset& synthetic) {
  Dataset out;
  out.reserve(real.size() + synthetic.size());
  out.insert(out.end(), real.begin(), real.end());
  out.insert(out.end(), synthetic.begin(), synthetic.end());
  return out;
}

inline std::map<FactualityConfig, std::size_t> histogram(const Dataset& data) {
  std::map<FactualityConfig, std::size_t> h;
  for (auto c : kAllConfigs) h[c] = 0;
  for (const auto& p : data) ++h[classify_config(p)];
  return h;
}

namespace detail {

/// Picks `take` of the given indices uniformly without replacement using a
/// per-bucket stream, so the picks for one bucket never depend on another.
/// Smaller takes are prefixes of larger ones under the same seed.
inline std::vector<std::size_t> seeded_pick(std::vector<std::size_t> indices, std::size_t take, std::uint64_t seed,
                                            FactualityConfig bucket) {
  Rng rng(derive_seed(seed, to_string(bucket)));
  rng.shuffle(indices);
  indices.resize(std::min(take, indices.size()));
  return indices;
}

inline Dataset gather_in_order(const Dataset& data, std::vector<std::size_t> picked) {
  std::sort(picked.begin(), picked.end());
  Dataset out;
  out.reserve(picked.size());
  for (auto i : picked) out.push_back(data[i]);
  return out;
}

}  // namespace detail

/// Subsamples each bucket to exactly its target count. Buckets are keyed by
/// the configuration a pair has once oriented, so (1,0) pairs count toward
/// (0,1). Output keeps input order.
inline Dataset balance(const Dataset& data, const MixTarget& mix, std::uint64_t seed) {
  if (mix.count(FactualityConfig::Misordered)) throw Error(Errc::InvalidArgument, "mix target may not name (1,0)");
  std::map<FactualityConfig, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < data.size(); ++i) buckets[oriented_config(data[i])].push_back(i);
  std::vector<std::size_t> picked;
  for (auto c : kOrientedConfigs) {
    const auto it = mix.find(c);
    const std::size_t need = it == mix.end() ? 0 : it->second;
    const auto& have = buckets[c];
    if (have.size() < need)
      throw Error(Errc::InsufficientBucket, std::string(to_string(c)) + " has " + std::to_string(have.size()) +
                                                " records, needs " + std::to_string(need));
    auto p = detail::seeded_pick(have, need, seed, c);
    picked.insert(picked.end(), p.begin(), p.end());
  }
  return detail::gather_in_order(data, std::move(picked));
}

struct OrientReport {
  std::size_t flipped = 0;
};

inline Dataset orient(const Dataset& data, OrientReport* report = nullptr) {
  Dataset out;
  out.reserve(data.size());
  OrientReport r;
  for (const auto& p : data) {
    const bool misordered = compute_delta_h(p).value() < 0;
    out.push_back(flip_if_misordered(p));
    r.flipped += misordered ? 1 : 0;
  }
  if (report) *report = r;
  return out;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Content identity used for split-disjointness checks.
inline std::string record_id(const PreferencePair& p) {
  return to_hex(hash_fields({p.prompt, p.chosen, p.rejected, to_string(p.source)}));
}

struct Split {
  Dataset train;
  Dataset eval;
};

/// Within each configuration, round(eval_fraction * size) records go to eval.
inline Split stratified_split(const Dataset& data, double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
    throw Error(Errc::InvalidArgument, "eval_fraction must lie in (0,1)");
  std::map<FactualityConfig, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < data.size(); ++i) buckets[classify_config(data[i])].push_back(i);
  std::vector<char> is_eval(data.size(), 0);
  for (const auto& [c, idx] : buckets) {
    if (idx.size() < 2)
      throw Error(Errc::BucketTooSmall, std::string(to_string(c)) + " has " + std::to_string(idx.size()) + " record");
    const auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(idx.size())));
    for (auto i : detail::seeded_pick(idx, n_eval, seed, c)) is_eval[i] = 1;
  }
  Split s;
  for (std::size_t i = 0; i < data.size(); ++i) (is_eval[i] ? s.eval : s.train).push_back(data[i]);
  return s;
}

}  // namespace fdpo
