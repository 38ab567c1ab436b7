#pragma once

// Generators for the bundled offline fixtures: a toy preference corpus that
// balances to the 150/200/100 mix, and a 200-prompt benchmark with 4 scored
// candidates per prompt and 30% misordered pairs.

#include <array>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fdpo/core.hpp"
#include "fdpo/judge.hpp"
#include "fdpo/pipeline.hpp"
#include "fdpo/util.hpp"

namespace fdpo::synthetic {

namespace detail {

inline constexpr std::array<std::string_view, 32> kPlaces = {
    "Arvenholt", "Belmire",  "Corvath",   "Dunmarsh", "Elsworth",  "Farrowgate", "Glenharrow", "Halvik",
    "Istrel",    "Jorvane",  "Kestmoor",  "Lorcaster", "Marrowby", "Northelm",   "Orlanby",    "Pellingford",
    "Quarrow",   "Ravensey", "Saltmere",  "Tolvern",  "Ulverdale", "Varnholm",   "Westcombe",  "Yarrowick",
    "Zennor",    "Ashgrove", "Brackwell", "Caldmoor", "Drystone",  "Emberlea",   "Foxhallow",  "Greymouth"};

inline constexpr std::array<std::string_view, 16> kFacilities = {
    "public library", "railway station", "harbour lighthouse", "observatory", "botanical garden", "town hall",
    "stone bridge",   "concert hall",    "water mill",         "museum",      "grammar school",   "market hall",
    "canal lock",     "clock tower",     "fire station",       "infirmary"};

inline constexpr std::array<std::string_view, 20> kFounders = {
    "Edith Marlowe", "Tobias Krell",  "Annika Voss",   "Hollis Grant",  "Mirela Danescu", "Osric Fenwick",
    "Petra Lindqvist", "Casimir Rowe", "Helena Brandt", "Julian Ashby",  "Greta Sorensen", "Ambrose Hale",
    "Ilse Morgenthal", "Rufus Calder", "Beatrix Quill", "Lionel Varga",  "Sabine Roux",    "Dorian Pike",
    "Clementine Ode", "Emrys Talbot"};

inline constexpr std::array<std::string_view, 6> kGrounded = {
    "as recorded in the municipal archive", "according to the surviving construction ledger",
    "as the dedication plaque states",      "per the county survey of that decade",
    "as the council minutes confirm",       "according to the original building permit"};

inline constexpr std::array<std::string_view, 6> kFabricated = {
    "reportedly after a secret royal decree",  "allegedly funded by a vanished sea captain",
    "supposedly built overnight by volunteers", "according to rumours nobody can trace",
    "famously blessed by a visiting emperor",   "as legend claims, with gold from a lost mine"};

struct Topic {
  std::string place;
  std::string facility;
  int year = 0;
  std::string founder;
};

inline std::string question(const Topic& t) {
  return "When did " + t.place + " open its " + t.facility + ", and who funded it?";
}

inline int other_year(int year, Rng& rng) {
  const int delta = 3 + static_cast<int>(rng.below(40));
  return rng.below(2) ? year + delta : year - delta;
}

inline std::string other_founder(const std::string& founder, Rng& rng) {
  std::string f;
  do f = std::string(kFounders[rng.below(kFounders.size())]);
  while (f == founder);
  return f;
}

/// Distinct (place, facility) topics in a seeded order.
inline std::vector<Topic> topics(std::size_t n, Rng& rng) {
  std::vector<std::size_t> combos(kPlaces.size() * kFacilities.size());
  for (std::size_t i = 0; i < combos.size(); ++i) combos[i] = i;
  if (n > combos.size()) throw Error(Errc::InvalidArgument, "not enough distinct topics");
  rng.shuffle(combos);
  std::vector<Topic> out;
  for (std::size_t k = 0; k < n; ++k) {
    Topic t;
    t.place = std::string(kPlaces[combos[k] / kFacilities.size()]);
    t.facility = std::string(kFacilities[combos[k] % kFacilities.size()]);
    t.year = 1820 + static_cast<int>(rng.below(180));
    t.founder = std::string(kFounders[rng.below(kFounders.size())]);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Toy corpus
// ---------------------------------------------------------------------------

/// Raw supply per configuration. Orientation folds (1,0) into (0,1); the
/// synthetic stage adds `synthetic` more (0,1) pairs.
struct ToySupply {
  std::size_t both_factual = 170;
  std::size_t factual_over_hallucinated = 130;
  std::size_t misordered = 60;
  std::size_t both_hallucinated = 100;
  std::size_t unparseable = 2;  // records whose judge replies cannot be parsed
  std::size_t duplicates = 4;
  std::size_t degenerate = 2;
  std::size_t blank = 1;
};

struct ToyCorpus {
  std::vector<RawRecord> raw;
  std::unordered_map<std::string, std::string> judge_table;  // mock_key -> reply
  std::vector<CandidateSet> candidates;
};

inline ToyCorpus make_toy_corpus(std::uint64_t seed, const ToySupply& supply = {}) {
  Rng rng(derive_seed(seed, "toy-corpus"));
  std::vector<FactualityConfig> plan;
  auto add = [&](FactualityConfig c, std::size_t n) { plan.insert(plan.end(), n, c); };
  add(FactualityConfig::BothFactual, supply.both_factual + supply.unparseable);
  add(FactualityConfig::FactualOverHallucinated, supply.factual_over_hallucinated);
  add(FactualityConfig::Misordered, supply.misordered);
  add(FactualityConfig::BothHallucinated, supply.both_hallucinated);
  rng.shuffle(plan);
  const auto topics = detail::topics(plan.size(), rng);

  ToyCorpus out;
  std::vector<std::size_t> both_factual_records;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& t = topics[i];
    const std::string q = detail::question(t);
    const int wrong_year = detail::other_year(t.year, rng);
    const std::string wrong_founder = detail::other_founder(t.founder, rng);
    const std::string f1 = t.place + " opened its " + t.facility + " in " + std::to_string(t.year) + ", paid for by " +
                           t.founder + ".";
    const std::string f2 = "The " + t.facility + " in " + t.place + " opened in " + std::to_string(t.year) +
                           "; " + t.founder + " funded the work.";
    const std::string h1 = t.place + " opened its " + t.facility + " in " + std::to_string(wrong_year) +
                           ", paid for by " + t.founder + ".";
    const std::string h2 = "The " + t.facility + " in " + t.place + " opened in " + std::to_string(t.year) + "; " +
                           wrong_founder + " funded the work.";
    out.candidates.push_back(
        {q, {{f1, 0, 9.0}, {f2, 0, 8.0 + static_cast<double>(rng.below(3))}, {h1, 1, 2.0}, {h2, 1, 3.0}}});
    for (const auto& [text, h] : {std::pair{&f1, 0}, std::pair{&f2, 0}, std::pair{&h1, 1}, std::pair{&h2, 1}})
      out.judge_table[mock_key(q, *text)] = "[[" + std::to_string(h) + "]]";

    RawRecord r{q, "", ""};
    switch (plan[i]) {
      case FactualityConfig::BothFactual:
        r.chosen = f2, r.rejected = f1;
        both_factual_records.push_back(out.raw.size());
        break;
      case FactualityConfig::FactualOverHallucinated:
        r.chosen = rng.below(2) ? f1 : f2, r.rejected = rng.below(2) ? h1 : h2;
        break;
      case FactualityConfig::Misordered:
        r.chosen = rng.below(2) ? h1 : h2, r.rejected = rng.below(2) ? f1 : f2;
        break;
      case FactualityConfig::BothHallucinated:
        r.chosen = h2, r.rejected = h1;
        break;
    }
    out.raw.push_back(std::move(r));
  }
  // The first `unparseable` (0,0) records get judge replies without a verdict
  // token, so labeling drops them.
  for (std::size_t k = 0; k < supply.unparseable; ++k) {
    const auto& r = out.raw[both_factual_records[k]];
    out.judge_table[mock_key(r.prompt, r.chosen)] = "The answer looks fine to me.";
  }
  for (std::size_t k = 0; k < supply.duplicates; ++k) out.raw.push_back(out.raw[rng.below(out.raw.size())]);
  for (std::size_t k = 0; k < supply.degenerate; ++k) {
    auto r = out.raw[rng.below(out.raw.size())];
    r.rejected = r.chosen;
    out.raw.push_back(std::move(r));
  }
  for (std::size_t k = 0; k < supply.blank; ++k) out.raw.push_back({"   ", "Nothing.", "Nothing at all."});
  rng.shuffle(out.raw);
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

struct BenchmarkShape {
  std::size_t prompts = 200;
  std::size_t misordered = 60;
  std::size_t both_factual = 46;
  std::size_t factual_over_hallucinated = 62;
  std::size_t both_hallucinated = 32;
};

struct Benchmark {
  std::vector<CandidateSet> candidates;
  Dataset pairs;  // one per prompt, labels as given (not oriented)
};

/// Candidates per prompt, in order: factual plain, factual confident,
/// hallucinated plain, hallucinated confident. Factual answers cite a
/// grounded source phrase and score 8-10; hallucinated ones carry a
/// fabrication phrase and score 1-4. Misordered pairs prefer the confident
/// hallucination over the plain factual answer.
inline Benchmark make_benchmark(std::uint64_t seed, const BenchmarkShape& shape = {}) {
  if (shape.misordered + shape.both_factual + shape.factual_over_hallucinated + shape.both_hallucinated !=
      shape.prompts)
    throw Error(Errc::InvalidArgument, "benchmark pair counts must sum to the prompt count");
  Rng rng(derive_seed(seed, "benchmark"));
  const auto topics = detail::topics(shape.prompts, rng);
  std::vector<FactualityConfig> plan;
  plan.insert(plan.end(), shape.misordered, FactualityConfig::Misordered);
  plan.insert(plan.end(), shape.both_factual, FactualityConfig::BothFactual);
  plan.insert(plan.end(), shape.factual_over_hallucinated, FactualityConfig::FactualOverHallucinated);
  plan.insert(plan.end(), shape.both_hallucinated, FactualityConfig::BothHallucinated);
  rng.shuffle(plan);

  Benchmark out;
  for (std::size_t i = 0; i < shape.prompts; ++i) {
    const auto& t = topics[i];
    const std::string q = detail::question(t);
    const std::string base = t.place + "'s " + t.facility + " opened in ";
    const auto grounded = [&] { return std::string(detail::kGrounded[rng.below(detail::kGrounded.size())]); };
    const auto fabricated = [&] { return std::string(detail::kFabricated[rng.below(detail::kFabricated.size())]); };
    const std::string fp = base + std::to_string(t.year) + " with money from " + t.founder + ", " + grounded() + ".";
    const std::string fc = "Certainly! " + base + std::to_string(t.year) + ", funded by " + t.founder + " " +
                           grounded() + ", without any doubt.";
    const std::string hp = base + std::to_string(detail::other_year(t.year, rng)) + " with money from " +
                           detail::other_founder(t.founder, rng) + ", " + fabricated() + ".";
    const std::string hc = "Certainly! " + base + std::to_string(detail::other_year(t.year, rng)) + ", funded by " +
                           detail::other_founder(t.founder, rng) + " " + fabricated() + ", without any doubt.";
    auto score = [&](int h) { return h == 0 ? 8.0 + rng.below(3) : 1.0 + rng.below(4); };
    out.candidates.push_back({q, {{fp, 0, score(0)}, {fc, 0, score(0)}, {hp, 1, score(1)}, {hc, 1, score(1)}}});

    PreferencePair p;
    p.prompt = q;
    switch (plan[i]) {
      case FactualityConfig::Misordered:
        p.chosen = hc, p.rejected = fp, p.h_chosen = 1, p.h_rejected = 0;
        break;
      case FactualityConfig::BothFactual:
        p.chosen = fc, p.rejected = fp, p.h_chosen = 0, p.h_rejected = 0;
        break;
      case FactualityConfig::FactualOverHallucinated:
        p.chosen = fp, p.rejected = hp, p.h_chosen = 0, p.h_rejected = 1;
        break;
      case FactualityConfig::BothHallucinated:
        p.chosen = hc, p.rejected = hp, p.h_chosen = 1, p.h_rejected = 1;
        break;
    }
    out.pairs.push_back(std::move(p));
  }
  return out;
}

}  // namespace fdpo::synthetic
