#pragma once

// Synthetic hallucination generators: deterministic rule-based edits and an
// optional LLM-backed rewriter using the corruption prompts.

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fdpo/core.hpp"
#include "fdpo/judge.hpp"
#include "fdpo/util.hpp"

namespace fdpo {

enum class CorruptionStrategy { NumericPerturb, EntitySwap, NegationInsert };

inline std::string_view to_string(CorruptionStrategy s) {
  switch (s) {
    case CorruptionStrategy::NumericPerturb: return "NumericPerturb";
    case CorruptionStrategy::EntitySwap: return "EntitySwap";
    case CorruptionStrategy::NegationInsert: return "NegationInsert";
  }
  return "?";
}

inline CorruptionStrategy strategy_from_string(std::string_view s) {
  for (auto c : {CorruptionStrategy::NumericPerturb, CorruptionStrategy::EntitySwap,
                 CorruptionStrategy::NegationInsert})
    if (to_string(c) == s) return c;
  throw Error(Errc::Schema, "unknown corruption strategy '" + std::string(s) + "'");
}

namespace detail {

inline bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

inline bool word_boundary_at(std::string_view text, std::size_t pos, std::size_t len) {
  const bool left = pos == 0 || !is_word_char(text[pos - 1]);
  const bool right = pos + len >= text.size() || !is_word_char(text[pos + len]);
  return left && right;
}

struct Span {
  std::size_t pos;
  std::size_t len;
};

inline std::vector<Span> digit_runs(std::string_view text) {
  std::vector<Span> runs;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isdigit(static_cast<unsigned char>(text[i]))) {
      std::size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      runs.push_back({i, j - i});
      i = j;
    } else {
      ++i;
    }
  }
  return runs;
}

inline std::string perturb_number(std::string_view digits, Rng& rng) {
  const auto delta = 1 + rng.below(9);
  if (digits.size() > 18) {
    std::string out(digits);
    out.back() = static_cast<char>('0' + (out.back() - '0' + delta) % 10);
    return out;
  }
  const unsigned long long n = std::stoull(std::string(digits));
  unsigned long long m = n + delta;
  if (std::to_string(m).size() > digits.size() && n >= delta) m = n - delta;
  std::string out = std::to_string(m);
  if (out.size() < digits.size()) out.insert(0, digits.size() - out.size(), '0');
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Word spans of `text` (ASCII letters plus apostrophes).
inline std::vector<Span> words(std::string_view text) {
  std::vector<Span> out;
  std::size_t i = 0;
  auto is_letter = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '\''; };
  while (i < text.size()) {
    if (is_letter(text[i])) {
      std::size_t j = i;
      while (j < text.size() && is_letter(text[j])) ++j;
      out.push_back({i, j - i});
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

inline constexpr std::array<std::pair<std::string_view, std::string_view>, 14> kContractions = {{
    {"isn't", "is"},       {"aren't", "are"},   {"wasn't", "was"},     {"weren't", "were"},
    {"doesn't", "does"},   {"don't", "do"},     {"didn't", "did"},     {"can't", "can"},
    {"won't", "will"},     {"hasn't", "has"},   {"haven't", "have"},   {"couldn't", "could"},
    {"shouldn't", "should"}, {"wouldn't", "would"},
}};

inline constexpr std::array<std::string_view, 16> kAuxiliaries = {
    "is", "are", "was", "were", "can", "will", "does", "do", "did", "has", "have", "could", "should", "would",
    "must", "may"};

inline std::string negation_flip(std::string_view text, Rng& rng) {
  const auto ws = words(text);
  // Remove an existing negation first.
  std::vector<Span> nots;
  for (const auto& w : ws)
    if (lower(text.substr(w.pos, w.len)) == "not") nots.push_back(w);
  if (!nots.empty()) {
    const auto w = nots[rng.below(nots.size())];
    std::string out(text);
    std::size_t pos = w.pos, len = w.len;
    if (pos + len < out.size() && out[pos + len] == ' ') ++len;
    else if (pos > 0 && out[pos - 1] == ' ') { --pos; ++len; }
    out.erase(pos, len);
    return out;
  }
  std::vector<std::pair<Span, std::string_view>> contractions;
  for (const auto& w : ws) {
    const auto lw = lower(text.substr(w.pos, w.len));
    for (const auto& [neg, pos] : kContractions)
      if (lw == neg) contractions.push_back({w, pos});
  }
  if (!contractions.empty()) {
    const auto& [w, positive] = contractions[rng.below(contractions.size())];
    std::string replacement(positive);
    if (std::isupper(static_cast<unsigned char>(text[w.pos])))
      replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
    std::string out(text);
    out.replace(w.pos, w.len, replacement);
    return out;
  }
  std::vector<Span> aux;
  for (const auto& w : ws) {
    const auto lw = lower(text.substr(w.pos, w.len));
    if (std::find(kAuxiliaries.begin(), kAuxiliaries.end(), lw) != kAuxiliaries.end()) aux.push_back(w);
  }
  if (aux.empty()) throw Error(Errc::StrategyInapplicable, "no negation site in answer");
  const auto w = aux[rng.below(aux.size())];
  std::string out(text);
  out.insert(w.pos + w.len, " not");
  return out;
}

inline std::string entity_swap(std::string_view text, const std::vector<std::string>& entities, Rng& rng) {
  if (entities.size() < 2) throw Error(Errc::StrategyInapplicable, "entity table needs at least 2 entries");
  struct Match {
    Span span;
    std::size_t entity;
  };
  std::vector<Match> matches;
  for (std::size_t e = 0; e < entities.size(); ++e) {
    const auto& ent = entities[e];
    if (ent.empty()) continue;
    for (auto pos = text.find(ent); pos != std::string_view::npos; pos = text.find(ent, pos + 1))
      if (word_boundary_at(text, pos, ent.size())) matches.push_back({{pos, ent.size()}, e});
  }
  // Longest match wins at each position; drop overlaps.
  std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    return a.span.pos != b.span.pos ? a.span.pos < b.span.pos : a.span.len > b.span.len;
  });
  std::vector<Match> kept;
  for (const auto& m : matches)
    if (kept.empty() || m.span.pos >= kept.back().span.pos + kept.back().span.len) kept.push_back(m);
  if (kept.empty()) throw Error(Errc::StrategyInapplicable, "answer mentions no known entity");
  const auto& target = kept[rng.below(kept.size())];
  auto pick = rng.below(entities.size() - 1);
  if (pick >= target.entity) ++pick;
  if (entities[pick] == entities[target.entity]) throw Error(Errc::StrategyInapplicable, "duplicate entity table entry");
  std::string out(text);
  out.replace(target.span.pos, target.span.len, entities[pick]);
  return out;
}

}  // namespace detail

/// Rewrites `answer` so at least one factual token changes. Deterministic per
/// (answer, strategy, seed).
inline std::string rule_based_corrupt(std::string_view answer, CorruptionStrategy strategy, std::uint64_t seed,
                                      const std::vector<std::string>& entity_table = {}) {
  if (answer.empty()) throw Error(Errc::EmptyField, "answer is empty");
  Rng rng(splitmix64(seed ^ fnv1a(answer) ^ static_cast<std::uint64_t>(strategy)));
  switch (strategy) {
    case CorruptionStrategy::NumericPerturb: {
      const auto runs = detail::digit_runs(answer);
      if (runs.empty()) throw Error(Errc::StrategyInapplicable, "answer contains no digits");
      const auto run = runs[rng.below(runs.size())];
      std::string out(answer);
      out.replace(run.pos, run.len, detail::perturb_number(answer.substr(run.pos, run.len), rng));
      return out;
    }
    case CorruptionStrategy::EntitySwap:
      return detail::entity_swap(answer, entity_table, rng);
    case CorruptionStrategy::NegationInsert:
      return detail::negation_flip(answer, rng);
  }
  throw Error(Errc::InvalidArgument, "unknown strategy");
}

/// Capitalised words that do not start a sentence, sorted and unique.
inline std::vector<std::string> extract_entity_table(const std::vector<std::string>& texts) {
  std::set<std::string> found;
  for (const auto& t : texts) {
    for (const auto& w : detail::words(t)) {
      if (w.len < 3 || !std::isupper(static_cast<unsigned char>(t[w.pos]))) continue;
      if (t.find('\'', w.pos) < w.pos + w.len) continue;
      std::size_t k = w.pos;
      while (k > 0 && t[k - 1] == ' ') --k;
      if (k == 0 || t[k - 1] == '.' || t[k - 1] == '!' || t[k - 1] == '?' || t[k - 1] == '\n') continue;
      found.insert(t.substr(w.pos, w.len));
    }
  }
  return {found.begin(), found.end()};
}

class Corruptor {
 public:
  virtual ~Corruptor() = default;
  virtual std::string corrupt(const std::string& question, const std::string& answer, std::uint64_t seed) const = 0;
};

/// Tries the configured strategies in rotation, starting at a seed-chosen
/// one, and returns the first that applies.
class RuleBasedCorruptor : public Corruptor {
 public:
  RuleBasedCorruptor(std::vector<CorruptionStrategy> strategies, std::vector<std::string> entities)
      : strategies_(std::move(strategies)), entities_(std::move(entities)) {
    if (strategies_.empty()) throw Error(Errc::InvalidArgument, "no corruption strategies configured");
  }

  std::string corrupt(const std::string&, const std::string& answer, std::uint64_t seed) const override {
    const auto n = strategies_.size();
    const auto start = static_cast<std::size_t>(splitmix64(seed) % n);
    for (std::size_t k = 0; k < n; ++k) {
      try {
        return rule_based_corrupt(answer, strategies_[(start + k) % n], seed, entities_);
      } catch (const Error& e) {
        if (e.code() != Errc::StrategyInapplicable) throw;
      }
    }
    throw Error(Errc::StrategyInapplicable, "no configured strategy applies to answer");
  }

 private:
  std::vector<CorruptionStrategy> strategies_;
  std::vector<std::string> entities_;
};

/// Asks a chat model to rewrite the answer with subtle factual errors.
class LlmCorruptor : public Corruptor {
 public:
  LlmCorruptor(JudgeEndpointConfig config, Transport& transport, Sleeper sleep = real_sleep)
      : config_(std::move(config)), transport_(transport), sleep_(std::move(sleep)) {}

  std::string corrupt(const std::string& question, const std::string& answer, std::uint64_t) const override {
    std::vector<ChatMessage> messages{
        {"system", std::string(template_text(PromptKind::CorruptorSystem))},
        {"user", render_prompt(PromptKind::CorruptorUser, question, answer)},
    };
    std::string out = query_chat(config_, transport_, messages, sleep_);
    while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
    std::size_t first = 0;
    while (first < out.size() && std::isspace(static_cast<unsigned char>(out[first]))) ++first;
    out.erase(0, first);
    if (out.empty() || out == answer) throw Error(Errc::StrategyInapplicable, "model returned the answer unchanged");
    return out;
  }

 private:
  JudgeEndpointConfig config_;
  Transport& transport_;
  Sleeper sleep_;
};

}  // namespace fdpo
