#pragma once

// Factuality differential and the deterministic orientation (label-flip) rule.

#include "fdpo/core.hpp"

namespace fdpo {

/// h_rejected - h_chosen, in {-1, 0, 1}. +1 means the chosen response is
/// strictly more factual; -1 marks a misordered pair.
class DeltaH {
 public:
  constexpr DeltaH() = default;
  explicit DeltaH(int v) : value_(v) {
    if (v < -1 || v > 1) throw Error(Errc::OutOfRange, "delta_h must be in {-1,0,1}");
  }

  constexpr int value() const noexcept { return value_; }
  constexpr bool is_oriented() const noexcept { return value_ >= 0; }

  bool operator==(const DeltaH&) const = default;

 private:
  int value_ = 0;
};

inline DeltaH compute_delta_h(const PreferencePair& pair) {
  if (!is_binary_label(pair.h_chosen) || !is_binary_label(pair.h_rejected))
    throw Error(Errc::Schema, "factuality labels must be 0 or 1");
  return DeltaH(pair.h_rejected - pair.h_chosen);
}

/// Swaps texts and labels (and marks the record flipped) when the chosen
/// response is less factual than the rejected one. Other fields untouched;
/// an existing flipped=true is preserved.
inline PreferencePair flip_if_misordered(PreferencePair pair) {
  if (compute_delta_h(pair).value() < 0) {
    std::swap(pair.chosen, pair.rejected);
    std::swap(pair.h_chosen, pair.h_rejected);
    pair.flipped = true;
  }
  return pair;
}

inline FactualityConfig classify_config(const PreferencePair& pair) {
  return config_from_labels(pair.h_chosen, pair.h_rejected);
}

/// Configuration the pair lands in once oriented; (1,0) and (0,1) share a bucket.
inline FactualityConfig oriented_config(const PreferencePair& pair) {
  const auto c = classify_config(pair);
  return c == FactualityConfig::Misordered ? FactualityConfig::FactualOverHallucinated : c;
}

}  // namespace fdpo
