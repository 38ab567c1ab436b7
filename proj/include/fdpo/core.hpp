#pragma once

// Domain types shared by every fdpo module.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace fdpo {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class Errc {
  InvalidArgument,
  EmptyField,
  Unparseable,
  OutOfRange,
  NonBinaryVerdict,
  MissingLabels,
  NoFactualSource,
  StrategyInapplicable,
  InsufficientBucket,
  BucketTooSmall,
  IndexOutOfRange,
  NonFinite,
  PreFlipDelta,
  EmptyBatch,
  EmptyInput,
  NoDecisiveComparisons,
  UnknownCandidate,
  EmptyAfterFilter,
  Timeout,
  HttpError,
  RetriesExhausted,
  Schema,
  Io,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::EmptyField: return "EmptyField";
    case Errc::Unparseable: return "Unparseable";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::NonBinaryVerdict: return "NonBinaryVerdict";
    case Errc::MissingLabels: return "MissingLabels";
    case Errc::NoFactualSource: return "NoFactualSource";
    case Errc::StrategyInapplicable: return "StrategyInapplicable";
    case Errc::InsufficientBucket: return "InsufficientBucket";
    case Errc::BucketTooSmall: return "BucketTooSmall";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::NonFinite: return "NonFinite";
    case Errc::PreFlipDelta: return "PreFlipDelta";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::NoDecisiveComparisons: return "NoDecisiveComparisons";
    case Errc::UnknownCandidate: return "UnknownCandidate";
    case Errc::EmptyAfterFilter: return "EmptyAfterFilter";
    case Errc::Timeout: return "Timeout";
    case Errc::HttpError: return "HttpError";
    case Errc::RetriesExhausted: return "RetriesExhausted";
    case Errc::Schema: return "Schema";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// Every recoverable failure in the library is reported as an Error carrying
/// a machine-checkable code; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// ---------------------------------------------------------------------------
// Preference data
// ---------------------------------------------------------------------------

enum class Source { Real, Synthetic };

inline std::string_view to_string(Source s) { return s == Source::Real ? "real" : "synthetic"; }

inline Source source_from_string(std::string_view s) {
  if (s == "real") return Source::Real;
  if (s == "synthetic") return Source::Synthetic;
  throw Error(Errc::Schema, "unknown source '" + std::string(s) + "'");
}

/// One record of the preference dataset. Labels are per response:
/// 0 = factual, 1 = hallucinated.
struct PreferencePair {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  int h_chosen = 0;
  int h_rejected = 0;
  bool flipped = false;
  Source source = Source::Real;

  bool operator==(const PreferencePair&) const = default;
};

inline bool is_binary_label(int h) { return h == 0 || h == 1; }

inline void validate(const PreferencePair& p) {
  if (!is_binary_label(p.h_chosen) || !is_binary_label(p.h_rejected))
    throw Error(Errc::Schema, "factuality labels must be 0 or 1");
  if (p.chosen == p.rejected) throw Error(Errc::Schema, "chosen and rejected responses are identical");
}

using Dataset = std::vector<PreferencePair>;

enum class FactualityConfig {
  BothFactual,              // (0,0)
  FactualOverHallucinated,  // (0,1)
  BothHallucinated,         // (1,1)
  Misordered,               // (1,0), only before orientation
};

inline constexpr std::array<FactualityConfig, 3> kOrientedConfigs = {
    FactualityConfig::BothFactual, FactualityConfig::FactualOverHallucinated,
    FactualityConfig::BothHallucinated};

inline constexpr std::array<FactualityConfig, 4> kAllConfigs = {
    FactualityConfig::BothFactual, FactualityConfig::FactualOverHallucinated,
    FactualityConfig::BothHallucinated, FactualityConfig::Misordered};

/// Label tuple notation, e.g. "(0,1)". Used as the key in every file format.
inline std::string_view to_string(FactualityConfig c) {
  switch (c) {
    case FactualityConfig::BothFactual: return "(0,0)";
    case FactualityConfig::FactualOverHallucinated: return "(0,1)";
    case FactualityConfig::BothHallucinated: return "(1,1)";
    case FactualityConfig::Misordered: return "(1,0)";
  }
  return "?";
}

inline FactualityConfig config_from_string(std::string_view s) {
  for (auto c : kAllConfigs)
    if (to_string(c) == s) return c;
  throw Error(Errc::Schema, "unknown factuality configuration '" + std::string(s) + "'");
}

inline FactualityConfig config_from_labels(int h_chosen, int h_rejected) {
  if (h_chosen == 0) return h_rejected == 0 ? FactualityConfig::BothFactual
                                            : FactualityConfig::FactualOverHallucinated;
  return h_rejected == 0 ? FactualityConfig::Misordered : FactualityConfig::BothHallucinated;
}

// ---------------------------------------------------------------------------
// Objective and policy parameters
// ---------------------------------------------------------------------------

struct ObjectiveConfig {
  double beta = 0.1;    // KL temperature
  double lambda = 0.0;  // factuality penalty strength
  bool apply_flip = true;

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw Error(Errc::InvalidArgument, "beta must be > 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw Error(Errc::InvalidArgument, "lambda must be >= 0");
  }
};

/// Weight vector of the log-linear candidate-scoring policy.
struct PolicyParams {
  std::vector<double> weights;

  PolicyParams() = default;
  explicit PolicyParams(std::size_t feature_dim) : weights(feature_dim, 0.0) {}
  explicit PolicyParams(std::vector<double> w) : weights(std::move(w)) {}

  std::size_t feature_dim() const noexcept { return weights.size(); }

  bool all_finite() const {
    for (double w : weights)
      if (!std::isfinite(w)) return false;
    return true;
  }

  bool operator==(const PolicyParams&) const = default;
};

struct Candidate {
  std::string text;
  int h = 0;                    // factuality label
  std::optional<double> score;  // judge score in [0,10], when known

  bool operator==(const Candidate&) const = default;
};

/// Finite response universe for one prompt.
struct CandidateSet {
  std::string prompt;
  std::vector<Candidate> candidates;

  std::size_t size() const noexcept { return candidates.size(); }

  std::optional<std::size_t> find(std::string_view text) const {
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (candidates[i].text == text) return i;
    return std::nullopt;
  }

  void validate() const {
    if (candidates.size() < 2)
      throw Error(Errc::Schema, "candidate set for '" + prompt + "' has fewer than 2 candidates");
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!is_binary_label(candidates[i].h)) throw Error(Errc::Schema, "candidate label must be 0 or 1");
      if (candidates[i].score && !(*candidates[i].score >= 0.0 && *candidates[i].score <= 10.0))
        throw Error(Errc::Schema, "candidate score outside [0,10]");
      for (std::size_t j = 0; j < i; ++j)
        if (candidates[i].text == candidates[j].text)
          throw Error(Errc::Schema, "duplicate candidate text in set for '" + prompt + "'");
    }
  }

  bool operator==(const CandidateSet&) const = default;
};

// ---------------------------------------------------------------------------
// Judge verdicts and evaluation reports
// ---------------------------------------------------------------------------

class JudgeVerdict {
 public:
  enum class Kind { Binary, Score };

  static JudgeVerdict binary(int value) {
    if (!is_binary_label(value)) throw Error(Errc::OutOfRange, "binary verdict must be 0 or 1");
    return JudgeVerdict(value);
  }

  static JudgeVerdict score(double value) {
    if (!(value >= 0.0 && value <= 10.0)) throw Error(Errc::OutOfRange, "score must lie in [0,10]");
    return JudgeVerdict(value);
  }

  Kind kind() const noexcept { return payload_.index() == 0 ? Kind::Binary : Kind::Score; }

  int binary_value() const {
    if (kind() != Kind::Binary) throw Error(Errc::NonBinaryVerdict, "verdict is a score");
    return std::get<int>(payload_);
  }

  double score_value() const {
    if (kind() != Kind::Score) throw Error(Errc::InvalidArgument, "verdict is binary");
    return std::get<double>(payload_);
  }

  bool operator==(const JudgeVerdict&) const = default;

 private:
  explicit JudgeVerdict(int v) : payload_(v) {}
  explicit JudgeVerdict(double v) : payload_(v) {}

  std::variant<int, double> payload_;
};

struct ConfigBucket {
  std::size_t count = 0;
  double reward_margin = 0.0;  // mean margin over the bucket's evaluation pairs

  bool operator==(const ConfigBucket&) const = default;
};

struct EvalReport {
  std::string system;
  double factuality_score = 0.0;
  double hallucination_rate = 0.0;
  std::optional<double> win_rate;
  double reward_margin = 0.0;
  double hallucinated_mass = 0.0;
  double beta = 0.0;
  double lambda = 0.0;
  bool flip = false;
  std::size_t train_records = 0;
  std::size_t input_records = 0;
  std::map<FactualityConfig, ConfigBucket> per_config;

  bool operator==(const EvalReport&) const = default;
};

}  // namespace fdpo
