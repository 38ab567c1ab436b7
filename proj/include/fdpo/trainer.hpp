#pragma once

// Training loop (label transformation, then minibatch gradient descent) and
// the ablation runners built on it.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fdpo/core.hpp"
#include "fdpo/io.hpp"
#include "fdpo/metrics.hpp"
#include "fdpo/objective.hpp"
#include "fdpo/pipeline.hpp"
#include "fdpo/policy.hpp"
#include "fdpo/transform.hpp"
#include "fdpo/util.hpp"

namespace fdpo {

enum class NoFlipPenaltyMode { Literal, Clamped };

inline std::string_view to_string(NoFlipPenaltyMode m) { return m == NoFlipPenaltyMode::Literal ? "literal" : "clamped"; }

inline NoFlipPenaltyMode no_flip_mode_from_string(std::string_view s) {
  if (s == "literal") return NoFlipPenaltyMode::Literal;
  if (s == "clamped") return NoFlipPenaltyMode::Clamped;
  throw Error(Errc::Schema, "no_flip_penalty_mode must be 'literal' or 'clamped'");
}

inline std::vector<double> default_lambda_sweep() { return {0, 2, 4, 6, 8, 10, 20, 50, 100}; }

struct TrainConfig {
  ObjectiveConfig objective;
  int epochs = 3;
  std::size_t batch_size = 16;
  double learning_rate = 0.1;
  std::uint64_t shuffle_seed = 0;
  std::vector<double> lambda_sweep = default_lambda_sweep();
  double data_fraction = 1.0;
  bool drop_both_hallucinated = false;
  NoFlipPenaltyMode no_flip_penalty_mode = NoFlipPenaltyMode::Literal;
  std::size_t jobs = 1;

  void validate() const {
    objective.validate();
    if (epochs < 1) throw Error(Errc::InvalidArgument, "epochs must be >= 1");
    if (batch_size < 1) throw Error(Errc::InvalidArgument, "batch size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw Error(Errc::InvalidArgument, "learning rate must be > 0");
    if (!(data_fraction > 0.0 && data_fraction <= 1.0))
      throw Error(Errc::InvalidArgument, "data fraction must lie in (0,1]");
  }

  DeltaMode delta_mode() const {
    if (objective.apply_flip) return DeltaMode::Oriented;
    return no_flip_penalty_mode == NoFlipPenaltyMode::Literal ? DeltaMode::Literal : DeltaMode::Clamped;
  }
};

struct StepRecord {
  std::size_t step = 0;
  double mean_loss = 0.0;
  double mean_m = 0.0;
  double mean_m_fact = 0.0;
  double frac_delta_one = 0.0;

  bool operator==(const StepRecord&) const = default;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
};

inline ojson to_json(const StepRecord& s) {
  ojson j;
  j["step"] = s.step;
  j["mean_loss"] = s.mean_loss;
  j["mean_m"] = s.mean_m;
  j["mean_m_fact"] = s.mean_m_fact;
  j["frac_delta_one"] = s.frac_delta_one;
  return j;
}

inline std::string history_jsonl(const TrainHistory& h) {
  return dump_jsonl(h.steps, [](const StepRecord& s) { return to_json(s); });
}

// ---------------------------------------------------------------------------
// Candidate sets bound to a feature map
// ---------------------------------------------------------------------------

/// Adds every response named by `data` to its prompt's candidate set
/// (creating sets for unseen prompts), labelled from the pair.
inline std::vector<CandidateSet> augment_candidate_sets(std::vector<CandidateSet> sets, const Dataset& data) {
  std::unordered_map<std::string, std::size_t> by_prompt;
  for (std::size_t i = 0; i < sets.size(); ++i) by_prompt.emplace(sets[i].prompt, i);
  for (const auto& p : data) {
    auto [it, inserted] = by_prompt.emplace(p.prompt, sets.size());
    if (inserted) sets.push_back(CandidateSet{p.prompt, {}});
    auto& set = sets[it->second];
    for (const auto& [text, h] : {std::pair{&p.chosen, p.h_chosen}, std::pair{&p.rejected, p.h_rejected}})
      if (!set.find(*text)) set.candidates.push_back(Candidate{*text, h, std::nullopt});
  }
  return sets;
}

class CandidateIndex {
 public:
  CandidateIndex(std::vector<CandidateSet> sets, FeatureMap map) : sets_(std::move(sets)), map_(map) {
    encoded_.reserve(sets_.size());
    for (std::size_t i = 0; i < sets_.size(); ++i) {
      sets_[i].validate();
      if (!by_prompt_.emplace(sets_[i].prompt, i).second)
        throw Error(Errc::Schema, "two candidate sets for prompt '" + sets_[i].prompt + "'");
      encoded_.push_back(encode(map_, sets_[i]));
    }
  }

  const FeatureMap& feature_map() const noexcept { return map_; }
  std::span<const CandidateSet> sets() const noexcept { return sets_; }
  std::span<const EncodedSet> encoded() const noexcept { return encoded_; }

  std::optional<std::size_t> set_of(const std::string& prompt) const {
    auto it = by_prompt_.find(prompt);
    if (it == by_prompt_.end()) return std::nullopt;
    return it->second;
  }

  PolicyPair resolve(const PreferencePair& p) const {
    const auto s = set_of(p.prompt);
    if (!s) throw Error(Errc::UnknownCandidate, "no candidate set for prompt '" + p.prompt + "'");
    const auto w = sets_[*s].find(p.chosen);
    const auto l = sets_[*s].find(p.rejected);
    if (!w || !l) throw Error(Errc::UnknownCandidate, "response missing from candidate set of '" + p.prompt + "'");
    return {*s, *w, *l, compute_delta_h(p)};
  }

  std::vector<PolicyPair> resolve_all(const Dataset& data) const {
    std::vector<PolicyPair> out;
    out.reserve(data.size());
    for (const auto& p : data) out.push_back(resolve(p));
    return out;
  }

 private:
  std::vector<CandidateSet> sets_;
  FeatureMap map_;
  std::vector<EncodedSet> encoded_;
  std::unordered_map<std::string, std::size_t> by_prompt_;
};

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

/// Stratified subsample: round(fraction * n) records from each configuration.
/// Under a fixed seed a smaller fraction yields a subset of a larger one.
inline Dataset subsample_fraction(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(Errc::InvalidArgument, "fraction must lie in (0,1]");
  if (fraction == 1.0) return data;
  std::map<FactualityConfig, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < data.size(); ++i) buckets[classify_config(data[i])].push_back(i);
  std::vector<std::size_t> picked;
  for (const auto& [c, idx] : buckets) {
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    auto p = detail::seeded_pick(idx, take, seed, c);
    picked.insert(picked.end(), p.begin(), p.end());
  }
  return detail::gather_in_order(data, std::move(picked));
}

inline Dataset drop_both_hallucinated(const Dataset& data) {
  Dataset out;
  for (const auto& p : data)
    if (classify_config(p) != FactualityConfig::BothHallucinated) out.push_back(p);
  return out;
}

struct PreparedData {
  Dataset data;
  std::size_t input_records = 0;
  std::size_t flipped = 0;
};

/// Phase 1 (orientation, when enabled) followed by the optional (1,1) filter
/// and data-fraction subsample.
inline PreparedData prepare_training_data(const Dataset& data, const TrainConfig& config) {
  PreparedData out;
  out.input_records = data.size();
  if (config.objective.apply_flip) {
    OrientReport r;
    out.data = orient(data, &r);
    out.flipped = r.flipped;
  } else {
    out.data = data;
  }
  if (config.drop_both_hallucinated) {
    out.data = drop_both_hallucinated(out.data);
    if (out.data.empty()) throw Error(Errc::EmptyAfterFilter, "no records left after removing (1,1) pairs");
  }
  if (config.data_fraction < 1.0) out.data = subsample_fraction(out.data, config.data_fraction, config.shuffle_seed);
  if (out.data.empty()) throw Error(Errc::EmptyInput, "training dataset is empty");
  return out;
}

// ---------------------------------------------------------------------------
// Gradient descent
// ---------------------------------------------------------------------------

struct TrainResult {
  PolicyParams params;
  ReferenceSnapshot reference;
  TrainHistory history;
  std::size_t input_records = 0;
  std::size_t train_records = 0;
  std::size_t flipped = 0;
};

/// Plain minibatch gradient descent from zero weights (so the policy equals
/// the reference at step 0). Each epoch visits the pairs in a seeded order.
template <class Objective>
TrainResult run_gradient_descent(const Objective& objective, const std::vector<PolicyPair>& pairs,
                                 const CandidateIndex& index, const TrainConfig& config) {
  PolicyParams params(index.feature_map().dimension());
  TrainResult result{params, snapshot_reference(params), {}, 0, pairs.size(), 0};
  std::vector<std::size_t> order(pairs.size());
  std::vector<PolicyPair> batch;
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.shuffle_seed, "epoch-" + std::to_string(epoch)));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(pairs[order[k]]);
      const auto ev = evaluate_batch(objective, params, result.reference, index.encoded(), batch, true, config.jobs);
      for (std::size_t d = 0; d < params.weights.size(); ++d) params.weights[d] -= config.learning_rate * ev.grad[d];
      result.history.steps.push_back({step++, ev.loss, ev.mean_m, ev.mean_m_fact, ev.frac_delta_one});
    }
  }
  if (!params.all_finite()) throw Error(Errc::NonFinite, "training diverged");
  result.params = std::move(params);
  return result;
}

/// F-DPO training: orientation when apply_flip, then gradient descent on the
/// factuality-margin loss.
inline TrainResult train(const Dataset& data, const CandidateIndex& index, const TrainConfig& config) {
  config.validate();
  auto prepared = prepare_training_data(data, config);
  const auto pairs = index.resolve_all(prepared.data);
  auto r = run_gradient_descent(FactualityObjective{config.objective, config.delta_mode()}, pairs, index, config);
  r.input_records = prepared.input_records;
  r.flipped = prepared.flipped;
  return r;
}

/// Standard DPO on the pairs exactly as given (no orientation, no penalty).
inline TrainResult train_standard_dpo(const Dataset& data, const CandidateIndex& index, TrainConfig config) {
  config.objective.apply_flip = false;
  config.objective.lambda = 0.0;
  config.validate();
  auto prepared = prepare_training_data(data, config);
  const auto pairs = index.resolve_all(prepared.data);
  auto r = run_gradient_descent(StandardDpoObjective{config.objective.beta}, pairs, index, config);
  r.input_records = prepared.input_records;
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// What a trained policy is evaluated on: held-out pairs (for reward margin)
/// and the candidate sets whose greedy responses are judged.
struct EvalSpec {
  Dataset pairs;
  std::vector<std::size_t> set_indices;
};

/// Evaluates on the prompts of `eval_pairs`, or on every candidate set when
/// there are no evaluation pairs.
inline EvalSpec make_eval_spec(const CandidateIndex& index, const Dataset& eval_pairs) {
  EvalSpec spec{eval_pairs, {}};
  std::vector<char> seen(index.sets().size(), 0);
  for (const auto& p : eval_pairs) {
    const auto s = index.resolve(p).set;
    if (!seen[s]) {
      seen[s] = 1;
      spec.set_indices.push_back(s);
    }
  }
  if (spec.set_indices.empty()) {
    spec.set_indices.resize(index.sets().size());
    std::iota(spec.set_indices.begin(), spec.set_indices.end(), std::size_t{0});
  }
  return spec;
}

struct PolicyEvaluation {
  EvalReport report;
  std::vector<double> greedy;  // per evaluated prompt, for win-rate comparisons
};

inline PolicyEvaluation evaluate_policy(std::string system, const TrainResult& run, const CandidateIndex& index,
                                        const EvalSpec& spec, const TrainConfig& config,
                                        const std::vector<double>* baseline_greedy = nullptr) {
  std::vector<CandidateSet> sets;
  std::vector<EncodedSet> encoded;
  for (auto s : spec.set_indices) {
    sets.push_back(index.sets()[s]);
    encoded.push_back(index.encoded()[s]);
  }
  PolicyEvaluation out;
  auto& r = out.report;
  r.system = std::move(system);
  out.greedy = greedy_scores(run.params, encoded, sets);
  r.factuality_score = factuality_score(out.greedy);
  r.hallucination_rate = hallucination_rate(out.greedy);
  r.hallucinated_mass = hallucinated_mass(run.params, encoded, sets);
  if (baseline_greedy) {
    const auto wl = compare_scores(out.greedy, *baseline_greedy);
    if (wl.wins + wl.losses > 0) r.win_rate = win_rate(wl.wins, wl.losses);
  }
  r.beta = config.objective.beta;
  r.lambda = config.objective.lambda;
  r.flip = config.objective.apply_flip;
  r.train_records = run.train_records;
  r.input_records = run.input_records;
  if (!spec.pairs.empty()) {
    const auto pairs = index.resolve_all(spec.pairs);
    r.reward_margin = reward_margin(run.params, run.reference, index.encoded(), pairs);
    std::map<FactualityConfig, std::vector<PolicyPair>> by_config;
    for (std::size_t i = 0; i < pairs.size(); ++i) by_config[classify_config(spec.pairs[i])].push_back(pairs[i]);
    for (const auto& [c, ps] : by_config)
      r.per_config[c] = {ps.size(), reward_margin(run.params, run.reference, index.encoded(), ps)};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

inline constexpr std::string_view kStandardDpoLabel = "Standard DPO";

inline std::string fdpo_label(double lambda) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "F-DPO (lambda=%g)", lambda);
  return buf;
}

struct SweepPoint {
  double lambda = 0.0;
  EvalReport report;
  TrainResult run;
};

struct SweepResult {
  TrainResult baseline_run;
  EvalReport baseline;
  std::vector<SweepPoint> points;
};

/// One F-DPO run per lambda from the same initialisation and seed; win rates
/// are against a standard DPO run on the same data.
inline SweepResult sweep_lambda(const Dataset& data, const CandidateIndex& index, const TrainConfig& base,
                                const std::vector<double>& lambdas, const EvalSpec& spec) {
  if (lambdas.empty()) throw Error(Errc::InvalidArgument, "lambda list is empty");
  auto baseline_run = train_standard_dpo(data, index, base);
  auto baseline = evaluate_policy(std::string(kStandardDpoLabel), baseline_run, index, spec, base);
  baseline.report.lambda = 0.0;
  baseline.report.flip = false;
  SweepResult out{std::move(baseline_run), baseline.report, {}};
  for (double lambda : lambdas) {
    TrainConfig cfg = base;
    cfg.objective.lambda = lambda;
    auto run = train(data, index, cfg);
    auto ev = evaluate_policy(fdpo_label(lambda), run, index, spec, cfg, &baseline.greedy);
    out.points.push_back({lambda, std::move(ev.report), std::move(run)});
  }
  return out;
}

struct FlipAblationCell {
  std::string label;
  TrainConfig config;
  TrainResult run;
  EvalReport report;
};

/// {Standard DPO, F-DPO} x {no flip, flip}, all from identical initial
/// weights and seed. Win rates are against (Standard DPO, no flip).
inline std::vector<FlipAblationCell> ablate_flip(const Dataset& data, const CandidateIndex& index,
                                                 const TrainConfig& config, const EvalSpec& spec) {
  struct Spec {
    const char* label;
    bool fdpo, flip;
  };
  const Spec specs[] = {{"Standard DPO / no flip", false, false},
                        {"Standard DPO / flip", false, true},
                        {"F-DPO / no flip", true, false},
                        {"F-DPO / flip", true, true}};
  std::vector<FlipAblationCell> cells;
  std::vector<double> base_greedy;
  for (const auto& s : specs) {
    TrainConfig c = config;
    c.objective.apply_flip = s.flip;
    if (!s.fdpo) c.objective.lambda = 0.0;
    auto run = cells.empty() ? train_standard_dpo(data, index, c) : train(data, index, c);
    auto ev = evaluate_policy(s.label, run, index, spec, c, cells.empty() ? nullptr : &base_greedy);
    if (cells.empty()) base_greedy = ev.greedy;
    cells.push_back({s.label, c, std::move(run), std::move(ev.report)});
  }
  return cells;
}

struct RemoveBothHallucinatedResult {
  TrainResult run;
  EvalReport report;
};

/// F-DPO trained without (1,1) pairs. The report's train_records /
/// input_records give the retained count.
inline RemoveBothHallucinatedResult ablate_remove_11(const Dataset& data, const CandidateIndex& index,
                                                     const TrainConfig& config, const EvalSpec& spec) {
  TrainConfig c = config;
  c.drop_both_hallucinated = true;
  auto run = train(data, index, c);
  auto report = evaluate_policy("F-DPO (without (1,1))", run, index, spec, c).report;
  return {std::move(run), std::move(report)};
}

}  // namespace fdpo
