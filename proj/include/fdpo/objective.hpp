#pragma once

// Preference objectives.
//
//   m       = (log pi(y_w) - log pi(y_l)) - (log ref(y_w) - log ref(y_l))
//   m_fact  = m - lambda * delta_h
//   loss    = -mean log sigmoid(beta * m_fact)
//
// The penalty sits inside the beta scaling, so its effective size in the
// sigmoid argument is beta * lambda. With delta_h = 0 or lambda = 0 the loss is
// exactly standard DPO.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "fdpo/core.hpp"
#include "fdpo/policy.hpp"
#include "fdpo/transform.hpp"
#include "fdpo/util.hpp"

namespace fdpo {

/// Logistic function. Branches on sign so exp never overflows; the result is
/// clamped to the smallest positive double so it never reaches exactly 0.
inline double sigmoid(double z) {
  double s;
  if (z >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    s = e / (1.0 + e);
  }
  return std::max(s, std::numeric_limits<double>::denorm_min());
}

/// log sigmoid(z) without forming sigmoid(z): finite for every finite z.
inline double log_sigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

inline double dpo_margin(double lp_w, double lp_l, double ref_lp_w, double ref_lp_l) {
  if (!std::isfinite(lp_w) || !std::isfinite(lp_l) || !std::isfinite(ref_lp_w) || !std::isfinite(ref_lp_l))
    throw Error(Errc::NonFinite, "log-probabilities must be finite");
  return (lp_w - lp_l) - (ref_lp_w - ref_lp_l);
}

/// How a pair with delta_h = -1 is treated. Oriented data never contains
/// one, so the default rejects it; the no-flip ablation picks one of the
/// other two readings.
enum class DeltaMode {
  Oriented,  // -1 is an error
  Literal,   // m - lambda * (-1): the misordered pair gets a bonus
  Clamped,   // m - lambda * max(delta_h, 0)
};

inline double fact_margin(double m, DeltaH delta_h, double lambda, DeltaMode mode = DeltaMode::Oriented) {
  int d = delta_h.value();
  if (d < 0) {
    if (mode == DeltaMode::Oriented)
      throw Error(Errc::PreFlipDelta, "delta_h = -1; orient the pair before computing the factuality margin");
    if (mode == DeltaMode::Clamped) d = 0;
  }
  return m - lambda * static_cast<double>(d);
}

struct PairLogProbs {
  double lp_w = 0.0;
  double lp_l = 0.0;
  double ref_lp_w = 0.0;
  double ref_lp_l = 0.0;
  DeltaH delta_h;
};

struct MarginBreakdown {
  double m = 0.0;
  DeltaH delta_h;
  double m_fact = 0.0;
  double loss = 0.0;
};

struct LossResult {
  double loss = 0.0;
  std::vector<MarginBreakdown> pairs;
};

inline LossResult fdpo_loss(std::span<const PairLogProbs> batch, const ObjectiveConfig& config,
                            DeltaMode mode = DeltaMode::Oriented) {
  config.validate();
  if (batch.empty()) throw Error(Errc::EmptyBatch, "empty batch");
  LossResult r;
  r.pairs.reserve(batch.size());
  double total = 0.0;
  for (const auto& p : batch) {
    MarginBreakdown b;
    b.m = dpo_margin(p.lp_w, p.lp_l, p.ref_lp_w, p.ref_lp_l);
    b.delta_h = p.delta_h;
    b.m_fact = fact_margin(b.m, p.delta_h, config.lambda, mode);
    b.loss = -log_sigmoid(config.beta * b.m_fact);
    total += b.loss;
    r.pairs.push_back(b);
  }
  r.loss = total / static_cast<double>(batch.size());
  return r;
}

/// Standard DPO loss; ignores factuality labels entirely.
inline double dpo_loss(std::span<const PairLogProbs> batch, double beta) {
  if (!(beta > 0.0)) throw Error(Errc::InvalidArgument, "beta must be > 0");
  if (batch.empty()) throw Error(Errc::EmptyBatch, "empty batch");
  double total = 0.0;
  for (const auto& p : batch) total -= log_sigmoid(beta * dpo_margin(p.lp_w, p.lp_l, p.ref_lp_w, p.ref_lp_l));
  return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Policy-bound objectives: margins computed from the toy policy, with exact
// gradients.
// ---------------------------------------------------------------------------

/// A training pair resolved against the candidate sets.
struct PolicyPair {
  std::size_t set = 0;
  std::size_t chosen = 0;
  std::size_t rejected = 0;
  DeltaH delta_h;
};

inline PairLogProbs pair_log_probs(const PolicyParams& params, const ReferenceSnapshot& reference,
                                   std::span<const EncodedSet> sets, const PolicyPair& pair) {
  if (pair.set >= sets.size()) throw Error(Errc::IndexOutOfRange, "candidate set index");
  const auto& set = sets[pair.set];
  if (pair.chosen >= set.size() || pair.rejected >= set.size())
    throw Error(Errc::IndexOutOfRange, "candidate index");
  const auto lp = log_probs(params, set);
  const auto ref = log_probs(reference.params(), set);
  return {lp[pair.chosen], lp[pair.rejected], ref[pair.chosen], ref[pair.rejected], pair.delta_h};
}

struct FactualityObjective {
  ObjectiveConfig config;
  DeltaMode mode = DeltaMode::Oriented;

  double beta() const { return config.beta; }
  double adjusted_margin(double m, DeltaH delta_h) const { return fact_margin(m, delta_h, config.lambda, mode); }
};

struct StandardDpoObjective {
  double beta_value = 0.1;

  double beta() const { return beta_value; }
  double adjusted_margin(double m, DeltaH) const { return m; }
};

struct BatchEvaluation {
  double loss = 0.0;
  double mean_m = 0.0;
  double mean_m_fact = 0.0;
  double frac_delta_one = 0.0;
  std::vector<double> grad;  // empty unless requested
};

/// Mean loss over the batch and, optionally, its gradient w.r.t. params.
///
/// Per pair the gradient is -beta * sigmoid(-beta * m_adj) * (grad lp_w -
/// grad lp_l). Within one candidate set the softmax normaliser cancels in
/// lp_w - lp_l, leaving phi_w - phi_l. Per-pair terms run on `jobs` threads;
/// the reduction is serial in batch order.
template <class Objective>
BatchEvaluation evaluate_batch(const Objective& objective, const PolicyParams& params,
                               const ReferenceSnapshot& reference, std::span<const EncodedSet> sets,
                               std::span<const PolicyPair> batch, bool with_grad, std::size_t jobs = 1) {
  if (batch.empty()) throw Error(Errc::EmptyBatch, "empty batch");
  if (!(objective.beta() > 0.0)) throw Error(Errc::InvalidArgument, "beta must be > 0");
  struct Term {
    double m, m_adj, loss, coeff;
  };
  std::vector<Term> terms(batch.size());
  parallel_for(batch.size(), jobs, [&](std::size_t i) {
    const auto lp = pair_log_probs(params, reference, sets, batch[i]);
    const double m = dpo_margin(lp.lp_w, lp.lp_l, lp.ref_lp_w, lp.ref_lp_l);
    const double m_adj = objective.adjusted_margin(m, batch[i].delta_h);
    const double z = objective.beta() * m_adj;
    terms[i] = {m, m_adj, -log_sigmoid(z), -objective.beta() * sigmoid(-z)};
  });

  BatchEvaluation out;
  const double n = static_cast<double>(batch.size());
  std::size_t delta_one = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.loss += terms[i].loss;
    out.mean_m += terms[i].m;
    out.mean_m_fact += terms[i].m_adj;
    delta_one += batch[i].delta_h.value() == 1 ? 1 : 0;
  }
  out.loss /= n;
  out.mean_m /= n;
  out.mean_m_fact /= n;
  out.frac_delta_one = static_cast<double>(delta_one) / n;
  if (with_grad) {
    out.grad.assign(params.feature_dim(), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& set = sets[batch[i].set];
      const double scale = terms[i].coeff / n;
      set.features[batch[i].chosen].add_to(out.grad, scale);
      set.features[batch[i].rejected].add_to(out.grad, -scale);
    }
  }
  return out;
}

inline double fdpo_policy_loss(std::span<const PolicyPair> batch, const ObjectiveConfig& config,
                               const PolicyParams& params, const ReferenceSnapshot& reference,
                               std::span<const EncodedSet> sets, DeltaMode mode = DeltaMode::Oriented) {
  config.validate();
  return evaluate_batch(FactualityObjective{config, mode}, params, reference, sets, batch, false).loss;
}

inline std::vector<double> fdpo_loss_grad(std::span<const PolicyPair> batch, const ObjectiveConfig& config,
                                          const PolicyParams& params, const ReferenceSnapshot& reference,
                                          std::span<const EncodedSet> sets, DeltaMode mode = DeltaMode::Oriented,
                                          std::size_t jobs = 1) {
  config.validate();
  return evaluate_batch(FactualityObjective{config, mode}, params, reference, sets, batch, true, jobs).grad;
}

}  // namespace fdpo
