#pragma once

// Desk-scale differentiable policy: a log-linear softmax over each prompt's
// finite candidate set,
//
//   log pi(y_i | x) = s_i - logsumexp_j s_j,   s_j = w . phi(x, y_j),
//
// with phi a hashed, L2-normalised character n-gram count vector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdpo/core.hpp"
#include "fdpo/io.hpp"
#include "fdpo/util.hpp"

namespace fdpo {

struct SparseVector {
  std::vector<std::uint32_t> index;  // strictly increasing
  std::vector<double> value;

  std::size_t nnz() const noexcept { return index.size(); }

  double dot(std::span<const double> dense) const {
    double s = 0.0;
    for (std::size_t k = 0; k < index.size(); ++k) s += value[k] * dense[index[k]];
    return s;
  }

  void add_to(std::span<double> dense, double scale) const {
    for (std::size_t k = 0; k < index.size(); ++k) dense[index[k]] += scale * value[k];
  }

  bool operator==(const SparseVector&) const = default;
};

/// Hashes (prompt, response) into a sparse feature vector. Only the response
/// contributes n-grams: a feature that depends on the prompt alone adds the
/// same amount to every candidate's score and cancels in the softmax.
class FeatureMap {
 public:
  explicit FeatureMap(std::size_t dimension = 4096, std::uint64_t salt = 0, std::size_t ngram = 3)
      : dim_(dimension), salt_(salt), ngram_(ngram) {
    if (dim_ == 0) throw Error(Errc::InvalidArgument, "feature dimension must be positive");
    if (ngram_ == 0) throw Error(Errc::InvalidArgument, "n-gram order must be positive");
  }

  std::size_t dimension() const noexcept { return dim_; }
  std::uint64_t salt() const noexcept { return salt_; }
  std::size_t ngram() const noexcept { return ngram_; }

  SparseVector operator()(std::string_view /*prompt*/, std::string_view response) const {
    // \x02 and \x03 mark the response boundaries.
    std::string padded;
    padded.reserve(response.size() + 2);
    padded += '\x02';
    padded += response;
    padded += '\x03';
    std::vector<std::uint32_t> hits;
    const std::uint64_t seed = splitmix64(salt_);
    const std::string_view p(padded);
    if (p.size() < ngram_) {
      hits.push_back(bucket(p, seed));
    } else {
      hits.reserve(p.size() - ngram_ + 1);
      for (std::size_t i = 0; i + ngram_ <= p.size(); ++i) hits.push_back(bucket(p.substr(i, ngram_), seed));
    }
    std::sort(hits.begin(), hits.end());
    SparseVector out;
    for (auto h : hits) {
      if (!out.index.empty() && out.index.back() == h) {
        out.value.back() += 1.0;
      } else {
        out.index.push_back(h);
        out.value.push_back(1.0);
      }
    }
    double norm = 0.0;
    for (double v : out.value) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : out.value) v /= norm;
    return out;
  }

  bool operator==(const FeatureMap&) const = default;

 private:
  std::uint32_t bucket(std::string_view gram, std::uint64_t seed) const {
    return static_cast<std::uint32_t>(fnv1a(gram, kFnvOffset ^ seed) % dim_);
  }

  std::size_t dim_;
  std::uint64_t salt_;
  std::size_t ngram_;
};

/// Candidate features of one CandidateSet, computed once.
struct EncodedSet {
  std::vector<SparseVector> features;

  std::size_t size() const noexcept { return features.size(); }
};

inline EncodedSet encode(const FeatureMap& map, const CandidateSet& set) {
  EncodedSet e;
  e.features.reserve(set.size());
  for (const auto& c : set.candidates) e.features.push_back(map(set.prompt, c.text));
  return e;
}

namespace detail {

inline void check_dims(const PolicyParams& params, const EncodedSet& set) {
  for (const auto& f : set.features)
    if (!f.index.empty() && f.index.back() >= params.feature_dim())
      throw Error(Errc::InvalidArgument, "feature index exceeds parameter dimension");
}

}  // namespace detail

inline std::vector<double> candidate_scores(const PolicyParams& params, const EncodedSet& set) {
  detail::check_dims(params, set);
  std::vector<double> s(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) s[i] = set.features[i].dot(params.weights);
  return s;
}

/// Numerically stable log-softmax (max subtraction).
inline std::vector<double> log_softmax(std::span<const double> scores) {
  if (scores.empty()) throw Error(Errc::EmptyInput, "log_softmax of an empty score vector");
  const double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] - lse;
  return out;
}

inline std::vector<double> log_probs(const PolicyParams& params, const EncodedSet& set) {
  return log_softmax(candidate_scores(params, set));
}

inline std::vector<double> probabilities(const PolicyParams& params, const EncodedSet& set) {
  auto lp = log_probs(params, set);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

inline double log_prob(const PolicyParams& params, const EncodedSet& set, std::size_t index) {
  if (index >= set.size()) throw Error(Errc::IndexOutOfRange, "candidate index " + std::to_string(index));
  return log_probs(params, set)[index];
}

inline double log_prob(const PolicyParams& params, const FeatureMap& map, const CandidateSet& set, std::size_t index) {
  if (index >= set.size()) throw Error(Errc::IndexOutOfRange, "candidate index " + std::to_string(index));
  return log_prob(params, encode(map, set), index);
}

/// d log pi(y_index | x) / dw = phi_index - sum_j pi_j phi_j.
inline std::vector<double> log_prob_grad(const PolicyParams& params, const EncodedSet& set, std::size_t index) {
  if (index >= set.size()) throw Error(Errc::IndexOutOfRange, "candidate index " + std::to_string(index));
  const auto probs = probabilities(params, set);
  std::vector<double> g(params.feature_dim(), 0.0);
  set.features[index].add_to(g, 1.0);
  for (std::size_t j = 0; j < set.size(); ++j) set.features[j].add_to(g, -probs[j]);
  return g;
}

inline std::vector<double> log_prob_grad(const PolicyParams& params, const FeatureMap& map, const CandidateSet& set,
                                         std::size_t index) {
  if (index >= set.size()) throw Error(Errc::IndexOutOfRange, "candidate index " + std::to_string(index));
  return log_prob_grad(params, encode(map, set), index);
}

/// Frozen copy of the policy used as the reference; it exposes no mutators.
class ReferenceSnapshot {
 public:
  const PolicyParams& params() const noexcept { return *params_; }

 private:
  explicit ReferenceSnapshot(PolicyParams p) : params_(std::make_shared<const PolicyParams>(std::move(p))) {}
  friend ReferenceSnapshot snapshot_reference(const PolicyParams& params);

  std::shared_ptr<const PolicyParams> params_;
};

inline ReferenceSnapshot snapshot_reference(const PolicyParams& params) { return ReferenceSnapshot(params); }

// ---------------------------------------------------------------------------
// Checkpoints: JSON with shortest round-trip double formatting, so
// save -> load reproduces every weight bit for bit.
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline std::string checkpoint_json(const FeatureMap& map, const PolicyParams& params) {
  ojson j;
  j["format"] = "fdpo-params";
  j["version"] = kCheckpointVersion;
  j["feature_dim"] = params.feature_dim();
  j["salt"] = map.salt();
  j["ngram"] = map.ngram();
  j["weights"] = params.weights;
  return j.dump() + "\n";
}

inline void save_checkpoint(const std::filesystem::path& path, const FeatureMap& map, const PolicyParams& params) {
  if (map.dimension() != params.feature_dim())
    throw Error(Errc::InvalidArgument, "feature map and parameters disagree on dimension");
  write_text_file(path, checkpoint_json(map, params));
}

struct Checkpoint {
  FeatureMap map;
  PolicyParams params;
};

inline Checkpoint parse_checkpoint(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
    if (j.at("format") != "fdpo-params") throw Error(Errc::Schema, "not an fdpo params checkpoint");
    if (j.at("version") != kCheckpointVersion) throw Error(Errc::Schema, "unsupported checkpoint version");
    const auto dim = j.at("feature_dim").get<std::size_t>();
    auto weights = j.at("weights").get<std::vector<double>>();
    if (weights.size() != dim) throw Error(Errc::Schema, "weights length does not match feature_dim");
    Checkpoint c{FeatureMap(dim, j.at("salt").get<std::uint64_t>(), j.at("ngram").get<std::size_t>()),
                 PolicyParams(std::move(weights))};
    if (!c.params.all_finite()) throw Error(Errc::Schema, "checkpoint contains non-finite weights");
    return c;
  } catch (const ojson::exception& e) {
    throw Error(Errc::Schema, std::string("bad checkpoint: ") + e.what());
  }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_text_file(path)); }

}  // namespace fdpo
