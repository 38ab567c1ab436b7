#pragma once

// Run manifest: one JSON file holding the pipeline, judge and training
// configuration. Unknown keys are rejected and every path is resolved
// against the manifest's directory before anything runs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fdpo/core.hpp"
#include "fdpo/corrupt.hpp"
#include "fdpo/io.hpp"
#include "fdpo/judge.hpp"
#include "fdpo/pipeline.hpp"
#include "fdpo/trainer.hpp"

namespace fdpo {

namespace fs = std::filesystem;

enum class SlotOrder { Seeded, Fixed };

struct PipelineManifest {
  fs::path input;
  fs::path verdicts;
  SlotOrder slot_order = SlotOrder::Seeded;
  std::uint64_t order_seed = 0;  // kept apart from the global seed so verdict files stay valid
  bool synthesize = true;
  bool balance = true;
  bool orient = true;
  bool split = false;
  std::size_t synthetic_count = 0;
  std::vector<CorruptionStrategy> strategies = {CorruptionStrategy::NumericPerturb, CorruptionStrategy::EntitySwap,
                                                CorruptionStrategy::NegationInsert};
  std::vector<FactualityConfig> source_configs;
  bool llm_corruptor = false;
  MixTarget mix = toy_mix_target();
  double eval_fraction = 0.1;
};

struct JudgeManifest {
  JudgeEndpointConfig endpoint;
  std::optional<fs::path> mock_table;
};

struct TrainManifest {
  std::optional<fs::path> data;  // default: the pipeline's output
  std::optional<fs::path> eval;
  fs::path candidates;
  bool augment_candidates = true;
  TrainConfig config;
  std::size_t feature_dim = 4096;
  std::uint64_t salt = 0;
  std::vector<double> fractions = {0.25, 0.5, 1.0};
};

struct Manifest {
  fs::path base_dir;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  int verbosity = 1;
  fs::path out_dir;
  std::optional<PipelineManifest> pipeline;
  JudgeManifest judge;
  std::optional<TrainManifest> train;

  fs::path pipeline_dir() const { return out_dir / "pipeline"; }

  /// Training data: the explicit path, else the pipeline's train split (or
  /// its full output when the split is off).
  fs::path train_data() const {
    if (train && train->data) return *train->data;
    if (pipeline && pipeline->split) return pipeline_dir() / "train.jsonl";
    return pipeline_dir() / "dataset.jsonl";
  }

  std::optional<fs::path> eval_data() const {
    if (train && train->eval) return train->eval;
    if (train && train->data) return std::nullopt;
    if (pipeline && pipeline->split) return pipeline_dir() / "eval.jsonl";
    return std::nullopt;
  }
};

namespace detail {

template <class T>
T get_or(const ojson& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const ojson::exception& e) {
    throw Error(Errc::Schema, std::string("manifest key '") + key + "': " + e.what());
  }
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

inline const ojson& object_at(const ojson& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_object()) throw Error(Errc::Schema, std::string("manifest key '") + key + "' must be an object");
  return v;
}

inline PipelineManifest parse_pipeline(const ojson& j, const fs::path& base) {
  reject_unknown(j, {"input", "verdicts", "slot_order", "order_seed", "stages", "synthetic", "mix", "eval_fraction"});
  PipelineManifest p;
  p.input = resolve(base, require_string(j, "input"));
  p.verdicts = resolve(base, require_string(j, "verdicts"));
  const auto order = get_or<std::string>(j, "slot_order", "seeded");
  if (order == "seeded") p.slot_order = SlotOrder::Seeded;
  else if (order == "fixed") p.slot_order = SlotOrder::Fixed;
  else throw Error(Errc::Schema, "slot_order must be 'seeded' or 'fixed'");
  p.order_seed = get_or<std::uint64_t>(j, "order_seed", 0);
  if (j.contains("stages")) {
    const auto& s = object_at(j, "stages");
    reject_unknown(s, {"synthesize", "balance", "orient", "split"});
    p.synthesize = get_or(s, "synthesize", p.synthesize);
    p.balance = get_or(s, "balance", p.balance);
    p.orient = get_or(s, "orient", p.orient);
    p.split = get_or(s, "split", p.split);
  }
  if (j.contains("synthetic")) {
    const auto& s = object_at(j, "synthetic");
    reject_unknown(s, {"count", "strategies", "source_configs", "corruptor"});
    p.synthetic_count = get_or<std::size_t>(s, "count", 0);
    if (s.contains("strategies")) {
      p.strategies.clear();
      for (const auto& v : get_or<std::vector<std::string>>(s, "strategies", {}))
        p.strategies.push_back(strategy_from_string(v));
    }
    for (const auto& v : get_or<std::vector<std::string>>(s, "source_configs", {}))
      p.source_configs.push_back(config_from_string(v));
    const auto c = get_or<std::string>(s, "corruptor", "rule");
    if (c != "rule" && c != "llm") throw Error(Errc::Schema, "corruptor must be 'rule' or 'llm'");
    p.llm_corruptor = c == "llm";
  }
  if (j.contains("mix")) {
    const auto& m = object_at(j, "mix");
    p.mix.clear();
    for (auto it = m.begin(); it != m.end(); ++it) {
      const auto c = config_from_string(it.key());
      if (c == FactualityConfig::Misordered) throw Error(Errc::Schema, "mix cannot target (1,0)");
      p.mix[c] = get_or<std::size_t>(m, it.key().c_str(), 0);
    }
  }
  p.eval_fraction = get_or(j, "eval_fraction", p.eval_fraction);
  if (p.split && !(p.eval_fraction > 0.0 && p.eval_fraction < 1.0))
    throw Error(Errc::Schema, "eval_fraction must lie in (0,1)");
  return p;
}

inline JudgeManifest parse_judge(const ojson& j, const fs::path& base) {
  reject_unknown(j, {"base_url", "model", "api_key_env", "timeout_seconds", "max_retries", "temperature",
                     "max_in_flight", "backoff_initial_seconds", "mock_table"});
  JudgeManifest m;
  auto& e = m.endpoint;
  e.base_url = get_or(j, "base_url", e.base_url);
  e.model = get_or(j, "model", e.model);
  e.api_key_env = get_or(j, "api_key_env", e.api_key_env);
  e.timeout_seconds = get_or(j, "timeout_seconds", e.timeout_seconds);
  e.max_retries = get_or(j, "max_retries", e.max_retries);
  e.temperature = get_or(j, "temperature", e.temperature);
  e.max_in_flight = get_or(j, "max_in_flight", e.max_in_flight);
  e.backoff_initial_seconds = get_or(j, "backoff_initial_seconds", e.backoff_initial_seconds);
  e.validate();
  if (j.contains("mock_table")) m.mock_table = resolve(base, require_string(j, "mock_table"));
  return m;
}

inline TrainManifest parse_train(const ojson& j, const fs::path& base) {
  reject_unknown(j, {"data", "eval", "candidates", "augment_candidates", "beta", "lambda", "apply_flip", "epochs",
                     "batch_size", "learning_rate", "lambdas", "data_fraction", "drop_both_hallucinated",
                     "no_flip_penalty_mode", "feature_dim", "salt", "fractions"});
  TrainManifest t;
  if (j.contains("data")) t.data = resolve(base, require_string(j, "data"));
  if (j.contains("eval")) t.eval = resolve(base, require_string(j, "eval"));
  t.candidates = resolve(base, require_string(j, "candidates"));
  t.augment_candidates = get_or(j, "augment_candidates", t.augment_candidates);
  auto& c = t.config;
  c.objective.beta = get_or(j, "beta", c.objective.beta);
  c.objective.lambda = get_or(j, "lambda", c.objective.lambda);
  c.objective.apply_flip = get_or(j, "apply_flip", c.objective.apply_flip);
  c.epochs = get_or(j, "epochs", c.epochs);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  c.lambda_sweep = get_or(j, "lambdas", c.lambda_sweep);
  c.data_fraction = get_or(j, "data_fraction", c.data_fraction);
  c.drop_both_hallucinated = get_or(j, "drop_both_hallucinated", c.drop_both_hallucinated);
  c.no_flip_penalty_mode =
      no_flip_mode_from_string(get_or<std::string>(j, "no_flip_penalty_mode", std::string(to_string(c.no_flip_penalty_mode))));
  t.feature_dim = get_or(j, "feature_dim", t.feature_dim);
  t.salt = get_or(j, "salt", t.salt);
  t.fractions = get_or(j, "fractions", t.fractions);
  return t;
}

}  // namespace detail

/// `base_dir` anchors relative paths (normally the manifest's directory).
inline Manifest parse_manifest(const ojson& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(Errc::Schema, "manifest must be a JSON object");
  detail::reject_unknown(j, {"seed", "jobs", "verbosity", "out_dir", "pipeline", "judge", "train"});
  Manifest m;
  m.base_dir = base_dir;
  m.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
  m.jobs = detail::get_or<std::size_t>(j, "jobs", 1);
  m.verbosity = detail::get_or(j, "verbosity", 1);
  m.out_dir = detail::resolve(base_dir, detail::get_or<std::string>(j, "out_dir", "runs"));
  if (j.contains("pipeline")) m.pipeline = detail::parse_pipeline(detail::object_at(j, "pipeline"), base_dir);
  if (j.contains("judge")) m.judge = detail::parse_judge(detail::object_at(j, "judge"), base_dir);
  if (j.contains("train")) m.train = detail::parse_train(detail::object_at(j, "train"), base_dir);
  if (m.jobs < 1) throw Error(Errc::Schema, "jobs must be >= 1");
  return m;
}

inline Manifest load_manifest(const fs::path& path) {
  ojson j;
  try {
    j = ojson::parse(read_text_file(path));
  } catch (const ojson::exception& e) {
    throw Error(Errc::Schema, path.string() + ": " + e.what());
  }
  auto base = fs::absolute(path).parent_path();
  return parse_manifest(j, base);
}

}  // namespace fdpo
