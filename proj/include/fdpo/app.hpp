#pragma once

// Subcommand implementations behind the fdpo command-line tool. Each command
// reads a parsed Manifest and writes its outputs under the manifest's out_dir.
//
// Seeds: every random stage draws from derive_seed(seed, <stage name>), with
// stage names "synthesize", "balance", "split" and "train".

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fdpo/core.hpp"
#include "fdpo/corrupt.hpp"
#include "fdpo/http_transport.hpp"
#include "fdpo/io.hpp"
#include "fdpo/judge.hpp"
#include "fdpo/manifest.hpp"
#include "fdpo/metrics.hpp"
#include "fdpo/pipeline.hpp"
#include "fdpo/policy.hpp"
#include "fdpo/synthetic.hpp"
#include "fdpo/trainer.hpp"

namespace fdpo::app {

namespace fs = std::filesystem;

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitSchema = 2;
inline constexpr int kExitInsufficientBucket = 3;
inline constexpr int kExitRuntime = 4;
inline constexpr int kExitUsage = 64;

inline int exit_code_for(Errc c) {
  switch (c) {
    case Errc::Io: return kExitIo;
    case Errc::Schema: return kExitSchema;
    case Errc::InsufficientBucket: return kExitInsufficientBucket;
    default: return kExitRuntime;
  }
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  bool mock = false;
  std::optional<double> lambda;
  std::optional<std::vector<double>> lambdas;
  bool no_flip = false;
  bool drop_both_hallucinated = false;
  std::optional<double> fraction;
  std::optional<fs::path> out;
};

inline void apply_overrides(Manifest& m, const Overrides& o) {
  if (o.seed) m.seed = *o.seed;
  if (o.jobs) {
    if (*o.jobs < 1) throw Error(Errc::InvalidArgument, "--jobs must be >= 1");
    m.jobs = *o.jobs;
  }
  if (o.out) m.out_dir = fs::absolute(*o.out).lexically_normal();
  if (m.train) {
    auto& c = m.train->config;
    if (o.lambda) c.objective.lambda = *o.lambda;
    if (o.lambdas) c.lambda_sweep = *o.lambdas;
    if (o.no_flip) c.objective.apply_flip = false;
    if (o.drop_both_hallucinated) c.drop_both_hallucinated = true;
    if (o.fraction) c.data_fraction = *o.fraction;
  }
}

/// Verbosity-gated output: level 0 prints errors only.
struct Console {
  int verbosity = 1;
  std::ostream* out = &std::cout;

  void info(const std::string& s) const {
    if (verbosity >= 1) *out << s;
  }
  void debug(const std::string& s) const {
    if (verbosity >= 2) *out << s;
  }
};

inline std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

namespace detail {

inline PipelineManifest require_pipeline(const Manifest& m) {
  if (!m.pipeline) throw Error(Errc::Schema, "manifest has no 'pipeline' section");
  return *m.pipeline;
}

inline TrainManifest require_train(const Manifest& m) {
  if (!m.train) throw Error(Errc::Schema, "manifest has no 'train' section");
  return *m.train;
}

inline std::vector<RawRecord> read_raw(const fs::path& p) { return read_jsonl<RawRecord>(p, raw_from_json); }

/// Stages 1-2, shared by `pipeline` and `label` so verdict indices agree.
inline std::vector<PairView> clean_views(const PipelineManifest& p, CleanReport* report,
                                         std::vector<RawRecord>* cleaned = nullptr) {
  auto clean = extract_and_clean(read_raw(p.input), report);
  std::vector<PairView> views;
  views.reserve(clean.size());
  for (const auto& r : clean)
    views.push_back(p.slot_order == SlotOrder::Fixed ? normalize_pair_view(r, 0) : normalize_pair_view(r, p.order_seed));
  if (cleaned) *cleaned = std::move(clean);
  return views;
}

inline ojson histogram_json(const Dataset& d) {
  const auto h = histogram(d);
  ojson j = ojson::object();
  for (auto c : kAllConfigs) {
    auto it = h.find(c);
    j[std::string(to_string(c))] = it == h.end() ? 0 : it->second;
  }
  return j;
}

inline std::string views_jsonl(const std::vector<PairView>& v) {
  return dump_jsonl(v, [](const PairView& x) { return to_json(x); });
}

inline MockJudge load_mock_judge(const JudgeManifest& j) {
  if (!j.mock_table) return MockJudge();
  try {
    return MockJudge::from_json(nlohmann::json::parse(read_text_file(*j.mock_table)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Schema, j.mock_table->string() + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

struct PipelineOutcome {
  Dataset dataset;
  ojson summary;
};

inline PipelineOutcome run_pipeline(const Manifest& m, const Console& con = {}) {
  const auto p = detail::require_pipeline(m);
  const fs::path dir = m.pipeline_dir();
  ojson stages;

  CleanReport cr;
  std::vector<RawRecord> clean;
  auto views = detail::clean_views(p, &cr, &clean);
  stages["1_clean"] = {{"input", cr.input}, {"blank", cr.empty}, {"degenerate", cr.degenerate},
                       {"duplicates", cr.duplicates}, {"kept", cr.kept}};
  write_text_file(dir / "01_clean.jsonl", dump_jsonl(clean, [](const RawRecord& r) { return to_json(r); }));
  stages["2_views"] = views.size();
  write_text_file(dir / "02_views.jsonl", detail::views_jsonl(views));

  const auto lines = read_jsonl<VerdictLine>(p.verdicts, verdict_from_json);
  LabelReport lr;
  views = apply_verdicts(std::move(views), lines, &lr);
  stages["3_label"] = {{"labeled", lr.labeled}, {"unlabeled", lr.unlabeled}};
  write_text_file(dir / "03_labeled.jsonl", detail::views_jsonl(views));

  Dataset dpo;
  for (const auto& v : views)
    if (v.has_labels()) dpo.push_back(to_dpo_record(v));
  stages["4_dpo"] = dpo.size();
  write_pairs(dir / "04_dpo.jsonl", dpo);

  Dataset synthetic;
  if (p.synthesize && p.synthetic_count > 0) {
    SynthesisReport sr;
    std::unique_ptr<Corruptor> corruptor;
    HttpTransport transport;
    if (p.llm_corruptor) {
      corruptor = std::make_unique<LlmCorruptor>(m.judge.endpoint, transport);
    } else {
      std::vector<std::string> texts;
      for (const auto& r : clean) {
        texts.push_back(r.chosen);
        texts.push_back(r.rejected);
      }
      corruptor = std::make_unique<RuleBasedCorruptor>(p.strategies, extract_entity_table(texts));
    }
    const std::size_t jobs = p.llm_corruptor ? m.judge.endpoint.max_in_flight : m.jobs;
    synthetic = synthesize_many(dpo, *corruptor, p.synthetic_count, p.source_configs, derive_seed(m.seed, "synthesize"),
                                jobs, &sr);
    stages["5_synthesize"] = {{"requested", sr.requested}, {"produced", sr.produced}, {"inapplicable", sr.inapplicable}};
  } else {
    stages["5_synthesize"] = {{"requested", 0}, {"produced", 0}, {"inapplicable", 0}};
  }
  write_pairs(dir / "05_synthetic.jsonl", synthetic);

  Dataset data = merge(dpo, synthetic);
  stages["6_merge"] = data.size();
  write_pairs(dir / "06_merged.jsonl", data);

  if (p.balance) data = balance(data, p.mix, derive_seed(m.seed, "balance"));
  stages["7_balance"] = data.size();
  write_pairs(dir / "07_balanced.jsonl", data);

  OrientReport orr;
  if (p.orient) data = orient(data, &orr);
  stages["8_orient"] = data.size();
  write_pairs(dir / "dataset.jsonl", data);

  ojson summary;
  summary["stages"] = stages;
  summary["flipped"] = orr.flipped;
  summary["histogram"] = detail::histogram_json(data);
  if (p.split) {
    const auto split = stratified_split(data, p.eval_fraction, derive_seed(m.seed, "split"));
    write_pairs(dir / "train.jsonl", split.train);
    write_pairs(dir / "eval.jsonl", split.eval);
    summary["split"] = {{"train", split.train.size()}, {"eval", split.eval.size()}};
  }
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  con.info("pipeline: " + std::to_string(data.size()) + " records, " + std::to_string(orr.flipped) +
           " flipped, histogram " + summary["histogram"].dump() + "\n");
  con.debug(summary.dump(2) + "\n");
  return {std::move(data), std::move(summary)};
}

// ---------------------------------------------------------------------------
// label
// ---------------------------------------------------------------------------

struct LabelOutcome {
  std::size_t existing = 0;
  std::size_t written = 0;
  std::size_t unparseable = 0;
};

/// Queries the binary judge for every (record, slot) of the cleaned corpus
/// and appends verdict lines to the pipeline's verdict file. Keys already in
/// the file are skipped, so an interrupted run resumes where it stopped.
inline LabelOutcome run_label(const Manifest& m, bool mock, const Console& con = {},
                              Transport* transport_override = nullptr, Sleeper sleep = real_sleep) {
  const auto p = detail::require_pipeline(m);
  const auto views = detail::clean_views(p, nullptr);
  LabelOutcome out;
  std::set<std::pair<std::size_t, int>> done;
  if (fs::exists(p.verdicts)) {
    for (const auto& l : read_jsonl<VerdictLine>(p.verdicts, verdict_from_json)) done.emplace(l.record_index, l.slot);
    out.existing = done.size();
  }
  struct Task {
    std::size_t record;
    int slot;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < views.size(); ++i)
    for (int s : {0, 1})
      if (!done.count({i, s})) tasks.push_back({i, s});

  HttpTransport http;
  Transport& transport = transport_override ? *transport_override : http;
  std::unique_ptr<Judge> judge;
  if (mock) judge = std::make_unique<MockJudge>(detail::load_mock_judge(m.judge));
  else judge = std::make_unique<LlmJudge>(m.judge.endpoint, transport, sleep);

  if (p.verdicts.has_parent_path()) fs::create_directories(p.verdicts.parent_path());
  std::ofstream file(p.verdicts, std::ios::binary | std::ios::app);
  if (!file) throw Error(Errc::Io, "cannot write '" + p.verdicts.string() + "'");
  const std::size_t chunk = std::max<std::size_t>(1, mock ? m.jobs : m.judge.endpoint.max_in_flight);
  for (std::size_t start = 0; start < tasks.size(); start += chunk) {
    const std::size_t n = std::min(chunk, tasks.size() - start);
    std::vector<std::optional<VerdictLine>> lines(n);
    std::exception_ptr failure;
    try {
      parallel_for(n, chunk, [&](std::size_t k) {
        const auto& t = tasks[start + k];
        const auto& v = views[t.record];
        VerdictLine line{t.record, t.slot, std::nullopt, ""};
        const auto reply = judge->raw_reply(PromptKind::BinaryJudge, v.prompt, t.slot == 0 ? v.response_0 : v.response_1);
        try {
          line.verdict = parse_binary(reply).binary_value();
        } catch (const Error& e) {
          if (e.code() != Errc::Unparseable) throw;
          line.error = "unparseable";
        }
        lines[k] = std::move(line);
      });
    } catch (...) {
      failure = std::current_exception();
    }
    // Completed lines are kept even when a sibling request failed.
    for (auto& l : lines) {
      if (!l) continue;
      file << to_json(*l).dump() << '\n';
      ++out.written;
      if (!l->verdict) ++out.unparseable;
    }
    file.flush();
    if (failure) std::rethrow_exception(failure);
  }
  con.info("label: " + std::to_string(out.written) + " new verdicts (" + std::to_string(out.existing) +
           " already present, " + std::to_string(out.unparseable) + " unparseable)\n");
  return out;
}

// ---------------------------------------------------------------------------
// train / sweep / ablate
// ---------------------------------------------------------------------------

struct Problem {
  Dataset train;
  Dataset eval;
  std::unique_ptr<CandidateIndex> index;
  EvalSpec spec;
  TrainConfig config;
};

inline Problem load_problem(const Manifest& m) {
  const auto t = detail::require_train(m);
  Problem pr;
  pr.train = read_pairs(m.train_data());
  if (const auto e = m.eval_data()) pr.eval = read_pairs(*e);
  auto sets = read_candidate_sets(t.candidates);
  if (t.augment_candidates) {
    sets = augment_candidate_sets(std::move(sets), pr.train);
    sets = augment_candidate_sets(std::move(sets), pr.eval);
  }
  pr.index = std::make_unique<CandidateIndex>(std::move(sets), FeatureMap(t.feature_dim, t.salt));
  // Without held-out pairs the margin is measured in-sample.
  pr.spec = make_eval_spec(*pr.index, pr.eval.empty() ? pr.train : pr.eval);
  pr.config = t.config;
  pr.config.shuffle_seed = derive_seed(m.seed, "train");
  pr.config.jobs = m.jobs;
  pr.config.validate();
  return pr;
}

inline void write_run(const fs::path& dir, const CandidateIndex& index, const TrainResult& run,
                      const EvalReport& report) {
  save_checkpoint(dir / "params.ckpt", index.feature_map(), run.params);
  write_text_file(dir / "history.jsonl", history_jsonl(run.history));
  emit_report(dir, report);
}

inline std::string system_label(const TrainConfig& c) {
  std::string s = fdpo_label(c.objective.lambda);
  if (!c.objective.apply_flip) s.insert(s.size() - 1, ", no flip");
  return s;
}

/// One training run. With `standard_dpo` the run uses the plain DPO objective
/// on the data as given.
inline EvalReport run_train(const Manifest& m, bool standard_dpo = false, const Console& con = {}) {
  auto pr = load_problem(m);
  TrainConfig cfg = pr.config;
  if (standard_dpo) {
    cfg.objective.lambda = 0.0;
    cfg.objective.apply_flip = false;
  }
  const auto run = standard_dpo ? train_standard_dpo(pr.train, *pr.index, cfg) : train(pr.train, *pr.index, cfg);
  auto ev = evaluate_policy(standard_dpo ? std::string(kStandardDpoLabel) : system_label(cfg), run, *pr.index,
                            pr.spec, cfg);
  write_run(m.out_dir / "train", *pr.index, run, ev.report);
  con.info(render_table({ev.report}));
  return ev.report;
}

inline std::string dir_name_for_lambda(double lambda) { return "lambda_" + fmt_g(lambda); }

inline SweepResult run_sweep(const Manifest& m, const Console& con = {}) {
  auto pr = load_problem(m);
  auto res = sweep_lambda(pr.train, *pr.index, pr.config, pr.config.lambda_sweep, pr.spec);
  const fs::path dir = m.out_dir / "sweep";
  write_run(dir / "standard_dpo", *pr.index, res.baseline_run, res.baseline);
  std::vector<std::pair<double, EvalReport>> rows;
  std::vector<EvalReport> reports{res.baseline};
  for (const auto& pt : res.points) {
    write_run(dir / dir_name_for_lambda(pt.lambda), *pr.index, pt.run, pt.report);
    rows.emplace_back(pt.lambda, pt.report);
    reports.push_back(pt.report);
  }
  write_text_file(dir / "sweep.csv", sweep_csv(rows));
  const auto table = render_table(reports);
  write_text_file(dir / "report.txt", table);
  con.info(table);
  return res;
}

inline std::string slug(std::string s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

inline std::vector<EvalReport> run_ablate_flip(const Manifest& m, const Console& con = {}) {
  auto pr = load_problem(m);
  const auto cells = ablate_flip(pr.train, *pr.index, pr.config, pr.spec);
  const fs::path dir = m.out_dir / "ablate" / "flip";
  std::vector<EvalReport> reports;
  for (const auto& c : cells) {
    write_run(dir / slug(c.label), *pr.index, c.run, c.report);
    reports.push_back(c.report);
  }
  const auto table = render_table(reports);
  write_text_file(dir / "report.txt", table);
  con.info(table);
  return reports;
}

inline EvalReport run_ablate_remove_11(const Manifest& m, const Console& con = {}) {
  auto pr = load_problem(m);
  const auto res = ablate_remove_11(pr.train, *pr.index, pr.config, pr.spec);
  const fs::path dir = m.out_dir / "ablate" / "remove-11";
  write_run(dir, *pr.index, res.run, res.report);
  const double reduction =
      100.0 * (1.0 - static_cast<double>(res.report.train_records) / static_cast<double>(res.report.input_records));
  const std::string note = "retained " + std::to_string(res.report.train_records) + "/" +
                           std::to_string(res.report.input_records) + " records (" + format_fixed(reduction, 1) +
                           "% reduction)\n";
  write_text_file(dir / "report.txt", render_table({res.report}) + note);
  con.info(render_table({res.report}) + note);
  return res.report;
}

inline std::vector<EvalReport> run_ablate_fraction(const Manifest& m, std::optional<double> only, const Console& con = {}) {
  auto pr = load_problem(m);
  const auto fractions = only ? std::vector<double>{*only} : detail::require_train(m).fractions;
  const fs::path dir = m.out_dir / "ablate" / "fraction";
  std::vector<EvalReport> reports;
  for (double f : fractions) {
    TrainConfig cfg = pr.config;
    cfg.data_fraction = f;
    const auto run = train(pr.train, *pr.index, cfg);
    auto rep = evaluate_policy("F-DPO (" + fmt_g(100.0 * f) + "% data)", run, *pr.index, pr.spec, cfg).report;
    write_run(dir / ("fraction_" + fmt_g(f)), *pr.index, run, rep);
    reports.push_back(std::move(rep));
  }
  const auto table = render_table(reports);
  write_text_file(dir / "report.txt", table);
  con.info(table);
  return reports;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Collects every report.json under `roots` (sorted by path) and renders the
/// comparison table; systems seen more than once (one per seed) also get a
/// mean ± SE table. Written to <out_dir>/report.txt.
inline std::string run_report(const Manifest& m, std::vector<fs::path> roots, const Console& con = {}) {
  if (roots.empty()) roots.push_back(m.out_dir);
  std::vector<fs::path> files;
  for (const auto& r : roots) {
    if (!fs::exists(r)) throw Error(Errc::Io, "no such run directory '" + r.string() + "'");
    for (const auto& e : fs::recursive_directory_iterator(r))
      if (e.is_regular_file() && e.path().filename() == "report.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(Errc::Io, "no report.json found");
  std::vector<EvalReport> reports;
  for (const auto& f : files) reports.push_back(load_report(f));
  std::string text = render_table(reports);
  std::set<std::string> names;
  bool repeated = false;
  for (const auto& r : reports) repeated = repeated || !names.insert(r.system).second;
  if (repeated) text += "\n" + render_seed_table(reports);
  write_text_file(m.out_dir / "report.txt", text);
  con.info(text);
  return text;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

inline void generate_toy(const fs::path& dir, std::uint64_t seed) {
  const auto toy = synthetic::make_toy_corpus(seed);
  write_text_file(dir / "raw.jsonl", dump_jsonl(toy.raw, [](const RawRecord& r) { return to_json(r); }));
  write_candidate_sets(dir / "candidates.jsonl", toy.candidates);
  std::map<std::string, std::string> sorted(toy.judge_table.begin(), toy.judge_table.end());
  write_text_file(dir / "mock_judge.json", ojson(sorted).dump(1) + "\n");
}

inline void generate_benchmark(const fs::path& dir, std::uint64_t seed) {
  const auto b = synthetic::make_benchmark(seed);
  write_candidate_sets(dir / "candidates.jsonl", b.candidates);
  write_pairs(dir / "pairs.jsonl", b.pairs);
}

}  // namespace fdpo::app
