#pragma once

// Evaluation metrics and report serialisation.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fdpo/core.hpp"
#include "fdpo/io.hpp"
#include "fdpo/judge.hpp"
#include "fdpo/objective.hpp"
#include "fdpo/policy.hpp"

namespace fdpo {

struct ScoredResponse {
  std::string prompt_id;
  std::string response;
  double score = 0.0;
  std::string system;
};

namespace detail {

inline void check_scores(std::span<const double> scores) {
  if (scores.empty()) throw Error(Errc::EmptyInput, "no scores");
  for (double s : scores)
    if (!(s >= 0.0 && s <= 10.0)) throw Error(Errc::OutOfRange, "score outside [0,10]");
}

inline std::vector<double> scores_of(std::span<const ScoredResponse> rs) {
  std::vector<double> out;
  out.reserve(rs.size());
  for (const auto& r : rs) out.push_back(r.score);
  return out;
}

}  // namespace detail

/// Mean judge score.
inline double factuality_score(std::span<const double> scores) {
  detail::check_scores(scores);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

inline double factuality_score(std::span<const ScoredResponse> scored) {
  return factuality_score(detail::scores_of(scored));
}

/// Fraction of responses scoring strictly below 5.
inline double hallucination_rate(std::span<const double> scores) {
  detail::check_scores(scores);
  std::size_t bad = 0;
  for (double s : scores) bad += is_hallucinated(s) ? 1 : 0;
  return static_cast<double>(bad) / static_cast<double>(scores.size());
}

inline double hallucination_rate(std::span<const ScoredResponse> scored) {
  return hallucination_rate(detail::scores_of(scored));
}

inline double win_rate(std::size_t wins, std::size_t losses) {
  if (wins + losses == 0) throw Error(Errc::NoDecisiveComparisons, "no wins or losses");
  return static_cast<double>(wins) / static_cast<double>(wins + losses);
}

struct WinLoss {
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
};

/// Per-prompt comparison of two systems' scores; ties are counted apart and
/// excluded from the win rate.
inline WinLoss compare_scores(std::span<const double> system, std::span<const double> baseline) {
  if (system.size() != baseline.size()) throw Error(Errc::InvalidArgument, "score lists differ in length");
  WinLoss w;
  for (std::size_t i = 0; i < system.size(); ++i) {
    if (system[i] > baseline[i]) ++w.wins;
    else if (system[i] < baseline[i]) ++w.losses;
    else ++w.ties;
  }
  return w;
}

/// Mean preference margin m over evaluation pairs.
inline double reward_margin(const PolicyParams& params, const ReferenceSnapshot& reference,
                            std::span<const EncodedSet> sets, std::span<const PolicyPair> pairs) {
  if (pairs.empty()) throw Error(Errc::EmptyInput, "no evaluation pairs");
  double sum = 0.0;
  for (const auto& p : pairs) {
    const auto lp = pair_log_probs(params, reference, sets, p);
    sum += dpo_margin(lp.lp_w, lp.lp_l, lp.ref_lp_w, lp.ref_lp_l);
  }
  return sum / static_cast<double>(pairs.size());
}

/// Mean over prompts of the policy probability placed on candidates labelled
/// hallucinated. A toy-scale stand-in for the judge-based hallucination rate.
inline double hallucinated_mass(const PolicyParams& params, std::span<const EncodedSet> encoded,
                                std::span<const CandidateSet> sets) {
  if (encoded.size() != sets.size()) throw Error(Errc::InvalidArgument, "encoded/candidate set count mismatch");
  if (sets.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const auto probs = probabilities(params, encoded[s]);
    double mass = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (sets[s].candidates[i].h == 1) mass += probs[i];
    total += mass;
  }
  return total / static_cast<double>(sets.size());
}

/// Highest-scoring candidate; the lowest index wins ties.
inline std::size_t greedy_choice(const PolicyParams& params, const EncodedSet& set) {
  const auto s = candidate_scores(params, set);
  return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
}

/// Judge score of a candidate; unscored candidates count as 10 when factual
/// and 0 when hallucinated.
inline double candidate_judge_score(const Candidate& c) {
  if (c.score) return *c.score;
  return c.h == 0 ? 10.0 : 0.0;
}

/// Judge score of the response the policy would produce for each prompt.
inline std::vector<double> greedy_scores(const PolicyParams& params, std::span<const EncodedSet> encoded,
                                         std::span<const CandidateSet> sets) {
  std::vector<double> out;
  out.reserve(sets.size());
  for (std::size_t s = 0; s < sets.size(); ++s)
    out.push_back(candidate_judge_score(sets[s].candidates[greedy_choice(params, encoded[s])]));
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation across seeds
// ---------------------------------------------------------------------------

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;  // sample standard deviation / sqrt(n); 0 when n == 1
  std::size_t n = 0;
};

inline MeanSe mean_se(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::EmptyInput, "no values to aggregate");
  MeanSe r;
  r.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(r.n);
  if (r.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(r.n - 1)) / std::sqrt(static_cast<double>(r.n));
  }
  return r;
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string format_mean_se(const MeanSe& m, int digits = 3) {
  return format_fixed(m.mean, digits) + "±" + format_fixed(m.se, digits);
}

// ---------------------------------------------------------------------------
// report.json
// ---------------------------------------------------------------------------

inline constexpr int kReportVersion = 1;

inline ojson to_json(const EvalReport& r) {
  ojson j;
  j["schema"] = "fdpo-report";
  j["version"] = kReportVersion;
  j["system"] = r.system;
  j["factuality_score"] = r.factuality_score;
  j["hallucination_rate"] = r.hallucination_rate;
  j["win_rate"] = r.win_rate ? ojson(*r.win_rate) : ojson(nullptr);
  j["reward_margin"] = r.reward_margin;
  j["hallucinated_mass"] = r.hallucinated_mass;
  j["beta"] = r.beta;
  j["lambda"] = r.lambda;
  j["flip"] = r.flip;
  j["train_records"] = r.train_records;
  j["input_records"] = r.input_records;
  ojson pc = ojson::object();
  for (const auto& [c, b] : r.per_config) pc[std::string(to_string(c))] = {{"count", b.count}, {"reward_margin", b.reward_margin}};
  j["per_config"] = pc;
  return j;
}

inline EvalReport report_from_json(const ojson& j) {
  try {
    if (j.at("schema") != "fdpo-report") throw Error(Errc::Schema, "not an fdpo report");
    if (j.at("version") != kReportVersion) throw Error(Errc::Schema, "unsupported report version");
    EvalReport r;
    r.system = j.at("system").get<std::string>();
    r.factuality_score = j.at("factuality_score").get<double>();
    r.hallucination_rate = j.at("hallucination_rate").get<double>();
    if (!j.at("win_rate").is_null()) r.win_rate = j.at("win_rate").get<double>();
    r.reward_margin = j.at("reward_margin").get<double>();
    r.hallucinated_mass = j.at("hallucinated_mass").get<double>();
    r.beta = j.at("beta").get<double>();
    r.lambda = j.at("lambda").get<double>();
    r.flip = j.at("flip").get<bool>();
    r.train_records = j.at("train_records").get<std::size_t>();
    r.input_records = j.at("input_records").get<std::size_t>();
    for (auto it = j.at("per_config").begin(); it != j.at("per_config").end(); ++it)
      r.per_config[config_from_string(it.key())] = {it->at("count").get<std::size_t>(),
                                                    it->at("reward_margin").get<double>()};
    return r;
  } catch (const ojson::exception& e) {
    throw Error(Errc::Schema, std::string("bad report: ") + e.what());
  }
}

inline EvalReport load_report(const std::filesystem::path& path) {
  try {
    return report_from_json(ojson::parse(read_text_file(path)));
  } catch (const ojson::exception& e) {
    throw Error(Errc::Schema, path.string() + ": " + e.what());
  }
}

/// Table with one row per report, ordered by system label.
inline std::string render_table(std::vector<EvalReport> reports) {
  std::stable_sort(reports.begin(), reports.end(),
                   [](const EvalReport& a, const EvalReport& b) { return a.system < b.system; });
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.system.size());
  std::ostringstream os;
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
  os << pad("System") << "  Fact.\xE2\x86\x91  Hal.\xE2\x86\x93  Win\xE2\x86\x91   Margin    HalMass\n";
  for (const auto& r : reports) {
    os << pad(r.system) << "  " << format_fixed(r.factuality_score, 2) << "   " << format_fixed(r.hallucination_rate, 3)
       << "  " << (r.win_rate ? format_fixed(*r.win_rate, 2) : std::string("  --")) << "  "
       << format_fixed(r.reward_margin, 4) << "  " << format_fixed(r.hallucinated_mass, 4) << "\n";
  }
  return os.str();
}

/// Mean ± standard error across runs, grouped by system label.
inline std::string render_seed_table(const std::vector<EvalReport>& reports) {
  std::map<std::string, std::vector<const EvalReport*>> groups;
  for (const auto& r : reports) groups[r.system].push_back(&r);
  std::ostringstream os;
  os << "System | Fact. \xE2\x86\x91 | Hal. \xE2\x86\x93 | Win \xE2\x86\x91 | n\n";
  for (const auto& [name, rs] : groups) {
    std::vector<double> fact, hal, win;
    for (const auto* r : rs) {
      fact.push_back(r->factuality_score);
      hal.push_back(r->hallucination_rate);
      if (r->win_rate) win.push_back(*r->win_rate);
    }
    os << name << " | " << format_mean_se(mean_se(fact)) << " | " << format_mean_se(mean_se(hal)) << " | "
       << (win.size() == rs.size() ? format_mean_se(mean_se(win)) : std::string("-")) << " | " << rs.size() << "\n";
  }
  return os.str();
}

inline void emit_report(const std::filesystem::path& dir, const EvalReport& report) {
  write_text_file(dir / "report.json", to_json(report).dump(2) + "\n");
  write_text_file(dir / "report.txt", render_table({report}));
}

inline std::string sweep_csv(const std::vector<std::pair<double, EvalReport>>& rows) {
  std::ostringstream os;
  os << "lambda,factuality_score,hallucination_rate,win_rate,reward_margin\n";
  char buf[256];
  for (const auto& [lambda, r] : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,", lambda, r.factuality_score, r.hallucination_rate);
    os << buf;
    if (r.win_rate) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.win_rate);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g\n", r.reward_margin);
    os << buf;
  }
  return os.str();
}

}  // namespace fdpo
