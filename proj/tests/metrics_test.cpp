#include <gtest/gtest.h>

#include <cmath>

#include "fdpo/metrics.hpp"
#include "random_problem.hpp"
#include "test_support.hpp"

using namespace fdpo;

TEST(FactualityScore, Means) {
  EXPECT_EQ(factuality_score(std::vector<double>(7, 10.0)), 10.0);
  EXPECT_EQ(factuality_score(std::vector<double>{4, 6}), 5.0);
  EXPECT_ERRC(factuality_score(std::vector<double>{}), EmptyInput);
  EXPECT_ERRC(factuality_score(std::vector<double>{11}), OutOfRange);
}

TEST(FactualityScore, FiftyItemFixtureAgainstRunningSum) {
  std::vector<double> s;
  for (int i = 0; i < 50; ++i) s.push_back((i * 37 % 101) / 10.1);
  long double sum = 0;
  for (double v : s) sum += v;
  EXPECT_NEAR(factuality_score(s), static_cast<double>(sum / 50), 1e-12);
  auto shuffled = s;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_NEAR(factuality_score(shuffled), factuality_score(s), 1e-12);
}

TEST(HallucinationRate, StrictThreshold) {
  EXPECT_EQ(hallucination_rate(std::vector<double>{5, 6, 10}), 0.0);
  EXPECT_EQ(hallucination_rate(std::vector<double>{4, 4, 6, 8}), 0.5);
  EXPECT_EQ(hallucination_rate(std::vector<double>{5.0}), 0.0);
  EXPECT_EQ(hallucination_rate(std::vector<double>{4.999}), 1.0);
  const std::vector<ScoredResponse> rs{{"a", "x", 2.0, "s"}, {"b", "y", 9.0, "s"}};
  EXPECT_EQ(hallucination_rate(rs), 0.5);
  EXPECT_EQ(factuality_score(rs), 5.5);
}

TEST(WinRate, Cases) {
  EXPECT_EQ(win_rate(7, 3), 0.7);
  EXPECT_EQ(win_rate(0, 5), 0.0);
  EXPECT_ERRC(win_rate(0, 0), NoDecisiveComparisons);
  const std::vector<double> a{8, 5, 7, 2}, b{6, 5, 9, 1};
  const auto ab = compare_scores(a, b), ba = compare_scores(b, a);
  EXPECT_EQ(ab.wins, 2u);
  EXPECT_EQ(ab.losses, 1u);
  EXPECT_EQ(ab.ties, 1u);
  EXPECT_DOUBLE_EQ(win_rate(ab.wins, ab.losses) + win_rate(ba.wins, ba.losses), 1.0);
}

TEST(RewardMargin, ZeroAtReferenceAndAntisymmetric) {
  std::mt19937_64 g(2);
  auto p = test::random_problem(g, 8, 4, 20);
  EXPECT_EQ(reward_margin(p.params, snapshot_reference(p.params), p.sets, p.pairs), 0.0);
  auto swapped = p.pairs;
  for (auto& q : swapped) std::swap(q.chosen, q.rejected);
  const auto ref = snapshot_reference(p.ref);
  EXPECT_NEAR(reward_margin(p.params, ref, p.sets, swapped), -reward_margin(p.params, ref, p.sets, p.pairs), 1e-12);
  EXPECT_ERRC(reward_margin(p.params, ref, p.sets, std::vector<PolicyPair>{}), EmptyInput);
}

TEST(RewardMargin, PositiveAfterOneStep) {
  std::vector<EncodedSet> sets{EncodedSet{{{{0}, {1.0}}, {{1}, {1.0}}, {{2}, {1.0}}}}};
  const std::vector<PolicyPair> pair{{0, 0, 1, DeltaH(1)}};
  PolicyParams p(3);
  const auto ref = snapshot_reference(p);
  ObjectiveConfig c;
  const auto grad = fdpo_loss_grad(pair, c, p, ref, sets);
  for (std::size_t k = 0; k < 3; ++k) p.weights[k] -= 0.5 * grad[k];
  EXPECT_GT(reward_margin(p, ref, sets, pair), 0.0);
}

TEST(HallucinatedMass, Oracles) {
  std::vector<EncodedSet> enc{EncodedSet{{{{0}, {1.0}}, {{1}, {1.0}}, {{2}, {1.0}}}}};
  std::vector<CandidateSet> sets{{"q", {{"a", 1}, {"b", 0}, {"c", 0}}}};
  const PolicyParams p(std::vector<double>{2, 0, 0});
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(hallucinated_mass(p, enc, sets), e2 / (e2 + 2), 1e-15);
  EXPECT_NEAR(hallucinated_mass(p, enc, sets), 0.7869860421615985, 1e-15);
  sets[0].candidates = {{"a", 1}, {"b", 0}, {"c", 1}};
  std::vector<EncodedSet> enc4{EncodedSet{{{{0}, {1.0}}, {{1}, {1.0}}, {{2}, {1.0}}, {{3}, {1.0}}}}};
  std::vector<CandidateSet> half{{"q", {{"a", 1}, {"b", 0}, {"c", 1}, {"d", 0}}}};
  EXPECT_NEAR(hallucinated_mass(PolicyParams(4), enc4, half), 0.5, 1e-15);
  for (auto& c : half[0].candidates) c.h = 0;
  EXPECT_EQ(hallucinated_mass(PolicyParams(4), enc4, half), 0.0);
  for (auto& c : half[0].candidates) c.h = 1;
  EXPECT_NEAR(hallucinated_mass(PolicyParams(4), enc4, half), 1.0, 1e-15);
}

TEST(Greedy, LowestIndexWinsTies) {
  EncodedSet s{{{{0}, {1.0}}, {{1}, {1.0}}, {{2}, {1.0}}}};
  EXPECT_EQ(greedy_choice(PolicyParams(3), s), 0u);
  EXPECT_EQ(greedy_choice(PolicyParams(std::vector<double>{0, 1, 1}), s), 1u);
  EXPECT_EQ(candidate_judge_score({"x", 1, std::nullopt}), 0.0);
  EXPECT_EQ(candidate_judge_score({"x", 0, std::nullopt}), 10.0);
  EXPECT_EQ(candidate_judge_score({"x", 0, 7.5}), 7.5);
}

TEST(MeanSe, Format) {
  const auto m = mean_se(std::vector<double>{1.0, 2.0, 3.0});
  EXPECT_EQ(m.mean, 2.0);
  EXPECT_NEAR(m.se, 1.0 / std::sqrt(3.0), 1e-15);
  EXPECT_EQ(format_mean_se(m), "2.000±0.577");
  EXPECT_EQ(mean_se(std::vector<double>{4.0}).se, 0.0);
}

namespace {

EvalReport sample(const std::string& name, double fact) {
  EvalReport r;
  r.system = name;
  r.factuality_score = fact;
  r.hallucination_rate = 0.1 + 0.2;
  r.win_rate = 2.0 / 3.0;
  r.reward_margin = -0.0123456789;
  r.hallucinated_mass = 0.25;
  r.beta = 0.1;
  r.lambda = 10;
  r.flip = true;
  r.train_records = 450;
  r.input_records = 480;
  r.per_config[FactualityConfig::BothFactual] = {150, 0.5};
  r.per_config[FactualityConfig::BothHallucinated] = {100, -1e-17};
  return r;
}

}  // namespace

TEST(Report, RoundTripThroughFiles) {
  const auto dir = test::scratch_dir("report");
  auto r = sample("F-DPO", 7.25);
  emit_report(dir, r);
  EXPECT_EQ(load_report(dir / "report.json"), r);
  r.win_rate.reset();
  emit_report(dir, r);
  EXPECT_EQ(load_report(dir / "report.json"), r);
  EXPECT_NE(read_text_file(dir / "report.txt").find("Fact."), std::string::npos);
  EXPECT_ERRC(report_from_json(ojson::parse(R"({"schema":"other"})")), Schema);
}

TEST(Report, TableOrderedBySystem) {
  const auto a = render_table({sample("b", 1), sample("a", 2), sample("c", 3)});
  const auto b = render_table({sample("c", 3), sample("a", 2), sample("b", 1)});
  EXPECT_EQ(a, b);
  EXPECT_LT(a.find("\na "), a.find("\nb "));
  EXPECT_LT(a.find("\nb "), a.find("\nc "));
}

TEST(Report, SeedTableUsesMeanSe) {
  const auto t = render_seed_table({sample("x", 6), sample("x", 7), sample("x", 8)});
  EXPECT_NE(t.find("x | 7.000±0.577 | 0.300±0.000 | 0.667±0.000 | 3"), std::string::npos) << t;
}

TEST(Report, SweepCsvColumns) {
  auto with = sample("a", 5), without = sample("b", 6);
  without.win_rate.reset();
  const auto csv = sweep_csv({{0.0, with}, {2.0, without}});
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "lambda,factuality_score,hallucination_rate,win_rate,reward_margin");
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 4), "0,5,");
  std::getline(is, line);
  EXPECT_NE(line.find(",,"), std::string::npos);
}
