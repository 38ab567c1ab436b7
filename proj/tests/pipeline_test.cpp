#include <gtest/gtest.h>

#include <set>

#include "fdpo/pipeline.hpp"
#include "fdpo/synthetic.hpp"
#include "test_support.hpp"

using namespace fdpo;
using fdpo::test::make_pair;

namespace {

/// `n` distinct pairs in configuration (hw, hl).
Dataset bucket(int hw, int hl, std::size_t n, const std::string& tag = "") {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i)
    d.push_back(make_pair("p" + tag + std::to_string(hw) + std::to_string(hl) + "-" + std::to_string(i), "w", "l", hw, hl));
  return d;
}

Dataset concat(std::initializer_list<Dataset> parts) {
  Dataset out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::multiset<std::string> ids(const Dataset& d) {
  std::multiset<std::string> s;
  for (const auto& p : d) s.insert(record_id(p));
  return s;
}

}  // namespace

TEST(Stage1, DropsBlankDegenerateAndDuplicates) {
  std::vector<RawRecord> in{{"q", "a", "b"}, {"q", "a", "b"}, {" ", "a", "b"}, {"q", "x", "x"}, {"q2", "a", "b"}};
  CleanReport r;
  const auto out = extract_and_clean(in, &r);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1].prompt, "q2");
  EXPECT_EQ(r.duplicates, 1u);
  EXPECT_EQ(r.empty, 1u);
  EXPECT_EQ(r.degenerate, 1u);
  EXPECT_EQ(r.kept, 2u);
}

TEST(Stage2, SlotAssignmentRoundTripsThroughStage4) {
  const RawRecord rec{"q", "good", "bad"};
  for (int slot : {0, 1}) {
    auto v = normalize_pair_view(rec, slot);
    EXPECT_EQ(v.better_response_id, slot);
    EXPECT_EQ(slot == 0 ? v.response_0 : v.response_1, "good");
    v = attach_labels(v, slot == 0 ? std::pair{JudgeVerdict::binary(0), JudgeVerdict::binary(1)}
                                   : std::pair{JudgeVerdict::binary(1), JudgeVerdict::binary(0)});
    const auto p = to_dpo_record(v);
    EXPECT_EQ(p.chosen, "good");
    EXPECT_EQ(p.h_chosen, 0);
    EXPECT_EQ(p.h_rejected, 1);
    EXPECT_EQ(p.source, Source::Real);
  }
  EXPECT_ERRC(normalize_pair_view(rec, 2), InvalidArgument);
  EXPECT_ERRC(to_dpo_record(normalize_pair_view(rec, 0)), MissingLabels);
  EXPECT_EQ(chosen_slot_for(rec, 7), chosen_slot_for(rec, 7));
}

TEST(Stage2, SeededSlotsUseBothPositions) {
  int ones = 0;
  for (int i = 0; i < 200; ++i) ones += chosen_slot_for({"q" + std::to_string(i), "a", "b"}, 3);
  EXPECT_GT(ones, 60);
  EXPECT_LT(ones, 140);
}

TEST(Stage3, ScoreVerdictRejectedForBinaryLabels) {
  EXPECT_ERRC(attach_labels(normalize_pair_view(RawRecord{"q", "a", "b"}, 0),
                            {JudgeVerdict::score(7), JudgeVerdict::binary(0)}),
              NonBinaryVerdict);
}

TEST(Stage3, ApplyVerdictsHandlesMissingUnparseableAndConflicts) {
  std::vector<PairView> views{normalize_pair_view(RawRecord{"q0", "a", "b"}, 0),
                              normalize_pair_view(RawRecord{"q1", "a", "b"}, 1),
                              normalize_pair_view(RawRecord{"q2", "a", "b"}, 0)};
  std::vector<VerdictLine> lines{{0, 0, 0, ""}, {0, 1, 1, ""}, {1, 0, std::nullopt, "unparseable"}, {1, 1, 0, ""},
                                 {2, 0, 1, ""}};
  LabelReport r;
  const auto out = apply_verdicts(views, lines, &r);
  EXPECT_EQ(r.labeled, 1u);
  EXPECT_EQ(r.unlabeled, 2u);
  EXPECT_TRUE(out[0].has_labels());
  EXPECT_FALSE(out[1].has_labels());
  lines.push_back({0, 0, 1, ""});
  EXPECT_ERRC(apply_verdicts(views, lines, nullptr), Schema);
  EXPECT_ERRC(apply_verdicts(views, {{9, 0, 0, ""}}, nullptr), Schema);
}

TEST(VerdictJson, RoundTripAndNullVerdict) {
  VerdictLine ok{3, 1, 0, ""};
  EXPECT_EQ(to_json(ok).dump(), R"({"record_index":3,"slot":1,"verdict":0})");
  EXPECT_EQ(verdict_from_json(to_json(ok)), ok);
  VerdictLine bad{3, 0, std::nullopt, "unparseable"};
  EXPECT_EQ(verdict_from_json(to_json(bad)), bad);
}

TEST(Stage5, SynthesisUsesFactualSource) {
  RuleBasedCorruptor c({CorruptionStrategy::NumericPerturb}, {});
  const auto p = make_pair("q", "It opened in 1901.", "It opened in 1950.", 1, 0);
  const auto s = synthesize_corrupted(p, c, 4);
  EXPECT_EQ(s.chosen, "It opened in 1950.");
  EXPECT_NE(s.rejected, s.chosen);
  EXPECT_EQ(s.h_chosen, 0);
  EXPECT_EQ(s.h_rejected, 1);
  EXPECT_EQ(s.source, Source::Synthetic);
  EXPECT_ERRC(synthesize_corrupted(make_pair("q", "1", "2", 1, 1), c, 0), NoFactualSource);
}

TEST(Stage5, SynthesizeManyIsIndependentOfJobs) {
  Dataset real;
  for (int i = 0; i < 40; ++i) real.push_back(make_pair("q" + std::to_string(i), "Built in " + std::to_string(1800 + i), "x", 0, 0));
  real.push_back(make_pair("no digits", "Nothing", "y", 0, 0));
  RuleBasedCorruptor c({CorruptionStrategy::NumericPerturb}, {});
  SynthesisReport r1;
  const auto a = synthesize_many(real, c, 30, {FactualityConfig::BothFactual}, 99, 1, &r1);
  const auto b = synthesize_many(real, c, 30, {FactualityConfig::BothFactual}, 99, 8);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 30u);
  EXPECT_EQ(r1.produced, 30u);
}

TEST(Stage6, MergeAddsCounts) {
  EXPECT_EQ(merge(bucket(0, 0, 3), bucket(0, 1, 4)).size(), 7u);
}

TEST(Stage7, BalancesToExactToyCounts) {
  const auto data = concat({bucket(0, 0, 170), bucket(0, 1, 150), bucket(1, 0, 80), bucket(1, 1, 120)});
  const auto out = balance(data, toy_mix_target(), 5);
  auto h = histogram(out);
  EXPECT_EQ(h[FactualityConfig::BothFactual], 150u);
  EXPECT_EQ(h[FactualityConfig::FactualOverHallucinated] + h[FactualityConfig::Misordered], 200u);
  EXPECT_EQ(h[FactualityConfig::BothHallucinated], 100u);
  // Sub-multiset of the input.
  const auto in_ids = ids(data);
  for (const auto& id : ids(out)) EXPECT_TRUE(in_ids.count(id));
  EXPECT_EQ(out, balance(data, toy_mix_target(), 5));
}

TEST(Stage7, ShortBucketFails) {
  const auto data = concat({bucket(0, 0, 149), bucket(0, 1, 200), bucket(1, 1, 100)});
  EXPECT_ERRC(balance(data, toy_mix_target(), 1), InsufficientBucket);
  EXPECT_ERRC(balance(data, {{FactualityConfig::Misordered, 1}}, 1), InvalidArgument);
}

TEST(Stage8, OrientEliminatesMisorderedAndConservesCount) {
  const auto data = concat({bucket(0, 0, 5), bucket(1, 0, 7), bucket(0, 1, 3), bucket(1, 1, 2)});
  OrientReport r;
  const auto out = orient(data, &r);
  EXPECT_EQ(out.size(), data.size());
  EXPECT_EQ(r.flipped, 7u);
  for (const auto& p : out) EXPECT_LE(p.h_chosen, p.h_rejected);
  EXPECT_EQ(histogram(out)[FactualityConfig::Misordered], 0u);
}

TEST(Split, StratifiedAndDisjoint) {
  const auto data = concat({bucket(0, 0, 100), bucket(0, 1, 100), bucket(1, 1, 100)});
  const auto s = stratified_split(data, 0.1, 3);
  EXPECT_EQ(s.eval.size(), 30u);
  EXPECT_EQ(s.train.size() + s.eval.size(), data.size());
  for (auto c : kOrientedConfigs) EXPECT_EQ(histogram(s.eval)[c], 10u);
  const auto tr = ids(s.train);
  for (const auto& id : ids(s.eval)) EXPECT_FALSE(tr.count(id));
}

TEST(Split, PerBucketProportionWithinOneRecordOnUnevenToySet) {
  // 300 records in uneven buckets; checked exhaustively for several fractions.
  const auto data = concat({bucket(0, 0, 137), bucket(0, 1, 101), bucket(1, 1, 62)});
  for (double f : {0.05, 0.1, 0.15, 0.2, 0.33, 0.5}) {
    const auto s = stratified_split(data, f, 11);
    auto he = histogram(s.eval), hd = histogram(data);
    for (auto c : kOrientedConfigs)
      EXPECT_LE(std::abs(static_cast<double>(he[c]) - f * static_cast<double>(hd[c])), 1.0) << f;
  }
}

TEST(Split, Errors) {
  EXPECT_ERRC(stratified_split(concat({bucket(0, 0, 10), bucket(1, 1, 1)}), 0.1, 0), BucketTooSmall);
  EXPECT_ERRC(stratified_split(bucket(0, 0, 10), 1.0, 0), InvalidArgument);
}

TEST(ToyCorpus, SupplyMatchesTheBalanceTargets) {
  const auto toy = synthetic::make_toy_corpus(2024);
  CleanReport r;
  const auto clean = extract_and_clean(toy.raw, &r);
  EXPECT_EQ(clean.size(), 462u);
  EXPECT_EQ(toy.candidates.size(), 462u);
  for (const auto& s : toy.candidates) EXPECT_NO_THROW(s.validate());
}
