#include <gtest/gtest.h>

#include "fdpo/corrupt.hpp"
#include "test_support.hpp"

using namespace fdpo;

TEST(NumericPerturb, ChangesExactlyOneNumberKeepingWidth) {
  const std::string a = "The bridge opened in 1874 and is 120 metres long.";
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto out = rule_based_corrupt(a, CorruptionStrategy::NumericPerturb, seed);
    ASSERT_NE(out, a);
    ASSERT_EQ(out.size(), a.size());
    std::size_t diff_runs = 0;
    const auto ra = detail::digit_runs(a), ro = detail::digit_runs(out);
    ASSERT_EQ(ra.size(), ro.size());
    for (std::size_t i = 0; i < ra.size(); ++i)
      diff_runs += a.substr(ra[i].pos, ra[i].len) != out.substr(ro[i].pos, ro[i].len);
    EXPECT_EQ(diff_runs, 1u);
  }
}

TEST(NumericPerturb, EdgeValues) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto nine = detail::perturb_number("9", rng);
    EXPECT_EQ(nine.size(), 1u);
    EXPECT_NE(nine, "9");
    const auto zero = detail::perturb_number("007", rng);
    EXPECT_EQ(zero.size(), 3u);
    EXPECT_NE(zero, "007");
  }
  EXPECT_ERRC(rule_based_corrupt("no digits here", CorruptionStrategy::NumericPerturb, 1), StrategyInapplicable);
}

TEST(EntitySwap, ReplacesWholeWordEntityFromTable) {
  const std::vector<std::string> table{"Berlin", "Paris", "Rome"};
  const std::string a = "The treaty was signed in Paris by two envoys.";
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto out = rule_based_corrupt(a, CorruptionStrategy::EntitySwap, seed, table);
    EXPECT_EQ(out.find("Paris"), std::string::npos);
    EXPECT_TRUE(out.find("Berlin") != std::string::npos || out.find("Rome") != std::string::npos);
  }
  EXPECT_ERRC(rule_based_corrupt("Parisian food", CorruptionStrategy::EntitySwap, 1, table), StrategyInapplicable);
  EXPECT_ERRC(rule_based_corrupt("Paris", CorruptionStrategy::EntitySwap, 1, {"Paris"}), StrategyInapplicable);
}

TEST(Negation, RemovesExpandsOrInserts) {
  EXPECT_EQ(rule_based_corrupt("It is not red.", CorruptionStrategy::NegationInsert, 1), "It is red.");
  EXPECT_EQ(rule_based_corrupt("It isn't red.", CorruptionStrategy::NegationInsert, 1), "It is red.");
  EXPECT_EQ(rule_based_corrupt("It was red.", CorruptionStrategy::NegationInsert, 1), "It was not red.");
  EXPECT_ERRC(rule_based_corrupt("Red.", CorruptionStrategy::NegationInsert, 1), StrategyInapplicable);
}

TEST(Corrupt, DeterministicAndRejectsEmpty) {
  const std::string a = "It was built in 1901 by Ada Lovelace.";
  EXPECT_EQ(rule_based_corrupt(a, CorruptionStrategy::NumericPerturb, 5),
            rule_based_corrupt(a, CorruptionStrategy::NumericPerturb, 5));
  EXPECT_ERRC(rule_based_corrupt("", CorruptionStrategy::NegationInsert, 1), EmptyField);
  EXPECT_EQ(strategy_from_string(to_string(CorruptionStrategy::EntitySwap)), CorruptionStrategy::EntitySwap);
}

TEST(EntityTable, SkipsSentenceInitialAndShortWords) {
  const auto t = extract_entity_table({"The museum in Oslo was funded by Ada Byrne.", "Oslo has fjords. Ok"});
  EXPECT_EQ(t, (std::vector<std::string>{"Ada", "Byrne", "Oslo"}));
}

TEST(RuleBasedCorruptor, FallsThroughToAnApplicableStrategy) {
  RuleBasedCorruptor c({CorruptionStrategy::EntitySwap, CorruptionStrategy::NumericPerturb}, {});
  const std::string a = "Opened in 1901.";
  for (std::uint64_t s = 0; s < 10; ++s) EXPECT_NE(c.corrupt("q", a, s), a);
  EXPECT_ERRC(c.corrupt("q", "Nothing here.", 0), StrategyInapplicable);
  EXPECT_THROW(RuleBasedCorruptor({}, {}), Error);
}

TEST(LlmCorruptor, SendsSystemAndUserMessagesAndTrims) {
  auto t = ScriptedTransport::always("  It opened in 1902.\n");
  JudgeEndpointConfig cfg;
  LlmCorruptor c(cfg, t);
  EXPECT_EQ(c.corrupt("When?", "It opened in 1901.", 0), "It opened in 1902.");
  ASSERT_EQ(t.last_messages().size(), 2u);
  EXPECT_EQ(t.last_messages()[0].role, "system");
  EXPECT_EQ(t.last_messages()[0].content, std::string(template_text(PromptKind::CorruptorSystem)));
  EXPECT_EQ(t.last_messages()[1].content, render_prompt(PromptKind::CorruptorUser, "When?", "It opened in 1901."));
  auto same = ScriptedTransport::always("It opened in 1901.");
  LlmCorruptor c2(cfg, same);
  EXPECT_ERRC(c2.corrupt("When?", "It opened in 1901.", 0), StrategyInapplicable);
}
