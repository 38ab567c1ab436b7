#include <gtest/gtest.h>

#include "fdpo/manifest.hpp"
#include "test_support.hpp"

using namespace fdpo;

namespace {

ojson minimal() {
  return ojson::parse(R"({
    "pipeline": {"input": "raw.jsonl", "verdicts": "v/verdicts.jsonl"},
    "train": {"candidates": "../shared/candidates.jsonl"}
  })");
}

}  // namespace

TEST(Manifest, DefaultsAndRelativePaths) {
  const auto m = parse_manifest(minimal(), "/base/dir");
  EXPECT_EQ(m.seed, 0u);
  EXPECT_EQ(m.jobs, 1u);
  EXPECT_EQ(m.out_dir, fs::path("/base/dir/runs"));
  ASSERT_TRUE(m.pipeline);
  EXPECT_EQ(m.pipeline->input, fs::path("/base/dir/raw.jsonl"));
  EXPECT_EQ(m.pipeline->verdicts, fs::path("/base/dir/v/verdicts.jsonl"));
  EXPECT_EQ(m.pipeline->slot_order, SlotOrder::Seeded);
  EXPECT_TRUE(m.pipeline->orient);
  EXPECT_FALSE(m.pipeline->split);
  EXPECT_EQ(m.pipeline->mix, toy_mix_target());
  ASSERT_TRUE(m.train);
  EXPECT_EQ(m.train->candidates, fs::path("/base/shared/candidates.jsonl"));
  EXPECT_EQ(m.train->config.epochs, 3);
  EXPECT_EQ(m.train->config.learning_rate, 0.1);
  EXPECT_EQ(m.train->config.objective.beta, 0.1);
  EXPECT_EQ(m.train->feature_dim, 4096u);
  EXPECT_EQ(m.train_data(), fs::path("/base/dir/runs/pipeline/dataset.jsonl"));
  EXPECT_FALSE(m.eval_data());
}

TEST(Manifest, SplitRoutesTrainAndEval) {
  auto j = minimal();
  j["pipeline"]["stages"] = {{"split", true}};
  const auto m = parse_manifest(j, "/b");
  EXPECT_EQ(m.train_data(), fs::path("/b/runs/pipeline/train.jsonl"));
  EXPECT_EQ(*m.eval_data(), fs::path("/b/runs/pipeline/eval.jsonl"));
  j["pipeline"]["eval_fraction"] = 1.5;
  EXPECT_ERRC(parse_manifest(j, "/b"), Schema);
}

TEST(Manifest, AbsolutePathsKept) {
  auto j = minimal();
  j["train"]["data"] = "/abs/pairs.jsonl";
  const auto m = parse_manifest(j, "/b");
  EXPECT_EQ(m.train_data(), fs::path("/abs/pairs.jsonl"));
  EXPECT_FALSE(m.eval_data());
}

TEST(Manifest, UnknownKeysRejectedAtEveryLevel) {
  for (const char* ptr : {"/colour", "/pipeline/colour", "/pipeline/stages/colour", "/pipeline/synthetic/colour",
                          "/judge/colour", "/train/colour"}) {
    auto j = minimal();
    j["pipeline"]["stages"] = ojson::object();
    j["pipeline"]["synthetic"] = ojson::object();
    j["judge"] = ojson::object();
    j[ojson::json_pointer(ptr)] = 1;
    EXPECT_ERRC(parse_manifest(j, "/b"), Schema);
  }
}

TEST(Manifest, BadValues) {
  auto j = minimal();
  j["pipeline"]["slot_order"] = "random";
  EXPECT_ERRC(parse_manifest(j, "/b"), Schema);
  j = minimal();
  j["pipeline"]["mix"] = {{"(1,0)", 5}};
  EXPECT_ERRC(parse_manifest(j, "/b"), Schema);
  j = minimal();
  j["train"]["epochs"] = "three";
  EXPECT_ERRC(parse_manifest(j, "/b"), Schema);
  j = minimal();
  j["train"]["no_flip_penalty_mode"] = "drop";
  EXPECT_ERRC(parse_manifest(j, "/b"), Schema);
  j = minimal();
  j["pipeline"]["synthetic"] = {{"strategies", {"Shuffle"}}};
  EXPECT_THROW(parse_manifest(j, "/b"), Error);
  EXPECT_ERRC(parse_manifest(ojson::array(), "/b"), Schema);
}

TEST(Manifest, BundledManifestsLoad) {
  for (const char* rel : {"data/toy/manifest.json", "data/benchmark/manifest.json"}) {
    const auto m = load_manifest(test::source_path(rel));
    ASSERT_TRUE(m.train) << rel;
    EXPECT_TRUE(fs::exists(m.train->candidates)) << rel;
    EXPECT_EQ(m.seed, 2024u);
  }
  const auto toy = load_manifest(test::source_path("data/toy/manifest.json"));
  EXPECT_EQ(toy.pipeline->strategies.size(), 3u);
  EXPECT_EQ(toy.judge.mock_table, test::source_path("data/toy/mock_judge.json").lexically_normal());
}

TEST(Manifest, MissingFileIsIo) {
  EXPECT_ERRC(load_manifest(test::source_path("data/none.json")), Io);
}
