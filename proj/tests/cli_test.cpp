#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fdpo/io.hpp"
#include "fdpo/pipeline.hpp"
#include "test_support.hpp"

using namespace fdpo;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run fdpo_cli(const std::string& args) {
  const std::string cmd = std::string(FDPO_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string toy_manifest() { return test::source_path("data/toy/manifest.json").string(); }

/// Manifest over a ten-record corpus, written into `dir`.
fs::path small_label_setup(const fs::path& dir) {
  std::ofstream raw(dir / "raw.jsonl");
  for (int i = 0; i < 10; ++i)
    raw << ojson{{"prompt", "Question " + std::to_string(i) + "?"},
                 {"chosen", "Answer " + std::to_string(i) + " is right."},
                 {"rejected", "Answer " + std::to_string(i) + " is wrong."}}
               .dump()
        << "\n";
  std::ofstream(dir / "manifest.json") << R"({"out_dir": "out", "jobs": 3,
    "pipeline": {"input": "raw.jsonl", "verdicts": "verdicts.jsonl"}})";
  return dir / "manifest.json";
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(fdpo_cli("").code, 64);
  EXPECT_EQ(fdpo_cli("frobnicate").code, 64);
  EXPECT_EQ(fdpo_cli("train").code, 64);
  EXPECT_EQ(fdpo_cli("ablate sideways --manifest " + toy_manifest()).code, 64);
  EXPECT_EQ(fdpo_cli("sweep --lambdas 1,x --manifest " + toy_manifest()).code, 64);
  EXPECT_EQ(fdpo_cli("--help").code, 0);
}

TEST(Cli, LabelWritesEveryKeyOnceAndResumes) {
  const auto dir = test::scratch_dir("cli_label");
  const auto manifest = small_label_setup(dir);
  auto r = fdpo_cli("label --mock --manifest " + manifest.string());
  ASSERT_EQ(r.code, 0) << r.output;
  auto lines = read_jsonl<VerdictLine>(dir / "verdicts.jsonl", verdict_from_json);
  EXPECT_EQ(lines.size(), 20u);

  // Simulate an interruption: keep the first 7 lines, then resume.
  {
    const auto text = read_text_file(dir / "verdicts.jsonl");
    std::size_t pos = 0;
    for (int i = 0; i < 7; ++i) pos = text.find('\n', pos) + 1;
    write_text_file(dir / "verdicts.jsonl", text.substr(0, pos));
  }
  r = fdpo_cli("label --mock --manifest " + manifest.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("13 new verdicts"), std::string::npos) << r.output;
  const auto resumed = read_jsonl<VerdictLine>(dir / "verdicts.jsonl", verdict_from_json);
  ASSERT_EQ(resumed.size(), 20u);
  std::set<std::pair<std::size_t, int>> keys;
  for (const auto& l : resumed) keys.emplace(l.record_index, l.slot);
  EXPECT_EQ(keys.size(), 20u);
  // Mock verdicts are deterministic, so the resumed file holds the same set.
  std::set<std::string> a, b;
  for (const auto& l : lines) a.insert(to_json(l).dump());
  for (const auto& l : resumed) b.insert(to_json(l).dump());
  EXPECT_EQ(a, b);
  r = fdpo_cli("label --mock --manifest " + manifest.string());
  EXPECT_NE(r.output.find("0 new verdicts"), std::string::npos) << r.output;
}

TEST(Cli, UnparseableRepliesAreFlaggedAndTheRunContinues) {
  const auto dir = test::scratch_dir("cli_unparseable");
  auto j = ojson::parse(read_text_file(toy_manifest()));
  j["pipeline"]["input"] = test::source_path("data/toy/raw.jsonl").string();
  j["pipeline"]["verdicts"] = (dir / "verdicts.jsonl").string();
  j["judge"]["mock_table"] = test::source_path("data/toy/mock_judge.json").string();
  j.erase("train");
  write_text_file(dir / "manifest.json", j.dump());
  const auto r = fdpo_cli("label --mock --jobs 4 --manifest " + (dir / "manifest.json").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("924 new verdicts (0 already present, 2 unparseable)"), std::string::npos) << r.output;
  // The bundled verdict file was produced the same way; compare as sets of lines.
  auto lines = [](const fs::path& f) {
    std::multiset<std::string> out;
    std::istringstream is(read_text_file(f));
    for (std::string l; std::getline(is, l);) out.insert(l);
    return out;
  };
  EXPECT_EQ(lines(dir / "verdicts.jsonl"), lines(test::source_path("data/toy/verdicts.jsonl")));
}

TEST(Cli, ExitCodesForIoSchemaAndBuckets) {
  const auto dir = test::scratch_dir("cli_errors");
  auto r = fdpo_cli("pipeline --manifest " + (dir / "missing.json").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("missing.json"), std::string::npos) << r.output;

  std::ofstream(dir / "bad.json") << R"({"pipeline": {"input": "nope.jsonl", "verdicts": "v.jsonl"}})";
  r = fdpo_cli("pipeline --manifest " + (dir / "bad.json").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("nope.jsonl"), std::string::npos) << r.output;

  std::ofstream(dir / "unknown.json") << R"({"colour": 1})";
  EXPECT_EQ(fdpo_cli("train --manifest " + (dir / "unknown.json").string()).code, 2);

  std::ofstream(dir / "raw.jsonl") << "{\"prompt\": \"q\", \"chosen\": \"a\"}\n";
  std::ofstream(dir / "schema.json") << R"({"pipeline": {"input": "raw.jsonl", "verdicts": "v.jsonl"}})";
  r = fdpo_cli("pipeline --manifest " + (dir / "schema.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("raw.jsonl:1"), std::string::npos) << r.output;

  auto j = ojson::parse(read_text_file(toy_manifest()));
  j["pipeline"]["mix"]["(0,0)"] = 1000;
  j["pipeline"]["input"] = test::source_path("data/toy/raw.jsonl").string();
  j["pipeline"]["verdicts"] = test::source_path("data/toy/verdicts.jsonl").string();
  j["judge"].erase("mock_table");
  j.erase("train");
  j["out_dir"] = (dir / "out").string();
  write_text_file(dir / "short.json", j.dump());
  r = fdpo_cli("pipeline --manifest " + (dir / "short.json").string());
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("(0,0)"), std::string::npos) << r.output;
}

TEST(Cli, ToyPipelineThenReductionIdentity) {
  const auto out = test::scratch_dir("cli_toy");
  const std::string base = "--manifest " + toy_manifest() + " --out " + out.string();
  const std::string quiet = base + " --verbosity 0";
  ASSERT_EQ(fdpo_cli("pipeline " + quiet).code, 0);
  // Histogram from a direct scan of the output file.
  std::map<std::string, int> counts;
  std::istringstream is(read_text_file(out / "pipeline/dataset.jsonl"));
  for (std::string line; std::getline(is, line);) {
    const auto r = ojson::parse(line);
    ++counts["(" + std::to_string(r["h_w"].get<int>()) + "," + std::to_string(r["h_l"].get<int>()) + ")"];
  }
  EXPECT_EQ(counts, (std::map<std::string, int>{{"(0,0)", 150}, {"(0,1)", 200}, {"(1,1)", 100}}));
  const auto summary = ojson::parse(read_text_file(out / "pipeline/summary.json"));
  EXPECT_EQ(summary["histogram"]["(1,0)"], 0);
  EXPECT_EQ(summary["histogram"]["(0,0)"], 150);
  EXPECT_EQ(summary["histogram"]["(0,1)"], 200);
  EXPECT_EQ(summary["histogram"]["(1,1)"], 100);

  ASSERT_EQ(fdpo_cli("train --lambda 0 --no-flip " + quiet).code, 0);
  const auto fdpo_ckpt = read_text_file(out / "train/params.ckpt");
  ASSERT_EQ(fdpo_cli("train --dpo " + quiet).code, 0);
  EXPECT_EQ(read_text_file(out / "train/params.ckpt"), fdpo_ckpt);
  for (const char* f : {"params.ckpt", "history.jsonl", "report.json", "report.txt"})
    EXPECT_TRUE(fs::exists(out / "train" / f)) << f;

  auto r = fdpo_cli("ablate remove-11 " + base);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("retained 350/450"), std::string::npos) << r.output;
}

TEST(Cli, SweepWritesOneRowPerLambda) {
  const auto out = test::scratch_dir("cli_sweep");
  const std::string base = "--manifest " + toy_manifest() + " --out " + out.string();
  const std::string quiet = base + " --verbosity 0";
  ASSERT_EQ(fdpo_cli("pipeline " + quiet).code, 0);
  ASSERT_EQ(fdpo_cli("sweep --lambdas 0,2,4,6,8,10,20,50,100 " + quiet).code, 0);
  const auto csv = read_text_file(out / "sweep/sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
  EXPECT_TRUE(fs::exists(out / "sweep/standard_dpo/report.json"));
  EXPECT_TRUE(fs::exists(out / "sweep/lambda_100/params.ckpt"));
  auto r = fdpo_cli("report " + base);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("F-DPO (lambda=50)"), std::string::npos) << r.output;
}

TEST(Cli, GenerateReproducesBundledFixtures) {
  const auto out = test::scratch_dir("cli_generate");
  ASSERT_EQ(fdpo_cli("generate toy " + (out / "toy").string() + " --seed 2024").code, 0);
  ASSERT_EQ(fdpo_cli("generate benchmark " + (out / "bench").string() + " --seed 2024").code, 0);
  for (const char* f : {"raw.jsonl", "candidates.jsonl", "mock_judge.json"})
    EXPECT_EQ(read_text_file(out / "toy" / f), read_text_file(test::source_path(std::string("data/toy/") + f))) << f;
  for (const char* f : {"candidates.jsonl", "pairs.jsonl"})
    EXPECT_EQ(read_text_file(out / "bench" / f), read_text_file(test::source_path(std::string("data/benchmark/") + f)))
        << f;
}
