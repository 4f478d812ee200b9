#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "faceq/cli.hpp"
#include "faceq/dataio.hpp"
#include "faceq/error.hpp"
#include "faceq/evalkit.hpp"
#include "test_util.hpp"

using namespace faceq;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string p(const fs::path& path) { return path.string(); }

ErcCurve read_erc_csv(const fs::path& path) {
  std::istringstream in(testutil::slurp(path));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "fraction_rejected,fnmr,perfect");
  ErcCurve c;
  while (std::getline(in, line)) {
    ErcPoint pt;
    char comma;
    std::istringstream row(line);
    row >> pt.fraction_rejected >> comma >> pt.fnmr >> comma >> pt.perfect;
    c.points.push_back(pt);
  }
  return c;
}

}  // namespace

TEST(Cli, VersionAndUsage) {
  auto v = run({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find("faceq 1.0.0"), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"synth"}).code, 2);
  auto both = run({"erc", "--scores", "a", "--quality", "b", "--out", "c", "--target-fnmr", "0.1",
                   "--target-fmr", "0.001"});
  EXPECT_EQ(both.code, 2);
  EXPECT_FALSE(both.err.empty());
  EXPECT_EQ(run({"scores", "--embeddings", "x", "--mated-only", "--nonmated-per-subject", "2", "--out", "y"}).code,
            2);
}

TEST(Cli, SynthTwiceIsIdentical) {
  auto a = testutil::scratch_dir("cli_synth_a"), b = testutil::scratch_dir("cli_synth_b");
  for (const auto& dir : {a, b}) {
    auto r = run({"synth", "--subjects", "10", "--images-per-subject", "4", "--dim", "6", "--seed", "42",
                  "--out-dir", p(dir)});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1);
  }
  for (const auto& name : {"embeddings_sys0.jsonl", "embeddings_sys2.jsonl", "icao.jsonl", "latent.jsonl"})
    EXPECT_EQ(testutil::slurp(a / name), testutil::slurp(b / name)) << name;
}

TEST(Cli, MissingQualityIsADataError) {
  auto dir = testutil::scratch_dir("cli_missing");
  ASSERT_EQ(run({"synth", "--subjects", "3", "--images-per-subject", "3", "--dim", "4", "--out-dir", p(dir)}).code, 0);
  ASSERT_EQ(run({"scores", "--embeddings", p(dir / "embeddings_sys0.jsonl"), "--mated-only", "--out",
                 p(dir / "scores.jsonl")})
                .code,
            0);
  auto latent = read_latent(dir / "latent.jsonl");
  std::vector<QualityLabel> labels;
  for (const auto& l : latent) labels.push_back({l.image_id, l.q_true});
  std::string dropped = labels[1].image_id;
  labels.erase(labels.begin() + 1);
  write_labels(dir / "quality.jsonl", labels);
  auto r = run({"erc", "--scores", p(dir / "scores.jsonl"), "--quality", p(dir / "quality.jsonl"), "--out",
                p(dir / "erc.csv")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(dropped), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, MalformedInputNamesFileAndLine) {
  auto dir = testutil::scratch_dir("cli_malformed");
  testutil::spit(dir / "q.jsonl", "{\"image_id\":\"a\",\"quality\":0.5}\n{\"image_id\":\"b\",\"quality\":7}\n");
  auto r = run({"dist", "--quality", p(dir / "q.jsonl"), "--out", p(dir / "h.csv")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("q.jsonl:2"), std::string::npos) << r.err;
}

TEST(Cli, FullPipelineBeatsFlatCurve) {
  auto dir = testutil::scratch_dir("cli_pipeline");
  auto ok = [](const CliRun& r) {
    EXPECT_EQ(r.code, 0) << r.err;
    return r.code == 0;
  };
  ASSERT_TRUE(ok(run({"synth", "--seed", "42", "--out-dir", p(dir)})));
  ASSERT_TRUE(ok(run({"groundtruth", "--embeddings", p(dir / "embeddings_sys0.jsonl"),
                      p(dir / "embeddings_sys1.jsonl"), p(dir / "embeddings_sys2.jsonl"), "--icao",
                      p(dir / "icao.jsonl"), "--out", p(dir / "labels.jsonl"), "--stats-out",
                      p(dir / "stats.jsonl"), "--report-out", p(dir / "report.jsonl")})));
  ASSERT_TRUE(ok(run({"train", "--features", p(dir / "embeddings_sys0.jsonl"), "--labels",
                      p(dir / "labels.jsonl"), "--seed", "1", "--out", p(dir / "head.json")})));
  ASSERT_TRUE(ok(run({"predict", "--model", p(dir / "head.json"), "--features", p(dir / "embeddings_sys0.jsonl"),
                      "--out", p(dir / "predicted.jsonl")})));
  ASSERT_TRUE(ok(run({"predict", "--model", p(dir / "head.json"), "--features", p(dir / "embeddings_sys0.jsonl"),
                      "--out", p(dir / "predicted100.csv"), "--scale-100"})));
  ASSERT_TRUE(ok(run({"scores", "--embeddings", p(dir / "embeddings_sys1.jsonl"), "--nonmated-per-subject", "5",
                      "--seed", "3", "--references", p(dir / "report.jsonl"), "--out", p(dir / "scores.jsonl")})));
  auto erc_run = run({"erc", "--scores", p(dir / "scores.jsonl"), "--quality", p(dir / "predicted.jsonl"),
                      "--out", p(dir / "erc.csv")});
  ASSERT_TRUE(ok(erc_run));
  ASSERT_TRUE(ok(run({"dist", "--quality", p(dir / "predicted.jsonl"), "--out", p(dir / "hist.csv")})));

  auto curve = read_erc_csv(dir / "erc.csv");
  ASSERT_EQ(curve.points.size(), 31u);
  double initial = curve.points.front().fnmr;
  EXPECT_LE(initial, 0.10);
  EXPECT_GT(initial, 0.05);
  EXPECT_LT(erc_auc(curve), initial * curve.points.back().fraction_rejected);

  auto hist = testutil::slurp(dir / "hist.csv");
  EXPECT_EQ(hist.rfind("bin_low,bin_high,count,density\n", 0), 0u);
  auto scaled = testutil::slurp(dir / "predicted100.csv");
  EXPECT_EQ(scaled.rfind("image_id,quality_100\n", 0), 0u);

  // Running a stage again with the same inputs gives the same bytes.
  auto first = testutil::slurp(dir / "head.json");
  ASSERT_TRUE(ok(run({"train", "--features", p(dir / "embeddings_sys0.jsonl"), "--labels",
                      p(dir / "labels.jsonl"), "--seed", "1", "--out", p(dir / "head.json")})));
  EXPECT_EQ(first, testutil::slurp(dir / "head.json"));
}
