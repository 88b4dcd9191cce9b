#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "fta/fta.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fta_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args, const std::string& env = "") const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = env + (env.empty() ? "" : " ") + "\"" FTA_CLI_PATH "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  // Small generated dataset under `name`.
  void gen(const std::string& name, std::size_t listings = 200, std::uint64_t seed = 1) const {
    write(name + ".json", json{{"num_listings", listings}, {"seed", seed}}.dump());
    ASSERT_EQ(run("gen-data --config " + path(name + ".json") + " --out " + path(name)).code, 0);
  }

  fs::path dir_;
};

fta::Encoder identity_encoder(std::size_t dim) {
  fta::EncoderParams p;
  fta::Matrix w(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) w(i, i) = 1.0;
  p.layers.push_back(fta::DenseLayer{w, std::vector<double>(dim, 0.0)});
  return fta::Encoder(fta::EncoderConfig{dim, dim, std::nullopt, 0}, p);
}

}  // namespace

TEST_F(CliTest, GenDataWritesDeterministicFiles) {
  gen("a", 150, 4);
  gen("b", 150, 4);
  EXPECT_TRUE(fs::exists(dir_ / "a" / "listings.jsonl"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "interactions.jsonl"));
  EXPECT_EQ(slurp(dir_ / "a" / "listings.jsonl"), slurp(dir_ / "b" / "listings.jsonl"));
  EXPECT_EQ(slurp(dir_ / "a" / "interactions.jsonl"), slurp(dir_ / "b" / "interactions.jsonl"));
}

TEST_F(CliTest, GenDataErrors) {
  const CliRun missing = run("gen-data");
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("--out"), std::string::npos);
  write("bad.json", R"({"num_listing": 5})");
  EXPECT_EQ(run("gen-data --config " + path("bad.json") + " --out " + path("x")).code, 2);
  EXPECT_EQ(run("gen-data --config " + path("nope.json") + " --out " + path("x")).code, 1);
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  ASSERT_EQ(run("gen-data --listings 50 --seed 5 --out " + path("flag")).code, 0);
  ASSERT_EQ(run("gen-data --listings 50 --out " + path("env"), "FTX_SEED=5").code, 0);
  ASSERT_EQ(run("gen-data --listings 50 --out " + path("zero")).code, 0);
  EXPECT_EQ(slurp(dir_ / "flag" / "listings.jsonl"), slurp(dir_ / "env" / "listings.jsonl"));
  EXPECT_NE(slurp(dir_ / "flag" / "listings.jsonl"), slurp(dir_ / "zero" / "listings.jsonl"));
  EXPECT_EQ(run("gen-data --listings 50 --out " + path("bad"), "FTX_SEED=abc").code, 2);
}

TEST_F(CliTest, ZeroEpochModelEqualsInitialParams) {
  gen("d", 50);
  ASSERT_EQ(run("train --data " + path("d") + " --epochs 0 --seed 9 --dim 8 --out " + path("m.ftam")).code, 0);
  fta::TrainConfig cfg;
  cfg.seed = 9;
  cfg.output_dim = 8;
  std::ostringstream expected;
  fta::write_model(expected, fta::initial_encoders(fta::SyntheticConfig{}.raw_dim, cfg));
  EXPECT_EQ(slurp(dir_ / "m.ftam"), expected.str());
}

TEST_F(CliTest, TrainIsDeterministicAndLogsMonotoneSteps) {
  gen("d", 1000);
  const std::string base = "train --data " + path("d") + " --epochs 1 --batch 32 --accum 2 --seed 3";
  const CliRun a = run(base + " --out " + path("a.ftam") + " --stats " + path("s.jsonl"));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(run(base + " --out " + path("b.ftam")).code, 0);
  EXPECT_EQ(slurp(dir_ / "a.ftam"), slurp(dir_ / "b.ftam"));
  std::ifstream stats(dir_ / "s.jsonl");
  std::string line;
  std::size_t expected_step = 0;
  while (std::getline(stats, line)) {
    const json j = json::parse(line);
    EXPECT_EQ(j.at("step").get<std::size_t>(), expected_step++);
    EXPECT_TRUE(j.contains("loss") && j.contains("fwd_calls") && j.contains("ms_per_step"));
  }
  EXPECT_EQ(expected_step, 32u);  // ceil(1000 / 32)
  EXPECT_EQ(json::parse(a.out).at("steps"), 32);
}

TEST_F(CliTest, SingleviewNeverSamples) {
  gen("d", 100);
  const CliRun r = run("train --data " + path("d") + " --epochs 1 --mode singleview --out " + path("m.ftam"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out).at("rolling_draws"), 0);
  const CliRun multi = run("train --data " + path("d") + " --epochs 1 --out " + path("m2.ftam"));
  EXPECT_EQ(json::parse(multi.out).at("rolling_draws"), 100);
}

TEST_F(CliTest, TrainConfigFileAndFlagOverrides) {
  gen("d", 60);
  write("t.json", R"({"epochs": 0, "output_dim": 4, "seed": 2})");
  ASSERT_EQ(run("train --data " + path("d") + " --config " + path("t.json") + " --dim 6 --out " + path("m.ftam")).code, 0);
  const fta::DualEncoder m = fta::load_model(dir_ / "m.ftam");
  EXPECT_EQ(m.text.config().output_dim, 6u);
  write("bad.json", R"({"epoch": 1})");
  EXPECT_EQ(run("train --data " + path("d") + " --config " + path("bad.json") + " --out " + path("x.ftam")).code, 2);
}

TEST_F(CliTest, TrainFlagErrors) {
  gen("d", 20);
  EXPECT_EQ(run("train --data " + path("d") + " --alpha 1.5 --out " + path("m.ftam")).code, 2);
  EXPECT_EQ(run("train --data " + path("d") + " --mode both --out " + path("m.ftam")).code, 2);
  EXPECT_EQ(run("train --data " + path("d") + " --tau 0 --out " + path("m.ftam")).code, 2);
  EXPECT_EQ(run("train --data " + path("d") + " --epochs abc --out " + path("m.ftam")).code, 2);
  EXPECT_EQ(run("train --data " + path("missing") + " --out " + path("m.ftam")).code, 1);
}

TEST_F(CliTest, SearchSelfQueryReturnsClickedFirst) {
  std::vector<fta::Listing> listings;
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> e(4, 0.0);
    e[i] = 1.0;
    listings.push_back(fta::Listing{"L" + std::to_string(i), "c", {e}, {e}, {}});
  }
  const std::vector<fta::Interaction> log{{{0.0, 0.0, 2.0, 0.0}, "L2"}};
  fta::serialize_dataset(listings, log, dir_ / "d");
  fta::save_model(fta::DualEncoder{identity_encoder(4), identity_encoder(4)}, dir_ / "m.ftam");
  ASSERT_EQ(run("index --data " + path("d") + " --model " + path("m.ftam") + " --out " + path("i.ftai")).code, 0);
  const CliRun r = run("search --index " + path("i.ftai") + " --model " + path("m.ftam") + " --data " + path("d") + " --interaction 0 --k 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  ASSERT_EQ(j.at("hits").size(), 1u);
  EXPECT_EQ(j.at("hits")[0].at("id"), "L2");
  const CliRun raw = run("search --index " + path("i.ftai") + " --model " + path("m.ftam") + " --query 0,0,0,3 --k 2");
  EXPECT_EQ(json::parse(raw.out).at("hits")[0].at("id"), "L3");
  EXPECT_EQ(run("search --index " + path("i.ftai") + " --model " + path("m.ftam") + " --k 2").code, 2);
  EXPECT_EQ(run("search --index " + path("missing.ftai") + " --model " + path("m.ftam") + " --query 1,0,0,0").code, 1);
}

TEST_F(CliTest, EvalQ2iOnHandRankedFixture) {
  // 700 listings at increasing angle from (1, 0): listing r ranks r+1.
  std::vector<fta::Listing> listings;
  for (int r = 0; r < 700; ++r) {
    const std::vector<double> v{std::cos(0.004 * r), std::sin(0.004 * r)};
    listings.push_back(fta::Listing{"I" + std::to_string(1000 + r), r % 2 ? "odd" : "even", {v}, {v}, {}});
  }
  std::vector<fta::Interaction> log;
  for (int rank : {1, 3, 11, 120, 600}) log.push_back({{1.0, 0.0}, "I" + std::to_string(1000 + rank - 1)});
  fta::serialize_dataset(listings, log, dir_ / "d");
  fta::save_model(fta::DualEncoder{identity_encoder(2), identity_encoder(2)}, dir_ / "m.ftam");
  const std::string base = "eval q2i --data " + path("d") + " --model " + path("m.ftam");
  const CliRun r = run(base + " --k 10,100,500 --by-category");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_DOUBLE_EQ(j.at("recall").at("R@10").get<double>(), 0.4);
  EXPECT_DOUBLE_EQ(j.at("recall").at("R@100").get<double>(), 0.6);
  EXPECT_DOUBLE_EQ(j.at("recall").at("R@500").get<double>(), 0.8);
  EXPECT_EQ(j.at("per_category").at("even").at("count"), 3);  // indices 0, 2, 10
  EXPECT_DOUBLE_EQ(j.at("per_category").at("odd").at("R@500").get<double>(), 0.5);  // 119 hit, 599 missed
  EXPECT_FALSE(json::parse(run(base).out).contains("per_category"));

  ASSERT_EQ(run("index --data " + path("d") + " --model " + path("m.ftam") + " --modality text --out " + path("i.ftai")).code, 0);
  const json from_file = json::parse(run(base + " --index " + path("i.ftai") + " --k 10,100,500").out);
  EXPECT_DOUBLE_EQ(from_file.at("recall").at("R@100").get<double>(), 0.6);

  EXPECT_EQ(run(base + " --k 100,10").code, 2);
  EXPECT_EQ(run(base + " --k 0,10").code, 2);
}

TEST_F(CliTest, EvalPreconditionFailures) {
  std::vector<fta::Listing> listings{fta::Listing{"A", "c", {{1.0, 0.0}}, {{1.0, 0.0}}, {}}};
  fta::serialize_dataset(listings, std::vector<fta::Interaction>{{{1.0, 0.0}, "ghost"}}, dir_ / "d");
  fta::save_model(fta::DualEncoder{identity_encoder(2), identity_encoder(2)}, dir_ / "m.ftam");
  EXPECT_EQ(run("eval q2i --data " + path("d") + " --model " + path("m.ftam")).code, 3);
  EXPECT_EQ(run("eval crossview --data " + path("d") + " --model " + path("m.ftam")).code, 3);  // no non-primary image
  EXPECT_EQ(run("eval crossview --data " + path("d") + " --model " + path("m.ftam") + " --source caption").code, 2);
  EXPECT_EQ(run("eval").code, 2);
}

TEST_F(CliTest, CrossviewReport) {
  gen("d", 80);
  ASSERT_EQ(run("train --data " + path("d") + " --epochs 0 --out " + path("m.ftam")).code, 0);
  const CliRun r = run("eval crossview --data " + path("d") + " --model " + path("m.ftam") + " --source title --target title --k 1");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out).at("recall"), 1.0);
}

TEST_F(CliTest, OtCheckDefaultPassesAllTrials) {
  const CliRun r = run("ot-check --n 8 --m 8 --trials 500");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("passed"), 500);
  EXPECT_EQ(j.at("failed"), 0);
  EXPECT_EQ(run("ot-check --n 0").code, 2);
}

TEST_F(CliTest, BenchForwardCallsConstant) {
  const CliRun r = run("bench --views 2,4,8,16 --steps 5 --warmup 1 --batch 8");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  ASSERT_EQ(j.at("rows").size(), 4u);
  for (const auto& row : j.at("rows")) EXPECT_EQ(row.at("fwd_calls"), 32);
  EXPECT_TRUE(j.at("fwd_calls_constant").get<bool>());
}

TEST_F(CliTest, HelpExitsZeroAndListsFlags) {
  const std::vector<std::pair<std::string, std::vector<std::string>>> cases{
      {"", {"gen-data", "train", "index", "search", "eval", "ot-check", "bench"}},
      {"gen-data", {"--config", "--out", "--seed", "--listings"}},
      {"train",
       {"--data", "--out", "--config", "--preset", "--alpha", "--tau", "--epochs", "--batch", "--accum", "--lr", "--wd", "--seed",
        "--mode", "--sampling", "--dim", "--hidden", "--stats"}},
      {"index", {"--data", "--model", "--out", "--alpha", "--modality", "--views"}},
      {"search", {"--index", "--model", "--data", "--interaction", "--listing", "--query", "--k"}},
      {"eval", {"q2i", "crossview"}},
      {"eval q2i", {"--data", "--model", "--index", "--k", "--by-category", "--alpha", "--modality", "--views"}},
      {"eval crossview", {"--data", "--model", "--source", "--target", "--k"}},
      {"ot-check", {"--n", "--m", "--trials", "--dim", "--seed"}},
      {"bench", {"--views", "--batch", "--steps", "--warmup", "--raw-dim", "--dim", "--seed"}},
  };
  for (const auto& [cmd, flags] : cases) {
    const CliRun r = run(cmd + " --help");
    EXPECT_EQ(r.code, 0) << cmd;
    for (const auto& f : flags) EXPECT_NE(r.out.find(f), std::string::npos) << cmd << " missing " << f;
  }
}
