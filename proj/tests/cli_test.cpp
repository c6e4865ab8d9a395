#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <unistd.h>

#include "sgcn/cli.hpp"
#include "synthetic.hpp"

namespace sgcn {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("sgcn_cli_test." + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::mt19937_64 rng(7);
    auto recs = testing::keyword_corpus(7, 3, rng);
    write_corpus(dir_ / "train.jsonl", {recs.begin(), recs.begin() + 14});
    write_corpus(dir_ / "dev.jsonl", {recs.begin() + 14, recs.end()});
    std::ofstream(dir_ / "small.cfg") << "# tiny model for tests\n"
                                         "embedding_size = 6\nhidden_neurons = 4\nepochs = 3\nbatch_size = 8\n"
                                         "max_len = 20\n";
    std::ofstream(dir_ / "empty.jsonl");
    std::ofstream(dir_ / "graphs.jsonl") << R"({"tokens":["x"],"heads":[0]})" << "\n"
                                         << R"({"tokens":["a","b","c"],"heads":[2,0,2]})" << "\n";
    auto r = run({"train", "--config", cfg(), "--train", path("train.jsonl"), "--dev", path("dev.jsonl"),
                  "--checkpoint", path("model.ckpt")});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static void write_corpus(const fs::path& p, const std::vector<Record>& recs) {
    std::ofstream out(p);
    for (const auto& r : recs) out << to_json_line(r) << "\n";
  }
  static std::string path(const std::string& name) { return (dir_ / name).string(); }
  static std::string cfg() { return path("small.cfg"); }

  static fs::path dir_;
};

fs::path Cli::dir_;

TEST_F(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run({}).code, cli::kExitUsage); }

TEST_F(Cli, MissingCorpusIsUsageError) {
  auto r = run({"train", "--checkpoint", path("x.ckpt")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  r = run({"train", "--train", path("absent.jsonl"), "--checkpoint", path("x.ckpt")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("absent.jsonl"), std::string::npos);
}

TEST_F(Cli, UnknownOverrideIsAnError) {
  auto r = run({"train", "--config", cfg(), "--set", "no_such_key=1", "--train", path("train.jsonl"), "--checkpoint",
                path("x.ckpt")});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("no_such_key"), std::string::npos);
}

TEST_F(Cli, TrainWritesCheckpointAndHistory) {
  EXPECT_TRUE(fs::exists(path("model.ckpt")));
  auto lines = lines_of(slurp(path("model.ckpt.history.jsonl")));
  ASSERT_EQ(lines.size(), 1u + 3u + 1u);
  EXPECT_EQ(nlohmann::json::parse(lines[0])["type"], "config");
  EXPECT_EQ(nlohmann::json::parse(lines[1])["type"], "epoch");
  EXPECT_EQ(nlohmann::json::parse(lines.back())["type"], "best");
}

TEST_F(Cli, OverrideIsRecordedInHistory) {
  auto r = run({"train", "--config", cfg(), "--set", "pooling.p=100", "--set", "epochs=1", "--train",
                path("train.jsonl"), "--checkpoint", path("max.ckpt"), "--out", path("max.history")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto cfg_line = nlohmann::json::parse(lines_of(slurp(path("max.history")))[0]);
  EXPECT_EQ(cfg_line["config"]["pooling"], "percentile");
  EXPECT_EQ(cfg_line["config"]["pooling_p"], 100.0);
  EXPECT_EQ(cfg_line["config"]["epochs"], 1);
}

TEST_F(Cli, DedicatedFlagsBeatOverrides) {
  auto r = run({"train", "--config", cfg(), "--set", "seed=1", "--seed", "99", "--mode", "all_ones", "--pooling",
                "average", "--set", "epochs=1", "--train", path("train.jsonl"), "--checkpoint", path("flags.ckpt")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto c = nlohmann::json::parse(lines_of(slurp(path("flags.ckpt.history.jsonl")))[0])["config"];
  EXPECT_EQ(c["seed"], 99);
  EXPECT_EQ(c["adjacency_mode"], "all_ones");
  EXPECT_EQ(c["pooling"], "average");
}

TEST_F(Cli, EvalTableHasClassRowsPlusAverages) {
  auto r = run({"eval", "--checkpoint", path("model.ckpt"), "--test", path("dev.jsonl"), "--out", path("rep.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines_of(r.out).size(), 1u + 7u + 2u);  // header + C + micro/macro
  auto rep = nlohmann::json::parse(slurp(path("rep.json")));
  EXPECT_EQ(rep["classes"].size(), 7u);
}

TEST_F(Cli, EvalOnTrainingSetReproducesTrainingAccuracy) {
  auto r = run({"eval", "--checkpoint", path("model.ckpt"), "--test", path("train.jsonl"), "--out", path("tr.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto lines = lines_of(slurp(path("model.ckpt.history.jsonl")));
  const auto best = nlohmann::json::parse(lines.back())["epoch"].get<std::size_t>();
  const double acc = nlohmann::json::parse(lines[best])["train_accuracy"];
  EXPECT_EQ(nlohmann::json::parse(slurp(path("tr.json")))["micro"]["f"].get<double>(), acc);
}

TEST_F(Cli, CorruptCheckpointFails) {
  auto bytes = slurp(path("model.ckpt"));
  bytes.resize(bytes.size() / 2);
  std::ofstream(path("bad.ckpt"), std::ios::binary) << bytes;
  auto r = run({"eval", "--checkpoint", path("bad.ckpt"), "--test", path("dev.jsonl")});
  EXPECT_EQ(r.code, cli::kExitError);
  EXPECT_EQ(r.err.rfind("checkpoint:", 0), 0u) << r.err;
}

TEST_F(Cli, PredictEmptyInputGivesEmptyOutput) {
  auto r = run({"predict", "--checkpoint", path("model.ckpt"), "--test", path("empty.jsonl")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "");
}

TEST_F(Cli, PredictProbabilitiesAreDistributionsAndDeterministic) {
  auto a = run({"predict", "--checkpoint", path("model.ckpt"), "--test", path("dev.jsonl")});
  auto b = run({"predict", "--checkpoint", path("model.ckpt"), "--test", path("dev.jsonl")});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  auto lines = lines_of(a.out);
  EXPECT_EQ(lines.size(), 7u);
  for (const auto& l : lines) {
    auto j = nlohmann::json::parse(l);
    double s = 0;
    for (double p : j["probabilities"]) s += p;
    EXPECT_NEAR(s, 1.0, 1e-9);
    EXPECT_EQ(j["label"], class_names(7)[j["label_id"].get<std::size_t>()]);
  }
}

TEST_F(Cli, InspectSingleToken) {
  auto r = run({"inspect-graph", "--test", path("graphs.jsonl"), "--index", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "tokens: x\nA (1x1, syntax):\n1\nA_hat:\n1.0000\n");
}

TEST_F(Cli, InspectChainMatchesNormalisedAdjacency) {
  auto r = run({"inspect-graph", "--test", path("graphs.jsonl"), "--index", "1", "--out", path("g.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(slurp(path("g.json")));
  EXPECT_EQ(j["adjacency"], nlohmann::json::parse("[[1,1,0],[1,1,1],[0,1,1]]"));
  EXPECT_NEAR(j["normalized"][0][1].get<double>(), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(j["normalized"][1][1].get<double>(), 1.0 / 3.0, 1e-15);
  EXPECT_NE(r.out.find("0.4082"), std::string::npos);
}

TEST_F(Cli, InspectAllOnesIsUniform) {
  auto r = run({"inspect-graph", "--mode", "all_ones", "--test", path("graphs.jsonl"), "--index", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1 1 1\n1 1 1\n1 1 1\n"), std::string::npos);
  EXPECT_NE(r.out.find("0.3333 0.3333 0.3333\n"), std::string::npos);
}

TEST_F(Cli, InspectIndexOutOfRange) {
  EXPECT_EQ(run({"inspect-graph", "--test", path("graphs.jsonl"), "--index", "5"}).code, cli::kExitUsage);
}

TEST_F(Cli, SweepRowsMatchStandaloneRuns) {
  auto r = run({"sweep", "--config", cfg(), "--set", "epochs=2", "--train", path("train.jsonl"), "--dev",
                path("dev.jsonl"), "--grid", "pooling.p=50,100", "--out", path("sweep.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines_of(r.out).size(), 1u + 2u);
  auto rows = nlohmann::json::parse(slurp(path("sweep.json")));
  ASSERT_EQ(rows.size(), 2u);

  auto alone = run({"train", "--config", cfg(), "--set", "epochs=2", "--set", "pooling.p=100", "--train",
                    path("train.jsonl"), "--dev", path("dev.jsonl"), "--checkpoint", path("p100.ckpt")});
  ASSERT_EQ(alone.code, 0) << alone.err;
  auto ev = run({"eval", "--checkpoint", path("p100.ckpt"), "--test", path("dev.jsonl"), "--out", path("p100.json")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  auto rep = nlohmann::json::parse(slurp(path("p100.json")));
  EXPECT_EQ(rows[1]["value"], "100");
  EXPECT_EQ(rows[1]["report"]["macro"], rep["macro"]);
  EXPECT_EQ(rows[1]["report"]["micro"], rep["micro"]);
}

TEST_F(Cli, SweepEmptyGridIsUsageError) {
  for (const std::string grid : {"pooling.p=", "pooling.p", "=1,2"}) {
    auto r = run({"sweep", "--config", cfg(), "--train", path("train.jsonl"), "--dev", path("dev.jsonl"), "--grid",
                  grid});
    EXPECT_EQ(r.code, cli::kExitUsage) << grid << ": " << r.err;
  }
}

TEST_F(Cli, SweepUnknownKeyFailsBeforeTraining) {
  auto r = run({"sweep", "--config", cfg(), "--train", path("train.jsonl"), "--dev", path("dev.jsonl"), "--grid",
                "bogus=1,2"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("bogus"), std::string::npos);
}

TEST_F(Cli, CorporaAreNotModified) {
  const auto before = slurp(path("train.jsonl"));
  run({"train", "--config", cfg(), "--set", "epochs=1", "--train", path("train.jsonl"), "--checkpoint",
       path("y.ckpt")});
  run({"predict", "--checkpoint", path("y.ckpt"), "--test", path("train.jsonl")});
  EXPECT_EQ(slurp(path("train.jsonl")), before);
}

}  // namespace
}  // namespace sgcn
