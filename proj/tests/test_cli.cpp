#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sstream>

#include "support.hpp"

using namespace ig2i;
using ig2i::testing::read_file;
using ig2i::testing::run_command;
using ig2i::testing::TempDir;
namespace tst = ig2i::testing;

namespace {

const std::string kCli = IG2I_CLI_PATH;

tst::CommandResult cli(const std::string& args) { return run_command(kCli + " " + args + " 2>/dev/null"); }

std::vector<std::string> payload_lines(const std::string& out) {
  std::vector<std::string> lines;
  std::istringstream in(out);
  for (std::string l; std::getline(in, l);)
    if (!l.empty() && l[0] != '#') lines.push_back(l);
  return lines;
}

void write_two_node_graph(const std::filesystem::path& dir) {
  Rng rng(1);
  std::vector<NodeRecord> nodes{tst::random_node(0, 4, 2, 2, rng), tst::random_node(1, 4, 2, 2, rng)};
  save_dataset(dir, MultimodalGraph(std::move(nodes), {{0, 1}}));
}

// Small synthetic graph plus a briefly trained checkpoint shared by the
// pipeline tests.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const auto d = (dir_->path / "g").string();
    ASSERT_EQ(cli("gen-synth --seed 3 --nodes 60 --clusters 3 --out " + d).exit_code, 0);
    ASSERT_EQ(cli("train --graph " + d + " --out " + ckpt() + " --steps 20 --test-nodes 10 --seed 4").exit_code, 0);
    ASSERT_EQ(cli("train --graph " + d + " --out " + baseline() +
                  " --steps 20 --test-nodes 10 --seed 4 --encoder baseline")
                  .exit_code,
              0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string graph() { return (dir_->path / "g").string(); }
  static std::string ckpt() { return (dir_->path / "m.ckpt").string(); }
  static std::string baseline() { return (dir_->path / "b.ckpt").string(); }
  static TempDir* dir_;
};
TempDir* CliPipeline::dir_ = nullptr;

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) {
  EXPECT_EQ(cli("").exit_code, 2);
  EXPECT_EQ(cli("frobnicate").exit_code, 2);
  EXPECT_EQ(cli("ppr --target 0").exit_code, 2);  // --graph missing
  EXPECT_EQ(cli("--help").exit_code, 0);
}

TEST(Cli, GenSynthIsDeterministic) {
  TempDir t("gen");
  const auto d = (t / "d").string();
  const auto first = cli("gen-synth --seed 7 --out " + d);
  ASSERT_EQ(first.exit_code, 0);
  const std::vector<std::string> files{"nodes.jsonl", "edges.tsv", "truth.json", "config.txt"};
  std::vector<std::string> before;
  for (const auto& f : files) before.push_back(read_file(t / "d" / f));
  const auto second = cli("gen-synth --seed 7 --out " + d);
  EXPECT_EQ(first.out, second.out);
  for (std::size_t i = 0; i < files.size(); ++i) {
    EXPECT_FALSE(before[i].empty()) << files[i];
    EXPECT_EQ(before[i], read_file(t / "d" / files[i])) << files[i];
  }
  ASSERT_EQ(cli("gen-synth --seed 8 --out " + d).exit_code, 0);
  EXPECT_NE(before[0], read_file(t / "d" / "nodes.jsonl"));
}

TEST(Cli, PprTwoNodeExample) {
  TempDir t("ppr");
  write_two_node_graph(t / "g");
  const auto r = cli("ppr --graph " + (t / "g").string() + " --target 0 --beta 0.85");
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_EQ(payload_lines(r.out), (std::vector<std::string>{"0 0.540541", "1 0.459459"}));
  EXPECT_NE(r.out.find("# ppr.beta = 0.85"), std::string::npos);
}

TEST(Cli, FlagsOverrideConfigFile) {
  TempDir t("override");
  write_two_node_graph(t / "g");
  {
    std::ofstream cfg(t / "run.cfg");
    cfg << "# comment\nppr.beta = 0.5\n";
  }
  const auto base = "ppr --graph " + (t / "g").string() + " --target 0 --config " + (t / "run.cfg").string();
  const auto from_file = cli(base);
  EXPECT_NE(from_file.out.find("# ppr.beta = 0.5"), std::string::npos);
  // two nodes: target keeps 1 / (1 + beta)
  EXPECT_EQ(payload_lines(from_file.out), (std::vector<std::string>{"0 0.666667", "1 0.333333"}));
  const auto from_flag = cli(base + " --beta 0.85");
  EXPECT_NE(from_flag.out.find("# ppr.beta = 0.85"), std::string::npos);
  EXPECT_EQ(payload_lines(from_flag.out)[0], "0 0.540541");
  const auto from_set = cli(base + " --set ppr.beta=0.85");
  EXPECT_EQ(payload_lines(from_set.out), payload_lines(from_flag.out));
}

TEST(Cli, ErrorExitCodes) {
  TempDir t("errors");
  write_two_node_graph(t / "g");
  const auto g = (t / "g").string();
  EXPECT_EQ(cli("ppr --graph " + (t / "missing").string() + " --target 0").exit_code, 1);
  EXPECT_EQ(cli("ppr --graph " + g + " --target 5").exit_code, 2);
  EXPECT_EQ(cli("ppr --graph " + g + " --target 0 --beta 1.5").exit_code, 2);
  EXPECT_EQ(cli("ppr --graph " + g + " --target 0 --set nonsense").exit_code, 2);
  EXPECT_EQ(cli("sample-neighbors --graph " + g + " --target 0 --sim manhattan").exit_code, 2);
  EXPECT_EQ(cli("generate --ckpt " + (t / "none.ckpt").string() + " --target 0").exit_code, 1);
}

TEST(Cli, SampleNeighborsJson) {
  TempDir t("sn");
  ASSERT_EQ(cli("gen-synth --seed 1 --nodes 40 --clusters 2 --out " + (t / "g").string()).exit_code, 0);
  const auto r = cli("sample-neighbors --graph " + (t / "g").string() + " --target 3 --k-ppr 10 --k 4 --sim cosine");
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["target"], 3);
  ASSERT_EQ(j["neighbors"].size(), 4u);
  for (const auto& n : j["neighbors"]) {
    EXPECT_TRUE(n.contains("id") && n.contains("ppr") && n.contains("sim"));
    EXPECT_NE(n["id"], 3);
  }
  EXPECT_EQ(j["config"]["sampler.k"], "4");
  // similarity scores come out sorted
  for (std::size_t i = 1; i < 4; ++i) EXPECT_GE(j["neighbors"][i - 1]["sim"], j["neighbors"][i]["sim"]);
}

TEST_F(CliPipeline, TrainIsDeterministic) {
  TempDir t("train");
  const auto args = "train --graph " + graph() + " --steps 20 --test-nodes 10 --seed 4 --out ";
  const auto a = cli(args + (t / "a.ckpt").string());
  const auto b = cli(args + (t / "b.ckpt").string() + " --workers 2");
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(read_file(t / "a.ckpt"), read_file(ckpt()));
  EXPECT_EQ(read_file(t / "a.ckpt"), read_file(t / "b.ckpt"));
  const auto ja = nlohmann::json::parse(a.out), jb = nlohmann::json::parse(b.out);
  EXPECT_EQ(ja["loss_every_100"], jb["loss_every_100"]);
  EXPECT_EQ(ja["config"]["data.test_ids"], jb["config"]["data.test_ids"]);
}

TEST_F(CliPipeline, GenerateIsDeterministicAndEchoesConfig) {
  const auto args = "generate --ckpt " + ckpt() + " --target 5 --seed 11";
  const auto a = cli(args), b = cli(args);
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(a.out, b.out);
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["latent"].size(), 16u);
  EXPECT_EQ(j["config"]["generate.s_text"], "7.5");
  EXPECT_EQ(j["config"]["generate.s_graph"], "1.5");
  EXPECT_EQ(j["config"]["model.d"], "16");
  EXPECT_NE(cli(args + " --s-graph 0.5").out, a.out);
  EXPECT_NE(cli("generate --ckpt " + ckpt() + " --target 5 --seed 12").out, a.out);
}

TEST_F(CliPipeline, GenerateWithSeveralConditions) {
  const auto r = cli("generate --ckpt " + ckpt() + " --target 5 --s-graph2 0.5 --cluster2 2 --graph-cond c1:0.25 "
                     "--graph-cond 20,21,22:0.1");
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j["conditions"].size(), 4u);
  EXPECT_EQ(j["conditions"][1]["source"], "c2");
  EXPECT_EQ(j["conditions"][2]["scale"], 0.25);
  EXPECT_EQ(cli("generate --ckpt " + ckpt() + " --target 5 --cluster2 2").exit_code, 2);
  EXPECT_EQ(cli("generate --ckpt " + ckpt() + " --target 5 --graph-cond c9:1").exit_code, 2);
  EXPECT_EQ(cli("generate --ckpt " + ckpt() + " --target 5 --graph-cond 1,2").exit_code, 2);
}

TEST_F(CliPipeline, SweepCsv) {
  const auto args = "sweep --ckpt " + ckpt() + " --target 5 --s-text 1 --s-graph 0,1 --seeds 2";
  const auto a = cli(args);
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(a.out, cli(args + " --workers 3").out);
  const auto lines = payload_lines(a.out);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "s_text,s_graph,seed,style_cosine,content_cosine");
}

TEST_F(CliPipeline, EvalReport) {
  const auto args = "eval --ckpt " + ckpt() + " --mode graph --seeds 2";
  const auto a = cli(args);
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(a.out, cli(args + " --workers 2").out);
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["mode"], "graph");
  EXPECT_EQ(j["n"], 20);
  EXPECT_EQ(j["per_node"].size(), 10u);
  EXPECT_TRUE(j.contains("mean_cosine_x100") && j.contains("fid"));
  EXPECT_EQ(cli("eval --ckpt " + ckpt() + " --mode baseline_encoder").exit_code, 2);
  EXPECT_EQ(cli("eval --ckpt " + ckpt() + " --mode sideways").exit_code, 2);
}

TEST_F(CliPipeline, AblateCsv) {
  const auto a = cli("ablate --ckpt " + ckpt() + " --baseline-ckpt " + baseline());
  ASSERT_EQ(a.exit_code, 0);
  const auto lines = payload_lines(a.out);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "mode,n,mean_cosine_x100,fid");
  EXPECT_EQ(lines[4].rfind("baseline_encoder,10,", 0), 0u);
  EXPECT_EQ(cli("ablate --ckpt " + baseline()).exit_code, 2);
}

TEST_F(CliPipeline, IngestReportsShape) {
  const auto r = cli("ingest --graph " + graph());
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["nodes"], 60);
  EXPECT_EQ(j["d"], 16);
  EXPECT_EQ(j["has_truth"], true);
}
