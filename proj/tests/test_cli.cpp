#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fragtree/cli.hpp"

using namespace fragtree;
namespace fs = std::filesystem;

namespace {

const std::string kHalfHalf = R"({"family":"discrete-atoms","atoms":[{"weight":1.0,"masses":[0.5,0.5]}]})";

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
           ("fragtree_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "half.json") << kHalfHalf;
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI binary; returns its exit status.
  int run(const std::string& args) const {
    const std::string cmd = std::string(FRAGTREE_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                            " 2> " + (dir_ / "stderr.txt").string();
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }
  std::string out() const { return slurp(dir_ / "stdout.txt"); }
  std::string measure() const { return (dir_ / "half.json").string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SimulateIsDeterministic) {
  const std::string base = "simulate --measure " + measure() + " --alpha -0.5 --n 6 --seed 11 --out ";
  ASSERT_EQ(run(base + (dir_ / "a").string()), 0);
  ASSERT_EQ(run(base + (dir_ / "b").string()), 0);
  const std::string a = slurp(dir_ / "a" / "trace_11.txt");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "b" / "trace_11.txt"));
  // The file is a faithful trace of the same simulation done in process.
  const auto tr = load_trace((dir_ / "a" / "trace_11.txt").string());
  EXPECT_TRUE(tr == simulate_self_similar(measure_from_string(kHalfHalf), -0.5, 6, 11));
}

TEST_F(CliTest, ReplicasUseConsecutiveSeeds) {
  ASSERT_EQ(run("simulate --measure " + measure() + " --alpha -1 --n 2 --seed 40 --replicas 3 --threads 2 --out " +
                (dir_ / "r").string()),
            0);
  for (int s : {40, 41, 42}) {
    const auto p = dir_ / "r" / ("trace_" + std::to_string(s) + ".txt");
    ASSERT_TRUE(fs::exists(p));
    EXPECT_EQ(load_trace(p.string()).seed, static_cast<std::uint64_t>(s));
  }
  EXPECT_FALSE(fs::exists(dir_ / "r" / "trace_43.txt"));
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run("simulate --measure " + measure() + " --alpha 0 --seed 1 --out " + dir_.string()), 2);
  EXPECT_EQ(run("simulate --measure " + measure() + " --alpha 0.5 --seed 1 --out " + dir_.string()), 2);
  EXPECT_EQ(run("simulate --measure " + measure() + " --alpha -0.5 --out " + dir_.string()), 2);
  EXPECT_EQ(run("simulate --measure " + (dir_ / "missing.json").string() + " --seed 1"), 2);
  std::ofstream(dir_ / "bad.json") << "{\"family\": ";
  EXPECT_EQ(run("simulate --measure " + (dir_ / "bad.json").string() + " --seed 1 --out " + dir_.string()), 2);
  EXPECT_EQ(run("constants --measure " + (dir_ / "bad.json").string()), 2);
  EXPECT_EQ(run("verify nosuch --measure " + measure() + " --seed 1 --out " + dir_.string()), 2);
  EXPECT_EQ(run("simulate --measure " + measure() + " --seed 1 --death-tol 0 --out " + dir_.string()), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run(""), 2);
}

TEST_F(CliTest, TreeSingleLeaf) {
  ASSERT_EQ(run("tree --measure " + measure() + " --alpha -1 --n 3 --k 1 --seed 5 --out " + dir_.string()), 0);
  const auto tr = simulate_self_similar(measure_from_string(kHalfHalf), -1.0, 3, 5);
  const auto t = from_newick(slurp(dir_ / "tree.nwk"));
  ASSERT_EQ(t.leaf_count(), 1u);
  EXPECT_EQ(t.vertex(t.leaf(1)).length, tr.death(1).value);
}

TEST_F(CliTest, TreeOutputsMatchInMemory) {
  ASSERT_EQ(run("tree --measure " + measure() + " --alpha -0.5 --n 9 --seed 3 --out " + dir_.string()), 0);
  const auto tr = simulate_self_similar(measure_from_string(kHalfHalf), -0.5, 9, 3);
  const auto tree = build_marginal_tree(tr, 9);
  Rng rng(3, 0x0bde5ULL);
  const auto planar = randomize_orders(tree, rng);
  std::string json = slurp(dir_ / "tree.json");
  EXPECT_TRUE(tree_from_json_string(json) == planar.tree);
  EXPECT_TRUE(same_shape_and_lengths(from_newick(slurp(dir_ / "tree.nwk")), planar.tree));

  std::istringstream csv(slurp(dir_ / "distances.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "i,j,distance,D_i,D_j,D_ij");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    ASSERT_EQ(v.size(), 6u);
    EXPECT_EQ(v[2], v[3] + v[4] - 2 * v[5]);
    ++rows;
  }
  EXPECT_EQ(rows, 36u);
  EXPECT_TRUE(fs::exists(dir_ / "heights.tsv"));
  EXPECT_TRUE(fs::exists(dir_ / "intervals.tsv"));
}

TEST_F(CliTest, TreeFromTraceFile) {
  ASSERT_EQ(run("simulate --measure " + measure() + " --alpha -0.5 --n 4 --seed 8 --out " + dir_.string()), 0);
  ASSERT_EQ(run("tree --trace " + (dir_ / "trace_8.txt").string() + " --out " + (dir_ / "t1").string()), 0);
  ASSERT_EQ(run("tree --measure " + measure() + " --alpha -0.5 --n 4 --seed 8 --out " + (dir_ / "t2").string()), 0);
  for (const char* f : {"tree.nwk", "tree.json", "heights.tsv", "intervals.tsv", "distances.csv"})
    EXPECT_EQ(slurp(dir_ / "t1" / f), slurp(dir_ / "t2" / f)) << f;
}

TEST_F(CliTest, VerifyLaplacePasses) {
  EXPECT_EQ(run("verify laplace --measure " + measure() + " --seed 1 --replicas 20000 --out " + dir_.string()), 0);
  EXPECT_EQ(out().rfind("PASS", 0), 0u);
  EXPECT_TRUE(fs::exists(dir_ / "verify_laplace.csv"));
}

TEST_F(CliTest, ConstantsHalfHalf) {
  ASSERT_EQ(run("constants --measure " + measure()), 0);
  const std::string o = out();
  EXPECT_NE(o.find("Phi,1,0.5,"), std::string::npos);
  EXPECT_NE(o.find("varrho,,1,"), std::string::npos);
}

TEST_F(CliTest, ConstantsBinaryDensity) {
  ASSERT_EQ(run("constants --measure '{\"family\":\"binary-density\",\"theta\":0.5,\"epsilon\":0.1}'"), 0);
  const std::string o = out();
  EXPECT_NE(o.find("theta_low,,0.5,"), std::string::npos);
  EXPECT_NE(o.find("theta_up,,0.5,"), std::string::npos);
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  std::ofstream(dir_ / "run.toml") << "[simulate]\nmeasure = \"" << measure() << "\"\nalpha = -0.5\nn = 5\nseed = 2\n";
  ASSERT_EQ(run("simulate --config " + (dir_ / "run.toml").string() + " --out " + (dir_ / "c1").string()), 0);
  ASSERT_EQ(run("simulate --measure " + measure() + " --alpha -0.5 --n 5 --seed 2 --out " + (dir_ / "c2").string()), 0);
  EXPECT_EQ(slurp(dir_ / "c1" / "trace_2.txt"), slurp(dir_ / "c2" / "trace_2.txt"));
  ASSERT_EQ(run("simulate --config " + (dir_ / "run.toml").string() + " --seed 9 --out " + (dir_ / "c3").string()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "c3" / "trace_9.txt"));
  std::ofstream(dir_ / "flat.toml") << "seed = 2\n";
  EXPECT_EQ(run("simulate --config " + (dir_ / "flat.toml").string() + " --measure " + measure()), 2);
}

TEST(CliInProcess, GuardedMapsErrors) {
  std::ostringstream err;
  EXPECT_EQ(cli::guarded(err, []() -> int { throw ValidationError("x"); }), cli::kExitUsage);
  EXPECT_EQ(cli::guarded(err, []() -> int { throw ConfigurationError("x"); }), cli::kExitUsage);
  EXPECT_EQ(cli::guarded(err, []() -> int { throw ParseError("x", 3); }), cli::kExitUsage);
  EXPECT_EQ(cli::guarded(err, [] { return cli::kExitCheckFailed; }), cli::kExitCheckFailed);
}

TEST(CliInProcess, ParallelMapKeepsOrder) {
  const auto v = cli::parallel_map(17, 4, [](std::size_t i) { return i * i; });
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], i * i);
}
