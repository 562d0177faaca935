#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "grpo_agg/cli.hpp"

using namespace grpo_agg;

namespace {

struct Invocation {
  int code = 0;
  std::string out;
  std::string err;
};

Invocation run(std::vector<std::string> args) {
  args.insert(args.begin(), "grpo-agg");
  std::ostringstream out, err;
  Invocation r;
  r.code = cli::run_command(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string scenario(const std::string& name) { return std::string(GRPO_AGG_SOURCE_DIR) + "/scenarios/" + name; }

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("grpo_agg_test_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, ClosedFormSquareRoot) {
  const Invocation r = run({"closed-form", "--pi-ref", "0.25", "--beta", "1", "--gamma", "1", "--case", "g2"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0.5\n");
}

TEST(Cli, ClosedFormCanonicalisesLabels) {
  const Invocation pos = run({"closed-form", "--pi-ref", "0.7", "--beta", "0.5", "--gamma", "1", "--case", "g2"});
  const Invocation neg = run({"closed-form", "--pi-ref", "0.3", "--beta", "0.5", "--gamma", "-1", "--case", "g2"});
  EXPECT_NEAR(std::stod(pos.out) + std::stod(neg.out), 1.0, 1e-15);
}

TEST(Cli, ClosedFormCandidates) {
  const Invocation r = run({"closed-form", "--pi-ref", "0.5", "--beta", "10", "--case", "limit-direct-kl"});
  ASSERT_EQ(r.code, 0);
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0][0], "candidate");
  EXPECT_EQ(rows[1][1], "interior_root");
  EXPECT_EQ(rows[3][1], "boundary");
  const Invocation small = run({"closed-form", "--pi-ref", "0.5", "--beta", "0.1", "--case", "limit-direct-kl"});
  EXPECT_EQ(parse_csv(small.out).size(), 2u);
}

TEST(Cli, SweepFigureOne) {
  const std::string out = temp_path("fig1.csv");
  const Invocation r = run({"sweep", scenario("fig1.json"), "-o", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(slurp(out));
  ASSERT_EQ(rows.size(), 405u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"curve", "variant", "pi_ref_a", "beta", "gamma", "pi_a"}));
  for (std::size_t i = 2; i < rows.size(); ++i) {
    if (rows[i][0] == rows[i - 1][0]) {
      EXPECT_GE(std::stod(rows[i][5]), std::stod(rows[i - 1][5]));
    }
  }
  // Deterministic output.
  const std::string again = temp_path("fig1b.csv");
  ASSERT_EQ(run({"sweep", scenario("fig1.json"), "-o", again}).code, 0);
  EXPECT_EQ(slurp(out), slurp(again));
  std::filesystem::remove(out);
  std::filesystem::remove(again);
}

TEST(Cli, SolveTieReturnsReference) {
  const Invocation r = run({"solve", scenario("tie.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i][3], rows[i][4]);
}

TEST(Cli, SolveAgreesWithClosedForm) {
  const Invocation s = run({"solve", scenario("binary.json")});
  ASSERT_EQ(s.code, 0) << s.err;
  const Invocation c = run({"closed-form", "--pi-ref", "0.2", "--beta", "0.5", "--case", "g2"});
  EXPECT_NEAR(std::stod(parse_csv(s.out)[1][4]), std::stod(c.out), 1e-8);
}

TEST(Cli, SolveMultistartAndNonConvergence) {
  const Invocation m = run({"solve", scenario("mixed.json"), "--multistart"});
  EXPECT_EQ(m.code, 0) << m.err;
  const Invocation n = run({"solve", scenario("binary.json"), "--max-iter", "1"});
  EXPECT_EQ(n.code, 3);
}

TEST(Cli, OracleVerify) {
  const Invocation r = run({"oracle-verify", scenario("three_outputs.json"), "--cases", "4", "--seed", "3"});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(std::stod(rows[i][6]), 1e-4);
}

TEST(Cli, TrainWritesTrace) {
  const std::string out = temp_path("trace.csv");
  const Invocation r = run({"train", scenario("train_binary.json"), "--config", scenario("trainer.json"), "-o", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = slurp(out);
  EXPECT_EQ(text.rfind("# seed=1", 0), 0u);
  const auto rows = parse_csv(text);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"step", "context_id", "output_id", "probability"}));
  EXPECT_EQ(rows.size(), 1u + 2u * 20u);
  EXPECT_NEAR(std::stod(rows[rows.size() - 2][3]), 0.7109772228646444, 0.02);
  std::filesystem::remove(out);
}

TEST(Cli, Estimate) {
  const Invocation exact = run({"estimate", scenario("bernoulli_pair.json"), "--output", "a", "--context", "q",
                         "--samples", "0"});
  ASSERT_EQ(exact.code, 0) << exact.err;
  const Invocation mc = run({"estimate", scenario("bernoulli_pair.json"), "--output", "a", "--context", "q",
                      "--samples", "20000", "--seed", "4"});
  ASSERT_EQ(mc.code, 0);
  const auto e = parse_csv(exact.out)[1];
  const auto m = parse_csv(mc.out)[1];
  EXPECT_EQ(m[3], "monte_carlo");
  EXPECT_LE(std::abs(std::stod(e[4]) - std::stod(m[4])), 5.0 * std::stod(m[5]));
  EXPECT_EQ(run({"estimate", scenario("bernoulli_pair.json"), "--output", "z", "--context", "q"}).code, 2);
}

TEST(Cli, Baselines) {
  const Invocation r = run({"baselines", scenario("mixed.json"), "--beta", "0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"context_id", "output_id", "pi_ref", "rlhf", "nlhf", "grpo"}));
  EXPECT_EQ(rows.size(), 6u);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"closed-form", "--pi-ref", "0.2"}).code, 1);
  EXPECT_EQ(run({"closed-form", "--pi-ref", "0.2", "--beta", "1", "--case", "g3"}).code, 1);
  EXPECT_EQ(run({"solve", "/nonexistent/scenario.json"}).code, 2);
  EXPECT_EQ(run({"closed-form", "--pi-ref", "1.5", "--beta", "1", "--case", "g2"}).code, 2);
  const std::string bad = temp_path("bad.json");
  std::ofstream(bad) << R"({"contexts": [], "hyper": {"beta": 1, "group_size": 2}})";
  EXPECT_EQ(run({"solve", bad}).code, 2);
  std::filesystem::remove(bad);
}
