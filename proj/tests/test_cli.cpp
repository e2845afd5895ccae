#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kakutani;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kakutani_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "kakutani");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) { return cli::read_file(p.string()); }

json manifest(const fs::path& dir) { return json::parse(slurp(dir / "manifest.json")); }

fs::path write_text(const fs::path& dir, const std::string& name, const std::string& text) {
  std::ofstream(dir / name) << text;
  return dir / name;
}

}  // namespace

TEST(Cli, Sha256ReferenceVectors) {
  EXPECT_EQ(cli::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, BuildChaconHeights) {
  const auto dir = scratch("build_chacon");
  ASSERT_EQ(run({"--out-dir", dir.string(), "build", "builtin:chacon", "--stages", "4"}), cli::kOk);
  const auto rep = json::parse(slurp(dir / "stages.json"));
  std::vector<std::uint64_t> h;
  for (const auto& s : rep["stages"]) h.push_back(s["h"]);
  EXPECT_EQ(h, (std::vector<std::uint64_t>{1, 4, 13, 40}));
  EXPECT_EQ(rep["stages"][3]["w"], "2/81");
  const auto m = manifest(dir);
  EXPECT_EQ(m["exit_code"], 0);
  EXPECT_EQ(m["outputs"].size(), 1u);
  EXPECT_EQ(m["command"], "build");
}

TEST(Cli, BuildOdometerHeights) {
  const auto dir = scratch("build_odometer");
  ASSERT_EQ(run({"--out-dir", dir.string(), "build", "builtin:odometer(2)", "--stages", "3"}), cli::kOk);
  const auto rep = json::parse(slurp(dir / "stages.json"));
  std::vector<std::uint64_t> h;
  for (const auto& s : rep["stages"]) h.push_back(s["h"]);
  EXPECT_EQ(h, (std::vector<std::uint64_t>{1, 2, 4}));
}

TEST(Cli, SpecFilesAreDigested) {
  const auto dir = scratch("digest");
  const std::string text = "system t\nstage * : cuts=2 above=[1,0]\n";
  const auto spec = write_text(dir, "t.spec", text);
  ASSERT_EQ(run({"--out-dir", (dir / "o").string(), "build", spec.string(), "--stages", "3"}), cli::kOk);
  const auto m = manifest(dir / "o");
  ASSERT_EQ(m["inputs"].size(), 1u);
  EXPECT_EQ(m["inputs"][0]["sha256"], cli::sha256_hex(text));

  const auto js = write_text(dir, "t.json", to_json(parse_spec(text)).dump());
  ASSERT_EQ(run({"--out-dir", (dir / "j").string(), "build", js.string(), "--stages", "3"}), cli::kOk);
  EXPECT_EQ(json::parse(slurp(dir / "j" / "stages.json"))["stages"],
            json::parse(slurp(dir / "o" / "stages.json"))["stages"]);
}

TEST(Cli, DivergentSpecExitsWithValidationCode) {
  const auto dir = scratch("divergent");
  const auto spec = write_text(dir, "d.spec", "stage * : cuts=1 above=[1]\n");
  EXPECT_EQ(run({"--out-dir", dir.string(), "build", spec.string()}), cli::kValidation);
  const auto m = manifest(dir);
  EXPECT_EQ(m["exit_code"], cli::kValidation);
  EXPECT_EQ(m["status"], "failed");
  EXPECT_NE(m["error"].get<std::string>().find("spacer mass"), std::string::npos);
}

TEST(Cli, ParseErrorsExitTwo) {
  const auto dir = scratch("parse");
  const auto bad = write_text(dir, "bad.spec", "stage * : cuts=two\n");
  EXPECT_EQ(run({"--out-dir", dir.string(), "build", bad.string()}), cli::kParse);
  const auto badjson = write_text(dir, "bad.json", "{\"stages\": [");
  EXPECT_EQ(run({"--out-dir", dir.string(), "build", badjson.string()}), cli::kParse);
  EXPECT_EQ(manifest(dir)["exit_code"], cli::kParse);
  EXPECT_EQ(run({"--out-dir", dir.string(), "ergodic", "builtin:chacon", "--eps", "x/y"}), cli::kParse);
}

TEST(Cli, UsageAndIoCodes) {
  const auto dir = scratch("usage");
  EXPECT_EQ(run({}), cli::kUsage);
  EXPECT_EQ(run({"build"}), cli::kUsage);
  EXPECT_EQ(run({"--version"}), cli::kOk);
  EXPECT_EQ(run({"--out-dir", dir.string(), "build", (dir / "missing.spec").string()}), cli::kIo);
  EXPECT_EQ(run({"--out-dir", dir.string(), "verify", "--suite", "nightly"}), cli::kPrecondition);
}

TEST(Cli, OrbitOdometerTrace) {
  const auto dir = scratch("orbit");
  ASSERT_EQ(run({"--out-dir", dir.string(), "orbit", "od:[2,*]", "--steps", "8"}), cli::kOk);
  EXPECT_EQ(slurp(dir / "orbit.csv"), "step,point\n0,0\n1,1\n2,01\n3,11\n4,001\n5,101\n6,011\n7,111\n8,0001\n");
}

TEST(Cli, InduceChaconHistogram) {
  const auto dir = scratch("induce");
  ASSERT_EQ(run({"--out-dir", dir.string(), "induce", "builtin:chacon", "--stage", "5"}), cli::kOk);
  // Stage 5: 81 base copies, 80 resolved returns, half with r = 1 and half with r = 2.
  EXPECT_EQ(slurp(dir / "histogram.csv"), "r,mass_numerator,mass_denominator,cell_count\n1,80,243,40\n2,80,243,40\n");
  const auto info = json::parse(slurp(dir / "induce.json"));
  EXPECT_EQ(info["kac_sum"], "80/81");
}

TEST(Cli, InduceRotationHistogram) {
  const auto dir = scratch("induce_rot");
  ASSERT_EQ(run({"--out-dir", dir.string(), "induce", "cf:[0;(1)]"}), cli::kOk);
  const std::string csv = slurp(dir / "histogram.csv");
  EXPECT_NE(csv.find("\n1,-1 + 2*alpha,"), std::string::npos);
  EXPECT_NE(csv.find("\n2,1 - 1*alpha,"), std::string::npos);
  EXPECT_EQ(json::parse(slurp(dir / "induce.json"))["kac_sum"], "1 + 0*alpha");
}

TEST(Cli, ErgodicKacRows) {
  const auto dir = scratch("ergodic");
  ASSERT_EQ(run({"--out-dir", dir.string(), "ergodic", "builtin:dyadic_pair_left", "--samples", "5", "--n", "1", "64"}),
            cli::kOk);
  const auto s = json::parse(slurp(dir / "ergodic.json"));
  EXPECT_EQ(s["target"], "2/1");
  EXPECT_EQ(s["worst_deviation"], "0/1");
  std::size_t lines = 0;
  for (char c : slurp(dir / "kac.csv")) lines += c == '\n';
  EXPECT_EQ(lines, 11u);
}

TEST(Cli, EvenMatchOnUnequalPairIsInadmissible) {
  const auto dir = scratch("inadmissible");
  EXPECT_EQ(run({"--out-dir", dir.string(), "match", "builtin:chacon", "builtin:triple_heavy"}), cli::kInadmissible);
  EXPECT_EQ(run({"--out-dir", dir.string(), "match", "--mode", "noneven", "builtin:triple_heavy", "builtin:chacon"}),
            cli::kInadmissible);
  EXPECT_EQ(run({"--out-dir", dir.string(), "match", "builtin:chacon", "builtin:dyadic_pair_left"}), cli::kInadmissible);
  EXPECT_EQ(manifest(dir)["exit_code"], cli::kInadmissible);
}

TEST(Cli, EvenMatchBothSemantics) {
  const auto dir = scratch("match_both");
  ASSERT_EQ(run({"--out-dir", dir.string(), "match", "builtin:dyadic_pair_left", "builtin:dyadic_pair_right",
                 "--samples", "2000", "--semantics", "both"}),
            cli::kOk);
  const auto v = json::parse(slurp(dir / "verdicts.json"));
  EXPECT_EQ(v["round_trip_failures"], 0);
  EXPECT_GT(v["disagreements"]["count"], 0);
  EXPECT_EQ(v["disagreements"]["count"], v["disagreements"]["at_equality_cells"]);
  EXPECT_EQ(v["disagreements"]["classification"], "boundary");
  std::set<std::string> listed;
  const auto m = manifest(dir);
  for (const auto& o : m["outputs"]) listed.insert(fs::path(o.get<std::string>()).filename().string());
  EXPECT_EQ(listed, (std::set<std::string>{"trace.csv", "disagreements.csv", "verdicts.json"}));
}

TEST(Cli, WindowInstabilityExitsFive) {
  const auto dir = scratch("unstable");
  EXPECT_EQ(run({"--out-dir", dir.string(), "match", "builtin:dyadic_pair_left", "builtin:dyadic_pair_right",
                 "--samples", "200", "--window", "2", "--max-window", "2"}),
            cli::kUnstable);
  // Outputs are still written and listed.
  EXPECT_TRUE(fs::exists(dir / "trace.csv"));
  EXPECT_EQ(manifest(dir)["outputs"].size(), 2u);
}

TEST(Cli, NonEvenPlanSummary) {
  const auto dir = scratch("noneven");
  ASSERT_EQ(run({"--out-dir", dir.string(), "match", "--mode", "noneven", "builtin:chacon", "builtin:triple_heavy",
                 "--samples", "300"}),
            cli::kOk);
  const auto p = json::parse(slurp(dir / "plan.json"));
  EXPECT_EQ(p["epsilon_bound"], "1/2");
  EXPECT_EQ(p["epsilon"], "1/4");
  EXPECT_GT(p["min_margin"], 0);
  EXPECT_EQ(p["conjugacy_failures"], 0);
  EXPECT_EQ(p["round_trip_failures"], 0);
}

TEST(Cli, IdenticalRunsGiveIdenticalOutputs) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  for (const auto& dir : {a, b})
    ASSERT_EQ(run({"--seed", "7", "--out-dir", dir.string(), "match", "builtin:dyadic_pair_left",
                   "builtin:dyadic_pair_right", "--samples", "500", "--semantics", "both"}),
              cli::kOk);
  for (const char* f : {"trace.csv", "disagreements.csv", "verdicts.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  // Another seed samples other points.
  const auto c = scratch("det_c");
  ASSERT_EQ(run({"--seed", "8", "--out-dir", c.string(), "match", "builtin:dyadic_pair_left",
                 "builtin:dyadic_pair_right", "--samples", "500"}),
            cli::kOk);
  EXPECT_NE(slurp(a / "trace.csv"), slurp(c / "trace.csv"));
}

TEST(Cli, VerifyWritesVerdictsAndSummary) {
  const auto dir = scratch("verify");
  ASSERT_EQ(run({"--out-dir", dir.string(), "verify", "--seed", "3"}), cli::kOk);
  const std::string summary = slurp(dir / "summary.txt");
  EXPECT_NE(summary.find("checks passed"), std::string::npos);
  std::size_t lines = 0;
  for (char c : slurp(dir / "verdicts.jsonl")) lines += c == '\n';
  EXPECT_GT(lines, 30u);
  EXPECT_EQ(manifest(dir)["config"]["suite"]["seed"], 3);
}

TEST(Cli, ExitCodesAreDistinct) {
  const std::set<int> codes{cli::kOk,        cli::kInternal,   cli::kParse,     cli::kValidation,
                            cli::kInadmissible, cli::kUnstable, cli::kChecksFailed, cli::kExhausted,
                            cli::kPrecondition, cli::kIo,       cli::kUsage};
  EXPECT_EQ(codes.size(), 11u);
}
