#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "cli_runner.hpp"
#include "tokgeo/commands.hpp"

namespace tokgeo {
namespace {

using testing::TempDir;

#ifndef TOKGEO_CLI
#error "TOKGEO_CLI must name the CLI binary"
#endif

testing::CliResult run(const TempDir& dir, const std::string& args) {
  return testing::run_cli(TOKGEO_CLI, args, dir);
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

void synth(const TempDir& dir, const std::string& name, const std::string& spec, int seed) {
  testing::spit(dir / (name + ".json"), spec);
  const auto r = run(dir, "synth " + q(dir / (name + ".json")) + " --seed " + std::to_string(seed) + " --out " +
                              q(dir / name));
  ASSERT_EQ(r.status, 0) << r.err;
}

const char* kBaseline =
    R"({"random_init": true, "token_count": 16, "embed_dim": 32,
        "layers": [{"kind": "shared_mean", "mean_norm": 1.0, "sigma": 0.5}], "layer_count": 4})";

TEST(Cli, MissingManifestIsFormatError) {
  TempDir dir;
  const auto r = run(dir, "analyze " + q(dir / "absent") + " --out " + q(dir / "o"));
  EXPECT_EQ(r.status, 2);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j["error"], "FormatError");
  EXPECT_EQ(j["exit_status"], 2);
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  TempDir dir;
  EXPECT_EQ(run(dir, "frobnicate").status, 2);
  EXPECT_EQ(run(dir, "").status, 2);
}

TEST(Cli, AnalyzeThreeLayers) {
  TempDir dir;
  synth(dir, "t", R"({"token_count": 8, "embed_dim": 16, "layers": [{"kind": "isotropic"}], "layer_count": 3})", 1);
  const auto r = run(dir, "analyze " + q(dir / "t") + " --out " + q(dir / "o"));
  ASSERT_EQ(r.status, 0) << r.err;
  const auto csv = parse_csv(testing::slurp(dir / "o" / "series.csv"));
  EXPECT_EQ(csv.size(), 4u);
}

TEST(Cli, SpectraClipCount) {
  TempDir dir;
  synth(dir, "c",
        R"({"token_count": 32, "embed_dim": 64, "layers": [{"kind": "confined_subspace", "rank": 3}], "layer_count": 2})", 4);
  const auto r = run(dir, "analyze " + q(dir / "c") + " --spectra --clip 1e-8 --out " + q(dir / "o"));
  ASSERT_EQ(r.status, 0) << r.err;
  const auto csv = parse_csv(testing::slurp(dir / "o" / "series.csv"));
  ASSERT_EQ(csv.size(), 3u);
  EXPECT_EQ(csv[1][4], "29");
  EXPECT_EQ(csv[2][4], "29");
}

TEST(Cli, DimsBaselineAgainstItself) {
  TempDir dir;
  synth(dir, "b", kBaseline, 2);
  const auto r = run(dir, "dims " + q(dir / "b") + " " + q(dir / "b") + " --out " + q(dir / "o"));
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(testing::slurp(dir / "o" / "dims.json"));
  EXPECT_DOUBLE_EQ(j["d_model"].get<double>(), 32.0);
}

TEST(Cli, DimsTokenMismatch) {
  TempDir dir;
  synth(dir, "b", kBaseline, 2);
  synth(dir, "m", R"({"token_count": 12, "embed_dim": 32,
      "layers": [{"kind": "shared_mean", "mean_norm": 1.0, "sigma": 0.2}], "layer_count": 3})", 3);
  const auto r = run(dir, "dims " + q(dir / "m") + " " + q(dir / "b") + " --out " + q(dir / "o"));
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "CalibrationError");
  const auto ok = run(dir, "dims " + q(dir / "m") + " " + q(dir / "b") + " --allow-mismatch --out " + q(dir / "o"));
  EXPECT_EQ(ok.status, 0) << ok.err;
}

TEST(Cli, SimulateZeroSchedule) {
  TempDir dir;
  testing::spit(dir / "s.json", R"({"D": 32, "N": 4, "schedule": [0]})");
  const auto r = run(dir, "simulate " + q(dir / "s.json") + " --seed 1 --out " + q(dir / "o"));
  ASSERT_EQ(r.status, 0) << r.err;
  const auto csv = parse_csv(testing::slurp(dir / "o" / "cascade.csv"));
  ASSERT_EQ(csv.size(), 3u);
  EXPECT_EQ(parse_double(csv[2][3]), 1.0);
  EXPECT_EQ(parse_double(csv[2][4]), 1.0);
}

TEST(Cli, SimulateInfeasibleIsNumericalError) {
  TempDir dir;
  testing::spit(dir / "s.json", R"({"D": 32, "N": 16, "schedule": [-20]})");
  const auto r = run(dir, "simulate " + q(dir / "s.json") + " --seed 1 --out " + q(dir / "o"));
  EXPECT_EQ(r.status, 3);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "GeometryError");
}

TEST(Cli, OracleColumns) {
  TempDir dir;
  const auto r = run(dir, "oracle --dims 2,10 --samples 10000 --seed 7 --out " + q(dir / "o"));
  ASSERT_EQ(r.status, 0) << r.err;
  const auto csv = parse_csv(testing::slurp(dir / "o" / "oracle.csv"));
  ASSERT_EQ(csv.size(), 3u);
  EXPECT_EQ(parse_double(csv[1][3]), 0.5);
  EXPECT_EQ(parse_double(csv[2][4]), 1.0 / 9.0);
  EXPECT_EQ(run(dir, "oracle --dims 2,x --seed 7 --out " + q(dir / "o")).status, 2);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  TempDir dir;
  synth(dir, "b", kBaseline, 2);
  testing::spit(dir / "s.json", R"({"D": 32, "N": 4, "E0": 0.1, "dims": [32, 24, 16], "seeds": 2})");
  for (const char* tag : {"1", "2"}) {
    const std::string o = (dir / tag).string();
    ASSERT_EQ(run(dir, "synth " + q(dir / "b.json") + " --seed 5 --out '" + o + "/t'").status, 0);
    ASSERT_EQ(run(dir, "analyze " + q(dir / "b") + " --spectra --out '" + o + "/a'").status, 0);
    ASSERT_EQ(run(dir, "dims " + q(dir / "b") + " " + q(dir / "b") + " --out '" + o + "/d'").status, 0);
    ASSERT_EQ(run(dir, "simulate " + q(dir / "s.json") + " --seed 3 --out '" + o + "/s'").status, 0);
    ASSERT_EQ(run(dir, "oracle --dims 3 --samples 10000 --seed 3 --out '" + o + "/r'").status, 0);
  }
  for (const char* f : {"t/manifest.json", "t/layer_0000.bin", "a/series.csv", "a/report.json", "d/dims.json",
                        "s/cascade.csv", "s/campaign.csv", "s/campaign.json", "r/oracle.csv"})
    EXPECT_EQ(testing::slurp(dir / "1" / f), testing::slurp(dir / "2" / f)) << f;
}

}  // namespace
}  // namespace tokgeo
