#include <cmath>
#include <cstring>
#include <limits>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tokgeo/actdump.hpp"
#include "tokgeo/geometry.hpp"
#include "tokgeo/synthetic.hpp"

namespace tokgeo {
namespace {

using testing::TempDir;

ActivationTrace small_trace(int m, int n, int d) {
  ActivationTrace t;
  t.manifest.model_label = "tiny";
  t.manifest.layer_count = m;
  t.manifest.token_count = n;
  t.manifest.embed_dim = d;
  for (int k = 0; k < m; ++k) {
    Matrix v(n, d);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < d; ++c) v(r, c) = 0.25 * (k + 1) + r - 0.5 * c;
    t.layers.push_back({k, v});
  }
  return t;
}

TEST(ActDump, LayerFileNamesAreZeroPadded) {
  EXPECT_EQ(layer_file_name(0), "layer_0000.bin");
  EXPECT_EQ(layer_file_name(37), "layer_0037.bin");
  EXPECT_EQ(layer_file_name(12345), "layer_12345.bin");
}

TEST(ActDump, ReadsThreeLayersOfTwoByFour) {
  TempDir dir;
  write_trace(small_trace(3, 2, 4), dir.path());
  for (int k = 0; k < 3; ++k) EXPECT_EQ(std::filesystem::file_size(dir / layer_file_name(k)), 32u);
  const auto trace = read_trace(dir.path());
  ASSERT_EQ(trace.layers.size(), 3u);
  for (const auto& l : trace.layers) {
    EXPECT_EQ(l.values.rows(), 2);
    EXPECT_EQ(l.values.cols(), 4);
  }
  EXPECT_DOUBLE_EQ(trace.layers[2].values(1, 3), 0.75 + 1 - 1.5);
}

TEST(ActDump, BytesAreLittleEndianFloat32RowMajor) {
  TempDir dir;
  auto t = small_trace(2, 2, 2);
  t.layers[0].values << 1.0, -2.0, 0.5, 3.0;
  write_trace(t, dir.path());
  const auto bytes = testing::slurp(dir / "layer_0000.bin");
  ASSERT_EQ(bytes.size(), 16u);
  // 1.0f = 0x3f800000, -2.0f = 0xc0000000, 0.5f = 0x3f000000, 3.0f = 0x40400000
  const unsigned char expected[16] = {0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0, 0, 0, 0, 0x3f, 0, 0, 0x40, 0x40};
  EXPECT_EQ(std::memcmp(bytes.data(), expected, 16), 0);
}

TEST(ActDump, ManifestKeys) {
  TempDir dir;
  auto t = small_trace(2, 3, 2);
  t.manifest.random_init = true;
  t.manifest.excluded_token_positions = {0};
  write_trace(t, dir.path());
  const auto j = nlohmann::json::parse(testing::slurp(dir / "manifest.json"));
  EXPECT_EQ(j["model_label"], "tiny");
  EXPECT_EQ(j["layer_count"], 2);
  EXPECT_EQ(j["token_count"], 3);
  EXPECT_EQ(j["embed_dim"], 2);
  EXPECT_EQ(j["dtype"], "f32");
  EXPECT_EQ(j["byte_order"], "le");
  EXPECT_EQ(j["random_init"], true);
  EXPECT_EQ(j["excluded_token_positions"], nlohmann::json::array({0}));
}

TEST(ActDump, TruncatedLayerIsFormatError) {
  TempDir dir;
  write_trace(small_trace(3, 2, 4), dir.path());
  std::filesystem::resize_file(dir / "layer_0001.bin", 31);
  EXPECT_THROW(read_trace(dir.path()), FormatError);
}

TEST(ActDump, MissingFilesAreFormatErrors) {
  TempDir dir;
  write_trace(small_trace(3, 2, 4), dir.path());
  std::filesystem::remove(dir / "layer_0002.bin");
  EXPECT_THROW(read_trace(dir.path()), FormatError);

  TempDir empty;
  EXPECT_THROW(read_trace(empty.path()), FormatError);
}

TEST(ActDump, ExtraLayerFileIsFormatError) {
  TempDir dir;
  write_trace(small_trace(3, 2, 4), dir.path());
  std::filesystem::copy_file(dir / "layer_0000.bin", dir / "layer_0003.bin");
  EXPECT_THROW(read_trace(dir.path()), FormatError);
}

TEST(ActDump, NanIsDataError) {
  TempDir dir;
  write_trace(small_trace(3, 2, 4), dir.path());
  auto bytes = testing::slurp(dir / "layer_0001.bin");
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + 8, &nan, 4);
  testing::spit(dir / "layer_0001.bin", bytes);
  EXPECT_THROW(read_trace(dir.path()), DataError);
}

TEST(ActDump, ManifestValidation) {
  TempDir dir;
  write_trace(small_trace(2, 2, 2), dir.path());
  auto j = nlohmann::json::parse(testing::slurp(dir / "manifest.json"));
  auto bad = j;
  bad["excluded_token_positions"] = {2};
  testing::spit(dir / "manifest.json", bad.dump());
  EXPECT_THROW(read_trace(dir.path()), FormatError);
  bad = j;
  bad["dtype"] = "f16";
  testing::spit(dir / "manifest.json", bad.dump());
  EXPECT_THROW(read_trace(dir.path()), FormatError);
  bad = j;
  bad["layer_count"] = 1;
  testing::spit(dir / "manifest.json", bad.dump());
  EXPECT_THROW(read_trace(dir.path()), FormatError);
  testing::spit(dir / "manifest.json", "{not json");
  EXPECT_THROW(read_trace(dir.path()), FormatError);
}

TEST(ActDump, DuplicateLayerIndexRejectedBeforeIo) {
  TempDir dir;
  auto t = small_trace(3, 2, 2);
  t.layers[2].layer_index = 1;
  const auto target = dir / "out";
  EXPECT_THROW(write_trace(t, target), FormatError);
  EXPECT_FALSE(std::filesystem::exists(target));
}

TEST(ActDump, UnwritablePathIsIoError) {
  TempDir dir;
  testing::spit(dir / "plain_file", "x");
  EXPECT_THROW(write_trace(small_trace(2, 2, 2), dir / "plain_file" / "trace"), IoError);
}

// Property: write then read reproduces the matrices at float32 precision.
TEST(ActDump, RoundTripAtStoragePrecision) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TempDir dir;
    SyntheticSpec spec;
    spec.token_count = 3 + static_cast<int>(seed);
    spec.embed_dim = 5 + static_cast<int>(2 * seed);
    spec.layers = {IsotropicGaussian{1e3}, SharedMeanPlusNoise{2.0, 1e-3}, ConfinedSubspace{2, 1.0}};
    const auto t = generate_synthetic_trace(spec, seed);
    write_trace(t, dir.path());
    const auto back = read_trace(dir.path());
    for (std::size_t k = 0; k < t.layers.size(); ++k) {
      const Matrix stored = t.layers[k].values.cast<float>().cast<double>();
      EXPECT_TRUE(back.layers[k].values == stored) << "seed " << seed << " layer " << k;
    }
    // A trace that is already float-representable round-trips bit-exactly.
    TempDir again;
    write_trace(back, again.path());
    for (int k = 0; k < back.manifest.layer_count; ++k)
      EXPECT_EQ(testing::slurp(dir / layer_file_name(k)), testing::slurp(again / layer_file_name(k)));
  }
}

TEST(Synthetic, DeterministicForFixedSeed) {
  SyntheticSpec spec;
  spec.token_count = 16;
  spec.embed_dim = 24;
  spec.layers = {IsotropicGaussian{}, SharedMeanPlusNoise{1.0, 0.5}, ConfinedSubspace{4, 1.0}};
  const auto a = generate_synthetic_trace(spec, 42);
  const auto b = generate_synthetic_trace(spec, 42);
  const auto c = generate_synthetic_trace(spec, 43);
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    EXPECT_TRUE(a.layers[k].values == b.layers[k].values);
    EXPECT_FALSE(a.layers[k].values == c.layers[k].values);
  }
}

TEST(Synthetic, IsotropicCorrelatorNearZero) {
  SyntheticSpec spec;
  spec.token_count = 256;
  spec.embed_dim = 512;
  spec.layers = {IsotropicGaussian{}, IsotropicGaussian{}};
  const auto t = generate_synthetic_trace(spec, 7);
  // Mean over N(N-1) ordered pairs of unit-variance dots has standard
  // deviation sqrt(2 d / (N (N-1))); normalized by the mean squared norm d
  // this bounds |E| by 3 sqrt(2 / (d N (N-1))) at three sigma.
  const double n = 256.0;
  const double bound = 3.0 * std::sqrt(2.0 / (512.0 * n * (n - 1.0)));
  for (const auto& l : t.layers) EXPECT_LT(std::abs(correlator(l.values)), bound);
}

TEST(Synthetic, ZeroNoiseSharedMeanGivesCorrelatorOne) {
  SyntheticSpec spec;
  spec.token_count = 10;
  spec.embed_dim = 8;
  spec.layers = {SharedMeanPlusNoise{3.0, 0.0}, SharedMeanPlusNoise{1.0, 0.0}};
  const auto t = generate_synthetic_trace(spec, 1);
  for (const auto& l : t.layers) EXPECT_NEAR(correlator(l.values), 1.0, 1e-12);
  // The mean direction is shared across layers.
  EXPECT_NEAR((t.layers[0].values.row(0) / 3.0 - t.layers[1].values.row(0)).norm(), 0.0, 1e-12);
}

TEST(Synthetic, ConfinedSubspaceHasExactRank) {
  SyntheticSpec spec;
  spec.token_count = 32;
  spec.embed_dim = 64;
  spec.layers = {ConfinedSubspace{3, 1.0}, ConfinedSubspace{3, 1.0}};
  const auto t = generate_synthetic_trace(spec, 5);
  for (const auto& l : t.layers) EXPECT_EQ(testing::svd_rank(l.values), 3);
}

TEST(Synthetic, RankAboveDimensionIsSpecError) {
  SyntheticSpec spec;
  spec.token_count = 4;
  spec.embed_dim = 8;
  spec.layers = {ConfinedSubspace{9, 1.0}, IsotropicGaussian{}};
  EXPECT_THROW(generate_synthetic_trace(spec, 0), SpecError);
}

TEST(Synthetic, SpecFromJson) {
  const auto j = nlohmann::json::parse(R"({
    "model_label": "toy", "token_count": 8, "embed_dim": 16, "random_init": true,
    "excluded_token_positions": [0],
    "layers": [{"kind": "confined_subspace", "rank": 3}], "layer_count": 4})");
  const auto spec = synthetic_spec_from_json(j);
  EXPECT_EQ(spec.layers.size(), 4u);
  EXPECT_TRUE(spec.random_init);
  EXPECT_THROW(synthetic_spec_from_json(nlohmann::json::parse(R"({"token_count": 2, "embed_dim": 2,
      "layers": [{"kind": "spiral"}]})")),
               SpecError);
}

}  // namespace
}  // namespace tokgeo
