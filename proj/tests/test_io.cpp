#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>
#include <set>

#include "scan/check/oracles.hpp"
#include "scan/config.hpp"
#include "scan/io.hpp"
#include "scan/synth.hpp"

using namespace scan;

namespace {

template <typename F>
FormatError format_error(F&& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e;
  }
  ADD_FAILURE() << "no FormatError";
  return FormatError(FormatErrc::kIo, "none");
}

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / ("scan_io_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  std::filesystem::create_directories(d);
  return d;
}

ModelWeights sample_weights() {
  ModelWeights w;
  w.add("a.weight", {{2, 3}, {1, 2, 3, 4, 5, 6}});
  w.add("a.bias", {{3}, {0.5f, -0.5f, 0.25f}});
  w.add("scalar", {{}, {7.0f}});
  return w;
}

}  // namespace

TEST(Labels, WordLayout) {
  using Pair = std::pair<std::uint16_t, std::uint16_t>;
  EXPECT_EQ(decode_label(0), Pair(0, 0));
  EXPECT_EQ(decode_label(0x0001000Au), Pair(10, 1));
  EXPECT_EQ(encode_label(10, 1), 0x0001000Au);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 1000; ++k) {
    const auto word = static_cast<std::uint32_t>(rng());
    const auto [s, i] = decode_label(word);
    EXPECT_EQ(encode_label(s, i), word);
  }
  const auto bytes = serialize_labels({{10}, {1}});
  EXPECT_EQ(bytes, (std::vector<std::uint8_t>{0x0A, 0x00, 0x01, 0x00}));
}

TEST(Labels, LengthErrors) {
  const auto e = format_error([] { parse_labels(std::vector<std::uint8_t>(10)); });
  EXPECT_EQ(e.code(), FormatErrc::kBadLength);
  EXPECT_EQ(e.byte_offset(), 8u);
  EXPECT_TRUE(parse_labels({}).semantic.empty());
  EXPECT_THROW(serialize_labels({{1, 2}, {1}}), ShapeError);
}

TEST(PointBin, Examples) {
  EXPECT_TRUE(parse_point_bin({}).empty());
  std::vector<std::uint8_t> one(16);
  const float v[4] = {1.5f, -2.0f, 0.25f, 0.75f};
  std::memcpy(one.data(), v, 16);
  const PointCloud p = parse_point_bin(one);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p.x(0), 1.5);
  EXPECT_EQ(p.y(0), -2.0);
  EXPECT_EQ(p.intensity(0), 0.75);
  EXPECT_EQ(serialize_point_bin(p), one);
  const auto e = format_error([] { parse_point_bin(std::vector<std::uint8_t>(37)); });
  EXPECT_EQ(e.code(), FormatErrc::kTruncated);
  EXPECT_EQ(e.byte_offset(), 32u);
}

TEST(PointBin, RandomRoundTrip) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-50.0f, 50.0f);
  Matrix m(100, 4);
  for (double& x : m.data()) x = u(rng);
  const PointCloud p(m);
  EXPECT_EQ(parse_point_bin(serialize_point_bin(p)), p);
}

TEST(Files, RoundTripAndExpectedLength) {
  const auto dir = temp_dir();
  const PointCloud p(Matrix(3, 4, 1.0));
  const PointLabels l{{1, 2, 3}, {0, 7, 0}};
  write_point_bin(dir / "f.bin", p);
  write_labels(dir / "f.label", l);
  EXPECT_EQ(read_point_bin(dir / "f.bin"), p);
  EXPECT_EQ(read_labels(dir / "f.label", 3), l);
  const auto e = format_error([&] { read_labels(dir / "f.label", 5); });
  EXPECT_EQ(e.code(), FormatErrc::kBadLength);
  EXPECT_EQ(e.byte_offset(), 12u);
  EXPECT_EQ(format_error([&] { read_file(dir / "missing.bin"); }).code(), FormatErrc::kIo);
  std::filesystem::remove_all(dir);
}

TEST(Weights, RoundTrip) {
  const ModelWeights w = sample_weights();
  const auto bytes = serialize_weights(w);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "SCANWT01");
  EXPECT_EQ(parse_weights(bytes), w);
  EXPECT_EQ(parse_weights(serialize_weights(ModelWeights{})).size(), 0u);
}

TEST(Weights, Errors) {
  auto bytes = serialize_weights(sample_weights());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(format_error([&] { parse_weights(bad_magic); }).code(), FormatErrc::kBadMagic);

  const auto cut = std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 3);
  const auto t = format_error([&] { parse_weights(cut); });
  EXPECT_EQ(t.code(), FormatErrc::kTruncated);
  EXPECT_LE(t.byte_offset(), cut.size());

  auto trailing = bytes;
  trailing.push_back(0);
  const auto tr = format_error([&] { parse_weights(trailing); });
  EXPECT_EQ(tr.code(), FormatErrc::kBadLength);
  EXPECT_EQ(tr.byte_offset(), bytes.size());

  ModelWeights w;
  EXPECT_THROW(w.add("x", {{2}, {1.0f}}), ShapeError);
  w.add("x", {{1}, {1.0f}});
  EXPECT_THROW(w.add("x", {{1}, {1.0f}}), DuplicateKeyError);
  EXPECT_THROW(w.at("y"), ConsistencyError);

  // Same name twice in the stream.
  ModelWeights one;
  one.add("dup", {{1}, {1.0f}});
  auto single = serialize_weights(one);
  std::vector<std::uint8_t> twice(single.begin(), single.begin() + 8);
  const std::uint32_t two = 2;
  twice.insert(twice.end(), reinterpret_cast<const std::uint8_t*>(&two), reinterpret_cast<const std::uint8_t*>(&two) + 4);
  twice.insert(twice.end(), single.begin() + 12, single.end());
  twice.insert(twice.end(), single.begin() + 12, single.end());
  EXPECT_EQ(format_error([&] { parse_weights(twice); }).code(), FormatErrc::kDuplicateName);
}

TEST(Config, ParseAndRoundTrip) {
  const RunConfig c = parse_config(
      "# run\nvoxel.scale = 0.4, 0.4, 0.2\nmodel.channels = 16\nattention.heads = 4\n"
      "attention.share_weights = false\ntarget.window = volume3x3x3\nmetrics.min_points = 50\n"
      "model.thing_classes = 1, 2\n");
  EXPECT_EQ(c.pipeline.scale, (Vec3{0.4, 0.4, 0.2}));
  EXPECT_EQ(c.pipeline.channels, 16u);
  EXPECT_EQ(c.pipeline.attention.heads, 4);
  EXPECT_FALSE(c.pipeline.attention.share_weights);
  EXPECT_EQ(c.pipeline.target.window, GaussianWindow::kVolume3x3x3);
  EXPECT_EQ(c.min_points, 50u);
  EXPECT_EQ(c.pipeline.thing_classes, (std::vector<std::uint16_t>{1, 2}));
  const RunConfig again = parse_config(format_config(c));
  EXPECT_EQ(format_config(again), format_config(c));
  EXPECT_EQ(again.pipeline.scale, c.pipeline.scale);
  EXPECT_EQ(format_config(parse_config("")), format_config(RunConfig{}));
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("voxel.size = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("model.channels\n"), ConfigError);
  EXPECT_THROW(parse_config("model.channels = eight\n"), ConfigError);
  EXPECT_THROW(parse_config("voxel.scale = 1, 2\n"), ConfigError);
  EXPECT_THROW(parse_config("inference.pool_window = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("model.thing_classes = 0\n"), ConfigError);
  try {
    parse_config("\n\nbogus = 1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Synth, Examples) {
  SceneSpec empty;
  const Scene e = synth_scene(empty);
  EXPECT_TRUE(e.points.empty());

  const SceneSpec s = parse_scene_spec(
      "seed = 4\nnoise = 0.01\ninstance = 1 5 5 -1 0.5 0.5 0.3 100 blob\ninstance = 3 -5 2 -1 0.5 0.5 0.5 100 box\n");
  const Scene a = synth_scene(s);
  ASSERT_EQ(a.points.size(), 200u);
  EXPECT_EQ(std::set<std::uint16_t>(a.labels.instance.begin(), a.labels.instance.end()),
            (std::set<std::uint16_t>{1, 2}));
  EXPECT_EQ(a.labels.semantic[0], 1);
  EXPECT_EQ(a.labels.semantic[150], 3);
  for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_TRUE(s.range.contains(a.points.x(i), a.points.y(i), a.points.z(i)));
  EXPECT_EQ(synth_scene(s).points, a.points);
  SceneSpec other = s;
  other.seed = 5;
  EXPECT_NE(synth_scene(other).points, a.points);
}

TEST(Synth, GroundAndRandomSpecs) {
  const SceneSpec s = parse_scene_spec("ground.density = 0.5\nground.extent = 10\nground.class = 11\n");
  const Scene g = synth_scene(s);
  EXPECT_EQ(g.points.size(), 200u);
  for (auto c : g.labels.semantic) EXPECT_EQ(c, 11);
  for (auto i : g.labels.instance) EXPECT_EQ(i, 0);

  const SceneSpec r = random_scene_spec(9, 8, 4.0);
  ASSERT_EQ(r.instances.size(), 8u);
  for (std::size_t a = 0; a < 8; ++a) {
    for (std::size_t b = a + 1; b < 8; ++b) {
      const double dx = r.instances[a].center[0] - r.instances[b].center[0];
      const double dy = r.instances[a].center[1] - r.instances[b].center[1];
      EXPECT_GT(std::hypot(dx, dy), 4.0);
    }
  }
  EXPECT_EQ(synth_bench_scene(5000, 1).points.size(), 5000u);
}

TEST(Synth, SpecErrors) {
  EXPECT_THROW(parse_scene_spec("colour = red\n"), ConfigError);
  EXPECT_THROW(parse_scene_spec("instance = 1 0 0 0 1 1 1\n"), ConfigError);
  EXPECT_THROW(parse_scene_spec("instance = 1 0 0 0 1 1 1 10 sphere\n"), ConfigError);
  EXPECT_THROW(parse_scene_spec("instance = 0 0 0 0 1 1 1 10\n"), ConfigError);
  EXPECT_THROW(parse_scene_spec("noise = -1\n"), ConfigError);
  EXPECT_THROW(parse_scene_spec("instance = 1 90 0 0 1 1 1 10\n"), ConfigError);
}
