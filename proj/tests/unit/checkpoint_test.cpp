#include "hct/checkpoint.hpp"
#include "hct/errors.hpp"
#include "hct/gradient_suite.hpp"
#include "support/random.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

namespace hct {
namespace {

Checkpoint trained_like(Variant variant, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.seed = seed;
  Checkpoint c;
  c.model = make_model(cfg);
  // Perturb so nothing sits at its init value.
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> n(0.0, 1e-3);
  for (auto& [name, t] : c.model.params)
    for (double& v : t.data()) v += n(rng);
  for (Index f = 0; f < cfg.features; ++f) c.feature_names.push_back("f" + std::to_string(f));
  c.standardization = Standardization{{0.1, -0.2, 0.3, 1e-17}, {1.0, 2.0, 0.5, 3.25}};
  return c;
}

std::string bytes_of(const Checkpoint& c) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(c, out);
  return out.str();
}

Checkpoint from_bytes(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_checkpoint(in);
}

TEST(Checkpoint, RoundTripIsBitExactForEveryVariant) {
  for (Variant v : {Variant::full, Variant::without_cnn, Variant::without_transformer}) {
    const Checkpoint c = trained_like(v, 3);
    const Checkpoint back = from_bytes(bytes_of(c));
    EXPECT_EQ(back, c) << to_string(v);
    for (const auto& [name, t] : c.model.params) {
      const Tensor& u = back.model.params.at(name);
      EXPECT_EQ(std::memcmp(t.data().data(), u.data().data(), t.data().size_bytes()), 0) << name;
    }
  }
}

TEST(Checkpoint, PredictionsSurviveSaveAndLoad) {
  const Checkpoint c = trained_like(Variant::full, 8);
  const auto path = std::filesystem::temp_directory_path() / "hct_checkpoint_test.hct";
  save_checkpoint(c, path);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const RowMatrix x = testing::random_matrix(rng, c.model.config.seq_len, c.model.config.features);
    EXPECT_EQ(predict(c.model, x), predict(back.model, x));
  }
}

TEST(Checkpoint, WritingIsDeterministic) {
  EXPECT_EQ(bytes_of(trained_like(Variant::full, 2)), bytes_of(trained_like(Variant::full, 2)));
}

TEST(Checkpoint, OptionalStandardization) {
  Checkpoint c = trained_like(Variant::without_cnn, 4);
  c.standardization.reset();
  EXPECT_EQ(from_bytes(bytes_of(c)), c);
}

TEST(Checkpoint, BadMagicIsRejected) {
  std::string bytes = bytes_of(trained_like(Variant::full, 1));
  bytes[0] = 'X';
  EXPECT_THROW(from_bytes(bytes), IoError);
}

TEST(Checkpoint, TruncationIsRejected) {
  const std::string bytes = bytes_of(trained_like(Variant::full, 1));
  for (std::size_t keep : {std::size_t{4}, std::size_t{12}, std::size_t{40}, bytes.size() - 8}) {
    EXPECT_THROW(from_bytes(bytes.substr(0, keep)), IoError) << keep;
  }
}

TEST(Checkpoint, CorruptHeaderIsRejected) {
  std::string bytes = bytes_of(trained_like(Variant::full, 1));
  bytes[17] = '\x7f';
  EXPECT_THROW(from_bytes(bytes), IoError);
}

TEST(Checkpoint, ParametersThatDoNotFitTheConfigAreRejected) {
  Checkpoint c = trained_like(Variant::full, 1);
  c.model.config.d_model = 8;
  c.model.config.d_k = 4;
  c.model.config.d_v = 4;
  EXPECT_THROW(from_bytes(bytes_of(c)), IoError);

  Checkpoint extra = trained_like(Variant::full, 1);
  extra.model.params.emplace("stray", Tensor::from_vector({1.0}));
  EXPECT_THROW(from_bytes(bytes_of(extra)), IoError);
}

TEST(Checkpoint, MissingFileIsAnIoError) {
  EXPECT_THROW(load_checkpoint("/nonexistent-dir/none.hct"), IoError);
}

TEST(ConfigJson, RoundTripAndFingerprint) {
  ModelConfig c = tiny_model_config();
  c.positional_encoding = PositionalEncoding::none;
  c.dropout_rate = 0.25;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  EXPECT_EQ(config_fingerprint(c), config_fingerprint(c));
  ModelConfig d = c;
  d.ffn_dim += 1;
  EXPECT_NE(config_fingerprint(c), config_fingerprint(d));
  EXPECT_THROW(config_from_json({{"seq_len", 4}}), ConfigError);
}

}  // namespace
}  // namespace hct
