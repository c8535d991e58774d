#include "hct/dataio.hpp"
#include "hct/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace hct {
namespace {

Dataset parse(const std::string& text, const CsvSchema& schema = {}) {
  std::istringstream in(text);
  return parse_csv(in, schema);
}

// Rule oracle: reads the label off the planted signal using only signs.
int rule_label(const RowMatrix& x) {
  bool motif = false;
  for (Index t = 0; t + 2 < x.rows(); ++t) motif = motif || (x(t, 0) > 0 && x(t + 1, 0) < 0 && x(t + 2, 0) > 0);
  const bool agree = (x(0, 1) > 0) == (x(x.rows() - 1, 1) > 0);
  return motif && agree ? 1 : 0;
}

double rule_accuracy(const Dataset& ds) {
  std::size_t hits = 0;
  for (const auto& s : ds.samples) hits += rule_label(s.features) == s.label;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

Dataset numbered(std::size_t n, int positives) {
  Dataset ds;
  ds.seq_len = 1;
  ds.feature_names = {"x"};
  for (std::size_t i = 0; i < n; ++i) {
    RowMatrix f(1, 1);
    f(0, 0) = static_cast<double>(i);
    ds.samples.push_back({f, static_cast<int>(i) < positives ? 1 : 0, std::to_string(i)});
  }
  return ds;
}

TEST(Csv, StaticFile) {
  const Dataset ds = parse("age,bmi,label\n50,22.5,0\n61,30.1,1\n45,27,0\n");
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.seq_len, 1);
  EXPECT_EQ(ds.num_features(), 2);
  EXPECT_EQ(ds.samples[1].features(0, 1), 30.1);
  EXPECT_EQ(ds.samples[1].label, 1);
}

TEST(Csv, SequenceColumnsMapToTimeSteps) {
  const Dataset ds = parse("bmi@1,bmi@2,hr@1,hr@2,label\n1,2,3,4,1\n");
  EXPECT_EQ(ds.seq_len, 2);
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"bmi", "hr"}));
  const RowMatrix& x = ds.samples[0].features;
  EXPECT_EQ(x(0, 0), 1.0);
  EXPECT_EQ(x(1, 0), 2.0);
  EXPECT_EQ(x(0, 1), 3.0);
  EXPECT_EQ(x(1, 1), 4.0);
}

TEST(Csv, InterleavedColumnsAndIds) {
  const Dataset ds = parse("id,bmi@1,hr@1,label,bmi@2,hr@2\np7,1,3,0,2,4\n");
  EXPECT_EQ(ds.samples[0].id, "p7");
  EXPECT_EQ(ds.samples[0].features(1, 1), 4.0);
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"bmi", "hr"}));
}

TEST(Csv, NonNumericCellCitesRowAndColumn) {
  try {
    parse("bmi@1,bmi@2,label\nabc,1,0\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
    EXPECT_EQ(e.column(), "bmi@1");
  }
}

TEST(Csv, MalformedInputsAreParseErrors) {
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse("a,b\n1,2\n"), ParseError);                    // no label
  EXPECT_THROW(parse("a,label\n1,2\n"), ParseError);                // label not 0/1
  EXPECT_THROW(parse("a,label\n,1\n"), ParseError);                 // missing value
  EXPECT_THROW(parse("a,label\n1\n"), ParseError);                  // short row
  EXPECT_THROW(parse("a@1,a@3,label\n1,2,0\n"), ParseError);        // gap in steps
  EXPECT_THROW(parse("a@1,a,label\n1,2,0\n"), ParseError);          // mixed static and sequence
  EXPECT_THROW(parse("a@1,b@1,b@2,label\n1,2,3,0\n"), ParseError);  // ragged lengths
  EXPECT_THROW(parse("a,label\ninf,1\n"), ParseError);
}

TEST(Csv, SchemaMismatchIsParseError) {
  CsvSchema schema;
  schema.feature_names = std::vector<std::string>{"bmi", "hr"};
  EXPECT_THROW(parse("hr,bmi,label\n1,2,0\n", schema), ParseError);
  schema.feature_names.reset();
  schema.seq_len = 3;
  EXPECT_THROW(parse("a@1,a@2,label\n1,2,0\n", schema), ParseError);
}

TEST(Csv, WriteThenParseIsExact) {
  const Dataset ds = gen_synthetic({.n = 40, .seq_len = 5, .features = 3, .seed = 2, .noise = 0.37});
  std::stringstream buf;
  write_csv(ds, buf);
  const Dataset back = parse_csv(buf);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.feature_names, ds.feature_names);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.samples[i].features, ds.samples[i].features);
    EXPECT_EQ(back.samples[i].label, ds.samples[i].label);
  }
}

TEST(Standardize, ZeroMeanUnitStd) {
  const Dataset ds = standardize(gen_synthetic({.n = 200, .seed = 3}));
  const Standardization m = feature_moments(ds);
  for (std::size_t j = 0; j < m.mean.size(); ++j) {
    EXPECT_LT(std::abs(m.mean[j]), 1e-10);
    EXPECT_NEAR(m.std[j], 1.0, 1e-10);
  }
  ASSERT_TRUE(ds.standardization.has_value());
  EXPECT_THROW(standardize(ds), UsageError);
}

TEST(Standardize, ConstantFeatureMapsToZero) {
  Dataset ds = parse("a,b,label\n3,1,0\n3,2,1\n3,4,0\n");
  const Dataset z = standardize(ds);
  EXPECT_EQ(z.standardization->std[0], 1.0);
  for (const auto& s : z.samples) EXPECT_EQ(s.features(0, 0), 0.0);
}

TEST(Standardize, EmptyDatasetIsUsageError) { EXPECT_THROW(standardize(Dataset{}), UsageError); }

TEST(Standardize, HeldOutSplitsUseTrainStatistics) {
  const Dataset ds = gen_synthetic({.n = 400, .seed = 4, .noise = 0.5});
  const Splits s = split(ds, {.seed = 1});
  const Dataset train = standardize(s.train);
  const Dataset test = apply_standardization(s.test, *train.standardization);
  const Dataset test_own = standardize(s.test);

  const Standardization train_m = feature_moments(train);
  const Standardization test_m = feature_moments(test);
  bool differs = false;
  for (std::size_t j = 0; j < train_m.mean.size(); ++j) {
    EXPECT_LT(std::abs(train_m.mean[j]), 1e-10);
    EXPECT_NEAR(train_m.std[j], 1.0, 1e-10);
    differs = differs || std::abs(test_m.mean[j]) > 1e-6 || std::abs(test_m.std[j] - 1.0) > 1e-6;
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(test.standardization, train.standardization);
  EXPECT_NE(test.samples[0].features, test_own.samples[0].features);
}

TEST(Split, SizesForHundredSamples) {
  const Splits s = split(numbered(100, 50), {.seed = 9});
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.test.size(), 10u);
}

TEST(Split, DisjointCoverAndDeterministic) {
  const Dataset ds = numbered(97, 40);
  const Splits a = split(ds, {.seed = 5});
  const Splits b = split(ds, {.seed = 5});
  std::multiset<std::string> ids;
  for (const Dataset* part : {&a.train, &a.val, &a.test})
    for (const auto& smp : part->samples) ids.insert(smp.id);
  EXPECT_EQ(ids.size(), 97u);
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 97u);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train.samples[i].id, b.train.samples[i].id);
  const Splits c = split(ds, {.seed = 6});
  bool moved = false;
  for (std::size_t i = 0; i < a.test.size(); ++i) moved = moved || a.test.samples[i].id != c.test.samples[i].id;
  EXPECT_TRUE(moved);
}

TEST(Split, StratifiedKeepsClassBalance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset ds = numbered(101 + seed, static_cast<int>((101 + seed) / 2));
    const Splits s = split(ds, {.seed = seed});
    for (const Dataset* part : {&s.train, &s.val, &s.test}) {
      const auto pos = std::count_if(part->samples.begin(), part->samples.end(), [](const Sample& x) { return x.label; });
      const double expected = static_cast<double>(part->size()) * (static_cast<double>(ds.size() / 2) / ds.size());
      EXPECT_LE(std::abs(static_cast<double>(pos) - expected), 1.0) << "seed " << seed;
    }
  }
}

TEST(Split, InvalidSpecsAreRejected) {
  EXPECT_THROW(split(numbered(10, 5), {.train = 0.5, .val = 0.1, .test = 0.1}), ConfigError);
  EXPECT_THROW(split(numbered(10, 5), {.train = 1.0, .val = 0.0, .test = 0.0}), ConfigError);
  EXPECT_THROW(split(numbered(3, 1), {}), UsageError);
  EXPECT_THROW(split(Dataset{}, {}), UsageError);
}

TEST(Synthetic, BalancedAndDeterministic) {
  const Dataset a = gen_synthetic({.n = 1000, .seed = 1, .noise = 0.0});
  const auto pos = std::count_if(a.samples.begin(), a.samples.end(), [](const Sample& s) { return s.label; });
  EXPECT_EQ(pos, 500);
  const Dataset b = gen_synthetic({.n = 1000, .seed = 1, .noise = 0.0});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.samples[i].features, b.samples[i].features);
  const Dataset c = gen_synthetic({.n = 1000, .seed = 2, .noise = 0.0});
  EXPECT_NE(a.samples[0].features, c.samples[0].features);
}

TEST(Synthetic, BoundsAreUsageErrors) {
  EXPECT_THROW(gen_synthetic({.n = 1}), UsageError);
  EXPECT_THROW(gen_synthetic({.seq_len = 3}), UsageError);
  EXPECT_THROW(gen_synthetic({.features = 1}), UsageError);
  EXPECT_THROW(gen_synthetic({.noise = -0.1}), UsageError);
}

TEST(Synthetic, RuleOracleRecoversNoiseFreeLabels) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_EQ(rule_accuracy(gen_synthetic({.n = 1000, .seq_len = 12, .features = 4, .seed = seed, .noise = 0.0})), 1.0);
    EXPECT_EQ(rule_accuracy(gen_synthetic({.n = 300, .seq_len = 4, .features = 2, .seed = seed, .noise = 0.0})), 1.0);
  }
}

TEST(Synthetic, RuleOracleSurvivesModerateNoise) {
  EXPECT_GT(rule_accuracy(gen_synthetic({.n = 2000, .seed = 7, .noise = 0.3})), 0.9);
}

TEST(Synthetic, EveryNegativeKindOccurs) {
  // Motif-only and agreement-only negatives both exist, so neither half of the rule suffices.
  const Dataset ds = gen_synthetic({.n = 600, .seed = 3, .noise = 0.0});
  int motif_only = 0, agree_only = 0;
  for (const auto& s : ds.samples) {
    if (s.label) continue;
    const RowMatrix& x = s.features;
    bool motif = false;
    for (Index t = 0; t + 2 < x.rows(); ++t) motif = motif || (x(t, 0) > 0 && x(t + 1, 0) < 0 && x(t + 2, 0) > 0);
    const bool agree = (x(0, 1) > 0) == (x(x.rows() - 1, 1) > 0);
    motif_only += motif && !agree;
    agree_only += agree && !motif;
  }
  EXPECT_GT(motif_only, 50);
  EXPECT_GT(agree_only, 50);
}

TEST(Pipeline, LoadStandardizeSplitIsDeterministic) {
  const Dataset ds = gen_synthetic({.n = 120, .seed = 8});
  std::stringstream buf;
  write_csv(ds, buf);
  const std::string text = buf.str();
  auto run = [&] {
    std::istringstream in(text);
    return split(standardize(parse_csv(in)), {.seed = 4});
  };
  const Splits a = run(), b = run();
  ASSERT_EQ(a.val.size(), b.val.size());
  for (std::size_t i = 0; i < a.val.size(); ++i) EXPECT_EQ(a.val.samples[i].features, b.val.samples[i].features);
}

}  // namespace
}  // namespace hct
