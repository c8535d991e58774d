#pragma once

// Life-history datasets: CSV ingestion, z-score standardization, seeded
// splits and a synthetic generator with a planted two-part signal.
//
// CSV layout: UTF-8, comma separated, one header row. A `label` column holds
// 0 or 1; an optional `id` column holds an arbitrary string. Every other
// column is a numeric feature, either static (`bmi`) or one step of a
// sequence (`bmi@1` ... `bmi@T`, 1-based and contiguous). Static files give
// T = 1. Feature order follows first appearance in the header.

#include "hct/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace hct {

struct Sample {
  RowMatrix features;  // [T x F]
  int label = 0;
  std::string id;
};

/// Per-feature statistics pooled over every sample and time step.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> std;

  friend bool operator==(const Standardization&, const Standardization&) = default;
};

inline constexpr double kMinStd = 1e-12;

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> feature_names;
  Index seq_len = 0;  // T
  std::optional<Standardization> standardization;

  Index num_features() const noexcept { return static_cast<Index>(feature_names.size()); }
  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::vector<RowMatrix> feature_matrices() const;
  std::vector<double> labels() const;
};

/// Optional expectations checked against the header.
struct CsvSchema {
  std::optional<std::vector<std::string>> feature_names;
  std::optional<Index> seq_len;
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
Dataset parse_csv(std::istream& in, const CsvSchema& schema = {});

/// Writes the documented layout. Values use shortest round-trip formatting,
/// so write -> load reproduces every double exactly.
void write_csv(const Dataset& ds, std::ostream& out);
void save_csv(const Dataset& ds, const std::filesystem::path& path);

/// Computes statistics on `ds` and applies them.
Dataset standardize(const Dataset& ds);
/// Applies statistics computed elsewhere (normally the training split).
Dataset apply_standardization(const Dataset& ds, const Standardization& stats);
/// Mean and (population) std of each feature, pooled over samples and steps.
Standardization feature_moments(const Dataset& ds);

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
  bool stratified = true;

  void validate() const;
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Seeded disjoint partition. Train and validation sizes are rounded to the
/// nearest integer; the test split takes the remainder.
Splits split(const Dataset& ds, const SplitSpec& spec);

struct SyntheticSpec {
  std::size_t n = 1000;
  Index seq_len = 12;
  Index features = 4;
  std::uint64_t seed = 0;
  double noise = 0.1;

  void validate() const;
};

/// Label 1 iff feature 0 contains the zigzag motif (+1, -1, +1) at some
/// offset AND feature 1 has the same sign at the first and last step.
/// Feature 0 is otherwise a +-1 sequence that never contains the motif.
/// Feature 1 is zero except at its end points, whose magnitudes lie in
/// [0.5, 1.5]. Further features are N(0, 1) distractors. Exactly floor(n/2)
/// samples are positive. Gaussian noise with standard deviation `noise` is
/// added to every cell.
Dataset gen_synthetic(const SyntheticSpec& spec);

}  // namespace hct
