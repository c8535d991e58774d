#pragma once

#include "hct/dataio.hpp"
#include "hct/model.hpp"
#include "hct/train.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hct {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Accuracy, precision and recall. A metric whose denominator is zero is
/// empty rather than 0 or 1.
struct MetricsReport {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  ConfusionCounts counts;
  std::string variant;
  std::string config_fingerprint;
  std::vector<std::uint64_t> seeds;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// prob >= threshold counts as a positive prediction.
ConfusionCounts count_confusion(std::span<const double> probs, std::span<const int> labels, double threshold = 0.5);
MetricsReport metrics_from_counts(const ConfusionCounts& counts);

MetricsReport evaluate(const Model& model, const Dataset& ds, double threshold = 0.5);

/// Table rows in the order the ablation table reports them.
inline constexpr Variant kAblationOrder[] = {Variant::without_transformer, Variant::without_cnn, Variant::full};

std::string_view display_name(Variant v);

struct AblationRun {
  std::uint64_t seed = 0;
  std::optional<MetricsReport> metrics;  // empty when the run failed
  std::string error;
  int best_epoch = 0;

  bool ok() const noexcept { return metrics.has_value(); }
  friend bool operator==(const AblationRun&, const AblationRun&) = default;
};

struct MeanMetrics {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;

  friend bool operator==(const MeanMetrics&, const MeanMetrics&) = default;
};

struct AblationRow {
  std::string model;  // variant name
  std::vector<AblationRun> runs;
  MeanMetrics mean;

  friend bool operator==(const AblationRow&, const AblationRow&) = default;
};

struct AblationTable {
  double threshold = 0.5;
  std::vector<AblationRow> rows;

  bool all_ok() const;
  const AblationRow* find(Variant v) const;
  friend bool operator==(const AblationTable&, const AblationTable&) = default;
};

/// Mean over the runs where each metric is defined.
MeanMetrics mean_metrics(std::span<const AblationRun> runs);

struct AblationOptions {
  double threshold = 0.5;
  /// Concurrent training runs; every run owns its own state.
  std::size_t workers = 1;
  std::ostream* progress = nullptr;
};

/// Splits `dataset` once, standardizes with training statistics and trains
/// every variant for every seed on that split. The seed drives both the
/// parameter init and the batch order. Failed runs are recorded, not thrown.
AblationTable run_ablation(const ModelConfig& base_config, const TrainConfig& train_config, const Dataset& dataset,
                           const SplitSpec& split_spec, std::span<const std::uint64_t> seeds,
                           const AblationOptions& options = {});

/// Wraps one evaluation as a single-row table.
AblationTable single_report(const MetricsReport& metrics, std::uint64_t seed, int best_epoch, double threshold);

}  // namespace hct
