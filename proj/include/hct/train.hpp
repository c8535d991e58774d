#pragma once

#include "hct/dataio.hpp"
#include "hct/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace hct {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view text);

struct TrainConfig {
  int epochs = 60;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle_each_epoch = true;
  std::optional<int> early_stop_patience;

  void validate() const;
};

/// SGD or bias-corrected Adam over a named parameter map.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& config);

  /// Applies one update from the accumulated gradients, then zeroes them.
  /// Parameters without a gradient are left untouched.
  void update(ModelParams& params);

  long steps() const noexcept { return steps_; }

 private:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  TrainConfig config_;
  std::map<std::string, Moments> moments_;
  long steps_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainState {
  ModelParams params;
  Optimizer optimizer;
  int epoch = 0;
  std::vector<EpochRecord> history;
  std::mt19937_64 shuffle_rng;
  std::mt19937_64 dropout_rng;

  TrainState(ModelParams p, const TrainConfig& config);
};

/// Mean BCE of plain probabilities, with the same clamp as bce_loss().
double mean_bce(std::span<const double> probs, std::span<const double> labels);

/// One forward + backward + update on a batch. Returns the batch loss.
/// Throws NumericError naming the offending parameter on a non-finite loss
/// or gradient; parameters are not updated in that case.
double step(TrainState& state, const ModelConfig& model_config, std::span<const RowMatrix* const> batch,
            std::span<const double> labels);

/// Patience counter over validation losses.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::optional<int> patience) : patience_(patience) {}

  /// Records one epoch; returns true once `patience` epochs in a row failed
  /// to improve on the best loss.
  bool update(double val_loss);

  double best() const noexcept { return best_; }
  bool improved() const noexcept { return improved_; }

 private:
  std::optional<int> patience_;
  double best_ = 0.0;
  bool seen_ = false;
  bool improved_ = false;
  int stale_ = 0;
};

struct FitResult {
  TrainState state;
  Model best;  // parameters from the epoch with the lowest validation loss
  int best_epoch = 0;
  bool stopped_early = false;
};

/// Trains on `train`, selects by loss on `val` (train loss when `val` is empty).
/// Writes one progress line per epoch to `progress` when given.
FitResult fit(const TrainConfig& config, const ModelConfig& model_config, const Dataset& train, const Dataset& val,
              std::ostream* progress = nullptr);

/// Mean BCE of a model over a dataset.
double dataset_loss(const Model& model, const Dataset& ds);

nlohmann::json history_to_json(const FitResult& result);
nlohmann::json train_config_to_json(const TrainConfig& config);

}  // namespace hct
