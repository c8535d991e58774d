#include "hct/train.hpp"

#include "hct/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace hct {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(text) + "' (sgd, adam)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and non-negative");
  }
  if (optimizer == OptimizerKind::adam) {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("adam eps must be positive");
  }
  if (early_stop_patience && *early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
}

// ---------------------------------------------------------------- optimizer

Optimizer::Optimizer(const TrainConfig& config) : config_(config) {}

void Optimizer::update(ModelParams& params) {
  ++steps_;
  const double lr = config_.learning_rate;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    auto w = t.data();
    auto g = t.grad();
    if (config_.optimizer == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
    } else {
      auto& m = moments_[name];
      if (m.first.empty()) {
        m.first.assign(w.size(), 0.0);
        m.second.assign(w.size(), 0.0);
      }
      for (std::size_t i = 0; i < w.size(); ++i) {
        m.first[i] = b1 * m.first[i] + (1.0 - b1) * g[i];
        m.second[i] = b2 * m.second[i] + (1.0 - b2) * g[i] * g[i];
        const double m_hat = m.first[i] / c1;
        const double v_hat = m.second[i] / c2;
        w[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.adam_eps);
      }
    }
    t.zero_grad();
  }
}

TrainState::TrainState(ModelParams p, const TrainConfig& config)
    : params(std::move(p)),
      optimizer(config),
      shuffle_rng(config.seed),
      dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL) {}

// ---------------------------------------------------------------- loss / step

double mean_bce(std::span<const double> probs, std::span<const double> labels) {
  if (probs.size() != labels.size()) {
    throw UsageError("mean_bce got " + std::to_string(probs.size()) + " probabilities and " +
                     std::to_string(labels.size()) + " labels");
  }
  if (probs.empty()) throw UsageError("mean_bce on an empty set");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double q = std::clamp(probs[i], kBceClamp, 1.0 - kBceClamp);
    total += labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
  }
  return -total / static_cast<double>(probs.size());
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string describe_non_finite(const ModelParams& params, double loss) {
  for (const auto& [name, t] : params) {
    if (!all_finite(t.data())) return "non-finite value in parameter '" + name + "'";
  }
  for (const auto& [name, t] : params) {
    if (t.has_grad() && !all_finite(t.grad())) {
      return "non-finite gradient in parameter '" + name + "' (loss " + std::to_string(loss) + ")";
    }
  }
  return "non-finite loss " + std::to_string(loss) + " with finite parameters and gradients";
}

}  // namespace

double step(TrainState& state, const ModelConfig& model_config, std::span<const RowMatrix* const> batch,
            std::span<const double> labels) {
  double loss = 0.0;
  {
    Graph g;
    ParamBinder p(g, state.params);
    ForwardContext ctx;
    ctx.dropout_rng = &state.dropout_rng;
    Var l = bce_loss(forward_batch(g, p, batch, model_config, ctx), labels);
    loss = l.scalar();
    g.backward(l);
  }
  bool finite = std::isfinite(loss);
  for (const auto& entry : state.params) {
    finite = finite && (!entry.second.has_grad() || all_finite(entry.second.grad()));
  }
  if (!finite) {
    const std::string what = describe_non_finite(state.params, loss);
    for (auto& entry : state.params) entry.second.zero_grad();
    throw NumericError(what);
  }
  state.optimizer.update(state.params);
  return loss;
}

// ---------------------------------------------------------------- early stopping

bool EarlyStopping::update(double val_loss) {
  improved_ = !seen_ || val_loss < best_;
  if (improved_) {
    best_ = val_loss;
    seen_ = true;
    stale_ = 0;
    return false;
  }
  ++stale_;
  return patience_ && stale_ >= *patience_;
}

// ---------------------------------------------------------------- fit

double dataset_loss(const Model& model, const Dataset& ds) {
  std::vector<double> probs;
  probs.reserve(ds.size());
  for (const auto& s : ds.samples) probs.push_back(predict(model, s.features));
  return mean_bce(probs, ds.labels());
}

FitResult fit(const TrainConfig& config, const ModelConfig& model_config, const Dataset& train, const Dataset& val,
              std::ostream* progress) {
  config.validate();
  model_config.validate();
  if (train.empty()) throw UsageError("training split is empty");
  if (train.seq_len != model_config.seq_len || train.num_features() != model_config.features) {
    throw ConfigError("training data is [" + std::to_string(train.seq_len) + "x" +
                      std::to_string(train.num_features()) + "] per sample, model expects [" +
                      std::to_string(model_config.seq_len) + "x" + std::to_string(model_config.features) + "]");
  }

  FitResult result{TrainState(init_params(model_config), config), Model{model_config, {}}, 0, false};
  TrainState& state = result.state;
  EarlyStopping stopper(config.early_stop_patience);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const RowMatrix*> batch;
  std::vector<double> labels;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle_each_epoch) std::shuffle(order.begin(), order.end(), state.shuffle_rng);
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      labels.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train.samples[order[k]];
        batch.push_back(&s.features);
        labels.push_back(static_cast<double>(s.label));
      }
      weighted += step(state, model_config, batch, labels) * static_cast<double>(end - start);
    }
    state.epoch = epoch;
    const double train_loss = weighted / static_cast<double>(order.size());
    const Model current{model_config, state.params};
    const double val_loss = val.empty() ? train_loss : dataset_loss(current, val);
    if (!std::isfinite(val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    state.history.push_back({epoch, train_loss, val_loss});

    const bool stop = stopper.update(val_loss);
    if (stopper.improved()) {
      result.best = current;
      result.best_epoch = epoch;
    }
    if (progress) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %d/%d train_loss=%.6f val_loss=%.6f%s\n", epoch, config.epochs,
                    train_loss, val_loss, stopper.improved() ? " *" : "");
      *progress << line << std::flush;
    }
    if (stop) {
      result.stopped_early = epoch < config.epochs;
      break;
    }
  }
  for (auto& entry : result.best.params) entry.second.clear_grad();
  return result;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j = {{"epochs", c.epochs},
                      {"batch_size", c.batch_size},
                      {"learning_rate", c.learning_rate},
                      {"optimizer", std::string(to_string(c.optimizer))},
                      {"seed", c.seed},
                      {"shuffle_each_epoch", c.shuffle_each_epoch}};
  if (c.optimizer == OptimizerKind::adam) {
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_eps"] = c.adam_eps;
  }
  j["early_stop_patience"] = c.early_stop_patience ? nlohmann::json(*c.early_stop_patience) : nlohmann::json();
  return j;
}

nlohmann::json history_to_json(const FitResult& result) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& r : result.state.history) {
    epochs.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}});
  }
  return {{"schema", "hct.history"},
          {"version", 1},
          {"epochs", epochs},
          {"best_epoch", result.best_epoch},
          {"stopped_early", result.stopped_early}};
}

}  // namespace hct
