#pragma once

// Hybrid CNN-Transformer sequence classifier.
//
// full:                 conv stages -> positions -> transformer blocks -> mean over time -> sigmoid head
// without_transformer:  conv stages -> mean over time -> sigmoid head
// without_cnn:          per-step linear embedding -> positions -> transformer blocks -> mean -> sigmoid head
//
// Samples enter as [T x F] (one row per time step). The convolutional
// encoder works channels-first, so it consumes the transpose [F x T].

#include "hct/graph.hpp"
#include "hct/tensor.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hct {

enum class Variant { full, without_cnn, without_transformer };
enum class PositionalEncoding { sinusoidal, none };

std::string_view to_string(Variant v);
std::string_view to_string(PositionalEncoding p);
Variant parse_variant(std::string_view text);
PositionalEncoding parse_positional_encoding(std::string_view text);

/// One convolutional stage: conv1d (stride 1, no padding) -> relu -> maxpool1d (stride = window).
struct ConvStage {
  Index out_channels = 16;
  Index kernel_size = 3;
  Index pool_window = 2;

  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

struct ModelConfig {
  Index seq_len = 12;  // T
  Index features = 4;  // F
  std::vector<ConvStage> conv_layers{ConvStage{}};
  Index d_model = 16;
  Index n_heads = 2;
  Index d_k = 8;
  Index d_v = 8;
  Index n_blocks = 1;
  Index ffn_dim = 32;
  Variant variant = Variant::full;
  PositionalEncoding positional_encoding = PositionalEncoding::sinusoidal;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  bool uses_cnn() const noexcept { return variant != Variant::without_cnn; }
  bool uses_transformer() const noexcept { return variant != Variant::without_transformer; }

  /// Throws ConfigError describing the first inconsistency found.
  void validate() const;

  /// Sequence length after the convolutional encoder (seq_len when the CNN is disabled).
  Index encoded_length() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr double kLayerNormEps = 1e-5;

using ModelParams = std::map<std::string, Tensor>;

enum class ParamKind { weight, bias, gain };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamKind kind = ParamKind::weight;
  Index fan_in = 0;
  Index fan_out = 0;
};

/// Every parameter the config implies, in a fixed order.
std::vector<ParamSpec> param_specs(const ModelConfig& config);

/// sqrt(6 / (fan_in + fan_out))
double glorot_bound(Index fan_in, Index fan_out);

/// Glorot-uniform weights, zero biases, unit layer-norm gains.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);
inline ModelParams init_params(const ModelConfig& config) { return init_params(config, config.seed); }

struct Model {
  ModelConfig config;
  ModelParams params;

  friend bool operator==(const Model&, const Model&) = default;
};

Model make_model(const ModelConfig& config);

/// Binds model parameters into one graph, each at most once. A mutable
/// parameter map is bound as trainable leaves; a const one as constants.
class ParamBinder {
 public:
  ParamBinder(Graph& g, ModelParams& params) : graph_(g), mutable_(&params), const_(&params) {}
  ParamBinder(Graph& g, const ModelParams& params) : graph_(g), const_(&params) {}

  Var operator[](const std::string& name);
  Graph& graph() const noexcept { return graph_; }

 private:
  Graph& graph_;
  ModelParams* mutable_ = nullptr;
  const ModelParams* const_ = nullptr;
  std::map<std::string, Var> bound_;
};

using AttentionObserver = std::function<void(Index block, Index head, const RowMatrix& weights)>;

struct ForwardContext {
  /// Enables dropout when non-null and dropout_rate > 0.
  std::mt19937_64* dropout_rng = nullptr;
  /// Sees every attention weight matrix as it is produced.
  AttentionObserver on_attention;
};

/// softmax(Q K^T / sqrt(d_k)) V with d_k = Q.cols().
Var attention(Var q, Var k, Var v, const AttentionObserver* observer = nullptr, Index block = 0, Index head = 0);

/// x: [F x T] channels-first. Returns [T' x d_model].
Var cnn_encode(Var x, ParamBinder& p, const ModelConfig& config);

Var multi_head_attention(Var f, ParamBinder& p, const ModelConfig& config, Index block,
                         const ForwardContext& ctx = {});

Var transformer_block(Var f, ParamBinder& p, const ModelConfig& config, Index block,
                      const ForwardContext& ctx = {});

/// Mean over the time axis: [T x d] -> [1 x d].
Var pool_sequence(Var z);

/// sigmoid(z W_y + b) -> [1 x 1].
Var classify(Var z_final, ParamBinder& p);

/// One sample [T x F] -> probability [1 x 1].
Var forward(Graph& g, ParamBinder& p, const RowMatrix& sample, const ModelConfig& config,
            const ForwardContext& ctx = {});

/// Stacks per-sample probabilities into [n x 1].
Var forward_batch(Graph& g, ParamBinder& p, std::span<const RowMatrix* const> samples, const ModelConfig& config,
                  const ForwardContext& ctx = {});

/// Inference without dropout; one probability per sample in input order.
double predict(const Model& model, const RowMatrix& sample);
std::vector<double> predict(const Model& model, std::span<const RowMatrix> samples);

}  // namespace hct
