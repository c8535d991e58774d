#include "hct/model.hpp"

#include "hct/errors.hpp"
#include "hct/kernels.hpp"

#include <cmath>
#include <string>

namespace hct {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::full:
      return "full";
    case Variant::without_cnn:
      return "without_cnn";
    case Variant::without_transformer:
      return "without_transformer";
  }
  return "unknown";
}

std::string_view to_string(PositionalEncoding p) {
  return p == PositionalEncoding::sinusoidal ? "sinusoidal" : "none";
}

Variant parse_variant(std::string_view text) {
  if (text == "full") return Variant::full;
  if (text == "without_cnn") return Variant::without_cnn;
  if (text == "without_transformer") return Variant::without_transformer;
  throw ConfigError("unknown variant '" + std::string(text) + "' (full, without_cnn, without_transformer)");
}

PositionalEncoding parse_positional_encoding(std::string_view text) {
  if (text == "sinusoidal") return PositionalEncoding::sinusoidal;
  if (text == "none") return PositionalEncoding::none;
  throw ConfigError("unknown positional encoding '" + std::string(text) + "' (sinusoidal, none)");
}

// ---------------------------------------------------------------- config

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void ModelConfig::validate() const {
  require(seq_len >= 1, "seq_len must be >= 1");
  require(features >= 1, "features must be >= 1");
  require(d_model >= 1, "d_model must be >= 1");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must lie in [0, 1)");
  if (uses_cnn()) {
    require(!conv_layers.empty(), "variant " + std::string(to_string(variant)) + " needs at least one conv stage");
    for (std::size_t i = 0; i < conv_layers.size(); ++i) {
      const auto& s = conv_layers[i];
      const std::string tag = "conv stage " + std::to_string(i);
      require(s.out_channels >= 1, tag + ": out_channels must be >= 1");
      require(s.kernel_size >= 1, tag + ": kernel_size must be >= 1");
      require(s.pool_window >= 1, tag + ": pool_window must be >= 1");
    }
    encoded_length();  // throws if any stage runs out of time steps
  }
  if (uses_transformer()) {
    require(n_heads >= 1, "n_heads must be >= 1");
    require(d_k >= 1, "d_k must be >= 1");
    require(d_v >= 1, "d_v must be >= 1");
    require(n_blocks >= 1, "n_blocks must be >= 1");
    require(ffn_dim >= 1, "ffn_dim must be >= 1");
  }
}

Index ModelConfig::encoded_length() const {
  if (!uses_cnn()) return seq_len;
  Index t = seq_len;
  for (std::size_t i = 0; i < conv_layers.size(); ++i) {
    const auto& s = conv_layers[i];
    try {
      t = kernels::conv_output_length(t, s.kernel_size, 1, 0);
      t = kernels::pool_output_length(t, s.pool_window, s.pool_window);
    } catch (const ConfigError& e) {
      throw ConfigError("conv stage " + std::to_string(i) + ": " + e.what());
    }
  }
  return t;
}

// ---------------------------------------------------------------- parameters

std::vector<ParamSpec> param_specs(const ModelConfig& config) {
  config.validate();
  std::vector<ParamSpec> specs;
  auto weight = [&](std::string name, Index in, Index out, Shape shape = {}) {
    if (shape.empty()) shape = {in, out};
    specs.push_back({std::move(name), std::move(shape), ParamKind::weight, in, out});
  };
  auto vec = [&](std::string name, Index n, ParamKind kind) { specs.push_back({std::move(name), {n}, kind, 0, 0}); };

  const Index d = config.d_model;
  if (config.uses_cnn()) {
    Index c_in = config.features;
    for (std::size_t i = 0; i < config.conv_layers.size(); ++i) {
      const auto& s = config.conv_layers[i];
      const std::string prefix = "cnn.layer" + std::to_string(i);
      weight(prefix + ".kernels", c_in * s.kernel_size, s.out_channels * s.kernel_size,
             {s.out_channels, c_in, s.kernel_size});
      vec(prefix + ".bias", s.out_channels, ParamKind::bias);
      c_in = s.out_channels;
    }
    weight("cnn.proj.W", c_in, d);
    vec("cnn.proj.b", d, ParamKind::bias);
  } else {
    weight("embed.W", config.features, d);
    vec("embed.b", d, ParamKind::bias);
  }
  if (config.uses_transformer()) {
    for (Index b = 0; b < config.n_blocks; ++b) {
      const std::string block = "attn.block" + std::to_string(b);
      for (Index h = 0; h < config.n_heads; ++h) {
        const std::string head = block + ".head" + std::to_string(h);
        weight(head + ".W_Q", d, config.d_k);
        weight(head + ".W_K", d, config.d_k);
        weight(head + ".W_V", d, config.d_v);
      }
      weight(block + ".W_o", config.n_heads * config.d_v, d);
      vec(block + ".norm1.gain", d, ParamKind::gain);
      vec(block + ".norm1.shift", d, ParamKind::bias);
      weight(block + ".ffn.W1", d, config.ffn_dim);
      vec(block + ".ffn.b1", config.ffn_dim, ParamKind::bias);
      weight(block + ".ffn.W2", config.ffn_dim, d);
      vec(block + ".ffn.b2", d, ParamKind::bias);
      vec(block + ".norm2.gain", d, ParamKind::gain);
      vec(block + ".norm2.shift", d, ParamKind::bias);
    }
  }
  weight("head.W_y", d, 1);
  vec("head.b", 1, ParamKind::bias);
  return specs;
}

double glorot_bound(Index fan_in, Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams params;
  for (const auto& spec : param_specs(config)) {
    Tensor t(spec.shape);
    if (spec.kind == ParamKind::weight) {
      const double bound = glorot_bound(spec.fan_in, spec.fan_out);
      for (double& w : t.data()) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        w = (2.0 * u - 1.0) * bound;
      }
    } else if (spec.kind == ParamKind::gain) {
      for (double& w : t.data()) w = 1.0;
    }
    t.set_requires_grad(true);
    params.emplace(spec.name, std::move(t));
  }
  return params;
}

Model make_model(const ModelConfig& config) { return Model{config, init_params(config)}; }

Var ParamBinder::operator[](const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  Var v;
  if (mutable_) {
    auto it = mutable_->find(name);
    if (it == mutable_->end()) throw ConfigError("model has no parameter '" + name + "'");
    v = graph_.param(it->second);
  } else {
    auto it = const_->find(name);
    if (it == const_->end()) throw ConfigError("model has no parameter '" + name + "'");
    v = graph_.constant(it->second);
  }
  bound_.emplace(name, v);
  return v;
}

// ---------------------------------------------------------------- forward

Var attention(Var q, Var k, Var v, const AttentionObserver* observer, Index block, Index head) {
  if (q.cols() != k.cols()) {
    throw DimensionError("attention: Q width " + std::to_string(q.cols()) + " != K width " + std::to_string(k.cols()));
  }
  if (k.rows() != v.rows()) {
    throw DimensionError("attention: K has " + std::to_string(k.rows()) + " steps, V has " + std::to_string(v.rows()));
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Var weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dk));
  if (observer && *observer) (*observer)(block, head, weights.value());
  return matmul(weights, v);
}

Var cnn_encode(Var x, ParamBinder& p, const ModelConfig& config) {
  if (!config.uses_cnn()) throw ConfigError("cnn_encode called for a variant without CNN");
  if (x.rows() != config.features || x.cols() != config.seq_len) {
    throw ConfigError("cnn_encode expects [" + std::to_string(config.features) + "x" + std::to_string(config.seq_len) +
                      "] input, got [" + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + "]");
  }
  Var h = x;
  for (std::size_t i = 0; i < config.conv_layers.size(); ++i) {
    const auto& s = config.conv_layers[i];
    const std::string prefix = "cnn.layer" + std::to_string(i);
    h = conv1d(h, p[prefix + ".kernels"], p[prefix + ".bias"], 1, 0);
    h = relu(h);
    h = maxpool1d(h, s.pool_window, s.pool_window);
  }
  return add_row(matmul(transpose(h), p["cnn.proj.W"]), p["cnn.proj.b"]);
}

Var multi_head_attention(Var f, ParamBinder& p, const ModelConfig& config, Index block, const ForwardContext& ctx) {
  if (f.cols() != config.d_model) {
    throw ConfigError("multi_head_attention expects width " + std::to_string(config.d_model) + ", got " +
                      std::to_string(f.cols()));
  }
  const std::string prefix = "attn.block" + std::to_string(block);
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(config.n_heads));
  for (Index h = 0; h < config.n_heads; ++h) {
    const std::string head = prefix + ".head" + std::to_string(h);
    Var q = matmul(f, p[head + ".W_Q"]);
    Var k = matmul(f, p[head + ".W_K"]);
    Var v = matmul(f, p[head + ".W_V"]);
    heads.push_back(attention(q, k, v, &ctx.on_attention, block, h));
  }
  Var w_o = p[prefix + ".W_o"];
  if (w_o.rows() != config.n_heads * config.d_v) {
    throw ConfigError(prefix + ".W_o has " + std::to_string(w_o.rows()) + " rows, heads produce " +
                      std::to_string(config.n_heads * config.d_v));
  }
  return matmul(concat_last(heads), w_o);
}

namespace {

Var maybe_dropout(Var x, const ModelConfig& config, const ForwardContext& ctx) {
  if (ctx.dropout_rng == nullptr || config.dropout_rate == 0.0) return x;
  return dropout(x, config.dropout_rate, *ctx.dropout_rng);
}

}  // namespace

Var transformer_block(Var f, ParamBinder& p, const ModelConfig& config, Index block, const ForwardContext& ctx) {
  const std::string prefix = "attn.block" + std::to_string(block);
  Var attended = maybe_dropout(multi_head_attention(f, p, config, block, ctx), config, ctx);
  Var y = layer_norm(add(f, attended), p[prefix + ".norm1.gain"], p[prefix + ".norm1.shift"], kLayerNormEps);
  Var hidden = relu(add_row(matmul(y, p[prefix + ".ffn.W1"]), p[prefix + ".ffn.b1"]));
  Var ffn = maybe_dropout(add_row(matmul(hidden, p[prefix + ".ffn.W2"]), p[prefix + ".ffn.b2"]), config, ctx);
  return layer_norm(add(y, ffn), p[prefix + ".norm2.gain"], p[prefix + ".norm2.shift"], kLayerNormEps);
}

Var pool_sequence(Var z) { return mean_rows(z); }

Var classify(Var z_final, ParamBinder& p) {
  Var w = p["head.W_y"];
  if (z_final.cols() != w.rows()) {
    throw DimensionError("classify: feature width " + std::to_string(z_final.cols()) + " != W_y rows " +
                         std::to_string(w.rows()));
  }
  return sigmoid(add_row(matmul(z_final, w), p["head.b"]));
}

Var forward(Graph& g, ParamBinder& p, const RowMatrix& sample, const ModelConfig& config, const ForwardContext& ctx) {
  if (sample.rows() != config.seq_len || sample.cols() != config.features) {
    throw ConfigError("sample is [" + std::to_string(sample.rows()) + "x" + std::to_string(sample.cols()) +
                      "], model expects [" + std::to_string(config.seq_len) + "x" + std::to_string(config.features) +
                      "]");
  }
  Var z;
  if (config.uses_cnn()) {
    z = cnn_encode(g.constant(sample.transpose()), p, config);
  } else {
    z = add_row(matmul(g.constant(sample), p["embed.W"]), p["embed.b"]);
  }
  if (config.uses_transformer()) {
    if (config.positional_encoding == PositionalEncoding::sinusoidal) {
      z = add(z, g.constant(kernels::sinusoidal_positions(z.rows(), z.cols())));
    }
    for (Index b = 0; b < config.n_blocks; ++b) z = transformer_block(z, p, config, b, ctx);
  }
  return classify(pool_sequence(z), p);
}

Var forward_batch(Graph& g, ParamBinder& p, std::span<const RowMatrix* const> samples, const ModelConfig& config,
                  const ForwardContext& ctx) {
  if (samples.empty()) throw UsageError("forward_batch on an empty batch");
  std::vector<Var> probs;
  probs.reserve(samples.size());
  for (const RowMatrix* s : samples) probs.push_back(forward(g, p, *s, config, ctx));
  return concat_rows(probs);
}

double predict(const Model& model, const RowMatrix& sample) {
  Graph g;
  ParamBinder p(g, model.params);
  return forward(g, p, sample, model.config).scalar();
}

std::vector<double> predict(const Model& model, std::span<const RowMatrix> samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(predict(model, s));
  return out;
}

}  // namespace hct
