#pragma once

// Forward and backward kernels for the differentiable operations. These are
// pure functions over Eigen matrices, templated on the scalar type; the
// autodiff graph in graph.hpp records them and wires the adjoints together.

#include "hct/errors.hpp"
#include "hct/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <limits>
#include <string>

namespace hct::kernels {

template <typename Scalar>
using Mat = RowMatrixT<Scalar>;

using IndexMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index conv_output_length(Index length, Index kernel_size, Index stride, Index padding) {
  if (kernel_size < 1 || stride < 1 || padding < 0) {
    throw ConfigError("conv1d needs kernel >= 1, stride >= 1, padding >= 0");
  }
  if (kernel_size > length + 2 * padding) {
    throw ConfigError("conv1d kernel of length " + std::to_string(kernel_size) +
                      " exceeds padded input length " + std::to_string(length + 2 * padding));
  }
  return (length + 2 * padding - kernel_size) / stride + 1;
}

inline Index pool_output_length(Index length, Index window, Index stride) {
  if (window < 1 || stride < 1) throw ConfigError("maxpool1d needs window >= 1 and stride >= 1");
  if (window > length) {
    throw ConfigError("maxpool1d window " + std::to_string(window) + " exceeds input length " +
                      std::to_string(length));
  }
  return (length - window) / stride + 1;
}

/// Unfolds a [C_in x T] signal into [(C_in*K) x T_out] patches, zero padded.
template <typename Derived>
Mat<typename Derived::Scalar> im2col(const Eigen::MatrixBase<Derived>& input, Index kernel_size, Index stride,
                                     Index padding) {
  using Scalar = typename Derived::Scalar;
  const Index channels = input.rows();
  const Index length = input.cols();
  const Index out_len = conv_output_length(length, kernel_size, stride, padding);
  Mat<Scalar> cols = Mat<Scalar>::Zero(channels * kernel_size, out_len);
  for (Index c = 0; c < channels; ++c)
    for (Index k = 0; k < kernel_size; ++k)
      for (Index t = 0; t < out_len; ++t) {
        const Index src = t * stride + k - padding;
        if (src >= 0 && src < length) cols(c * kernel_size + k, t) = input(c, src);
      }
  return cols;
}

/// Adjoint of im2col: scatters patch gradients back onto the signal.
template <typename Derived>
Mat<typename Derived::Scalar> col2im(const Eigen::MatrixBase<Derived>& cols, Index channels, Index length,
                                     Index kernel_size, Index stride, Index padding) {
  using Scalar = typename Derived::Scalar;
  Mat<Scalar> out = Mat<Scalar>::Zero(channels, length);
  for (Index c = 0; c < channels; ++c)
    for (Index k = 0; k < kernel_size; ++k)
      for (Index t = 0; t < cols.cols(); ++t) {
        const Index src = t * stride + k - padding;
        if (src >= 0 && src < length) out(c, src) += cols(c * kernel_size + k, t);
      }
  return out;
}

/// Cross-correlation. `kernels` is [C_out x (C_in*K)], `bias` holds C_out entries.
template <typename DI, typename DK, typename DB>
Mat<typename DI::Scalar> conv1d(const Eigen::MatrixBase<DI>& input, const Eigen::MatrixBase<DK>& kernels,
                                const Eigen::MatrixBase<DB>& bias, Index kernel_size, Index stride, Index padding) {
  if (kernels.cols() != input.rows() * kernel_size) {
    throw DimensionError("conv1d kernels have " + std::to_string(kernels.cols()) + " taps per output channel, " +
                         "input needs " + std::to_string(input.rows()) + "x" + std::to_string(kernel_size));
  }
  if (bias.size() != kernels.rows()) throw DimensionError("conv1d bias length must equal output channels");
  Mat<typename DI::Scalar> out = kernels * im2col(input, kernel_size, stride, padding);
  for (Index o = 0; o < out.rows(); ++o) out.row(o).array() += bias(o);
  return out;
}

template <typename Scalar>
struct Conv1dGrads {
  Mat<Scalar> input;
  Mat<Scalar> kernels;
  Mat<Scalar> bias;  // 1 x C_out
};

template <typename DI, typename DK, typename DG>
Conv1dGrads<typename DI::Scalar> conv1d_backward(const Eigen::MatrixBase<DI>& input,
                                                 const Eigen::MatrixBase<DK>& kernels,
                                                 const Eigen::MatrixBase<DG>& grad_out, Index kernel_size,
                                                 Index stride, Index padding) {
  using Scalar = typename DI::Scalar;
  const Mat<Scalar> cols = im2col(input, kernel_size, stride, padding);
  Conv1dGrads<Scalar> g;
  g.kernels = grad_out * cols.transpose();
  g.bias = grad_out.rowwise().sum().transpose();
  g.input = col2im(kernels.transpose() * grad_out, input.rows(), input.cols(), kernel_size, stride, padding);
  return g;
}

template <typename Derived>
Mat<typename Derived::Scalar> relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

template <typename DX, typename DG>
Mat<typename DX::Scalar> relu_backward(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DG>& grad_out) {
  using Scalar = typename DX::Scalar;
  return (grad_out.array() * (x.array() > Scalar(0)).template cast<Scalar>()).matrix();
}

/// Per-row windowed maximum. `argmax` receives the source column of each
/// output; ties resolve to the first maximal position.
template <typename Derived>
Mat<typename Derived::Scalar> maxpool1d(const Eigen::MatrixBase<Derived>& x, Index window, Index stride,
                                        IndexMatrix& argmax) {
  using Scalar = typename Derived::Scalar;
  const Index out_len = pool_output_length(x.cols(), window, stride);
  Mat<Scalar> out(x.rows(), out_len);
  argmax.resize(x.rows(), out_len);
  for (Index r = 0; r < x.rows(); ++r)
    for (Index t = 0; t < out_len; ++t) {
      Index best = t * stride;
      for (Index k = 1; k < window; ++k) {
        if (x(r, t * stride + k) > x(r, best)) best = t * stride + k;
      }
      out(r, t) = x(r, best);
      argmax(r, t) = best;
    }
  return out;
}

template <typename DG>
Mat<typename DG::Scalar> maxpool1d_backward(const Eigen::MatrixBase<DG>& grad_out, const IndexMatrix& argmax,
                                            Index input_cols) {
  Mat<typename DG::Scalar> g = Mat<typename DG::Scalar>::Zero(grad_out.rows(), input_cols);
  for (Index r = 0; r < grad_out.rows(); ++r)
    for (Index t = 0; t < grad_out.cols(); ++t) g(r, argmax(r, t)) += grad_out(r, t);
  return g;
}

template <typename Derived>
Mat<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Mat<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar peak = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// dx = y * (dy - rowsum(dy * y))
template <typename DY, typename DG>
Mat<typename DY::Scalar> softmax_rows_backward(const Eigen::MatrixBase<DY>& y, const Eigen::MatrixBase<DG>& grad_out) {
  using Scalar = typename DY::Scalar;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = y.cwiseProduct(grad_out).rowwise().sum();
  return (y.array() * (grad_out.colwise() - dots).array()).matrix();
}

/// Logistic function clamped to the open interval (0, 1): the result is never
/// exactly 0 or 1, even where the double result would round there.
template <std::floating_point Scalar>
Scalar sigmoid(Scalar x) {
  const Scalar lo = std::numeric_limits<Scalar>::min();
  const Scalar hi = std::nextafter(Scalar(1), Scalar(0));
  Scalar s;
  if (x >= Scalar(0)) {
    s = Scalar(1) / (Scalar(1) + std::exp(-x));
  } else {
    const Scalar e = std::exp(x);
    s = e / (Scalar(1) + e);
  }
  return s < lo ? lo : (s > hi ? hi : s);
}

template <typename Derived>
Mat<typename Derived::Scalar> sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return sigmoid(v); });
}

template <typename DY, typename DG>
Mat<typename DY::Scalar> sigmoid_backward(const Eigen::MatrixBase<DY>& y, const Eigen::MatrixBase<DG>& grad_out) {
  using Scalar = typename DY::Scalar;
  return (grad_out.array() * y.array() * (Scalar(1) - y.array())).matrix();
}

template <typename Scalar>
struct LayerNormCache {
  Mat<Scalar> normalized;                           // x-hat
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;  // per row
};

/// Normalizes each row to zero mean and unit (biased) variance, then applies
/// gain and shift (both length = cols).
template <typename DX, typename DG, typename DS>
Mat<typename DX::Scalar> layer_norm(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DG>& gain,
                                    const Eigen::MatrixBase<DS>& shift, typename DX::Scalar eps,
                                    LayerNormCache<typename DX::Scalar>& cache) {
  using Scalar = typename DX::Scalar;
  if (gain.size() != x.cols() || shift.size() != x.cols()) {
    throw DimensionError("layer_norm gain/shift length must equal the normalized width " + std::to_string(x.cols()));
  }
  if (!(eps > Scalar(0))) throw ConfigError("layer_norm eps must be positive");
  const Index n = x.cols();
  cache.normalized.resize(x.rows(), n);
  cache.inv_std.resize(x.rows());
  Mat<Scalar> out(x.rows(), n);
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).matrix().eval();
    const Scalar var = centered.squaredNorm() / Scalar(n);
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    cache.inv_std(r) = inv;
    cache.normalized.row(r) = centered * inv;
    for (Index c = 0; c < n; ++c) out(r, c) = cache.normalized(r, c) * gain(c) + shift(c);
  }
  return out;
}

template <typename Scalar>
struct LayerNormGrads {
  Mat<Scalar> input;
  Mat<Scalar> gain;   // 1 x d
  Mat<Scalar> shift;  // 1 x d
};

template <typename DG, typename DO>
LayerNormGrads<typename DO::Scalar> layer_norm_backward(const LayerNormCache<typename DO::Scalar>& cache,
                                                        const Eigen::MatrixBase<DG>& gain,
                                                        const Eigen::MatrixBase<DO>& grad_out) {
  using Scalar = typename DO::Scalar;
  const Index rows = grad_out.rows();
  const Index n = grad_out.cols();
  LayerNormGrads<Scalar> g;
  g.gain = grad_out.cwiseProduct(cache.normalized).colwise().sum();
  g.shift = grad_out.colwise().sum();
  g.input.resize(rows, n);
  for (Index r = 0; r < rows; ++r) {
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dxhat(n);
    for (Index c = 0; c < n; ++c) dxhat(c) = grad_out(r, c) * gain(c);
    const Scalar sum_d = dxhat.sum();
    const Scalar sum_dx = dxhat.dot(cache.normalized.row(r));
    g.input.row(r) = (cache.inv_std(r) / Scalar(n)) *
                     (Scalar(n) * dxhat.array() - sum_d - cache.normalized.row(r).array() * sum_dx).matrix();
  }
  return g;
}

/// Sinusoidal position signal: even columns sin(t / 10000^(2i/d)), odd columns cos.
template <typename Scalar = double>
Mat<Scalar> sinusoidal_positions(Index length, Index width) {
  Mat<Scalar> pe(length, width);
  for (Index t = 0; t < length; ++t)
    for (Index c = 0; c < width; ++c) {
      const Scalar rate = std::pow(Scalar(10000), -Scalar(2 * (c / 2)) / Scalar(width));
      pe(t, c) = (c % 2 == 0) ? std::sin(Scalar(t) * rate) : std::cos(Scalar(t) * rate);
    }
  return pe;
}

}  // namespace hct::kernels
