#pragma once

#include "hct/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace hct {

class Graph;

/// Handle to a value recorded on a Graph. Cheap to copy; valid for the
/// lifetime of its graph.
class Var {
 public:
  Var() = default;

  const RowMatrix& value() const;
  const Shape& shape() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of executed operations for one forward pass.
///
/// Nodes are appended in execution order, so the tape is topologically
/// sorted by construction. backward() walks it once in reverse. Graphs are
/// meant to be built per forward pass and dropped afterwards.
class Graph {
 public:
  /// Accumulation targets for the inputs of one node; entries are null for
  /// inputs that do not need a gradient.
  using InputGrads = std::span<RowMatrix* const>;
  using BackwardFn = std::function<void(const RowMatrix& upstream, InputGrads grads)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Non-differentiable leaf.
  Var constant(RowMatrix value, Shape shape = {});
  Var constant(const Tensor& t);

  /// Differentiable leaf whose gradient is read back with grad().
  Var input(const Tensor& t);
  Var input(RowMatrix value);

  /// Differentiable leaf bound to `t`; backward() accumulates into t's grad.
  /// The tensor must outlive the graph.
  Var param(Tensor& t);

  Var record(RowMatrix value, std::vector<std::size_t> inputs, BackwardFn backward, Shape shape = {});

  /// Reverse pass from a 1x1 loss. Calling it again accumulates a second copy
  /// of the gradients into bound tensors.
  void backward(Var loss);

  /// Adjoint of `v` from the most recent backward(); zeros if unreached.
  RowMatrix grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const RowMatrix& value(std::size_t id) const { return nodes_[id].value; }
  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }

  /// When positive, kinked operations (relu, maxpool1d) count inputs that sit
  /// within this distance of a non-differentiable point.
  void set_kink_radius(double radius) noexcept { kink_radius_ = radius; }
  double kink_radius() const noexcept { return kink_radius_; }
  void note_kink() noexcept { ++kinks_; }
  std::size_t kink_count() const noexcept { return kinks_; }

 private:
  struct Node {
    RowMatrix value;
    Shape shape;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor* bound = nullptr;
    bool needs_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::vector<RowMatrix> adjoints_;
  double kink_radius_ = 0.0;
  std::size_t kinks_ = 0;
};

/// Adds `g` into a lazily allocated adjoint.
void accumulate(RowMatrix* target, const RowMatrix& g);

// Differentiable operations. Every operand must live on the same graph.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// a[m x n] + row[1 x n] broadcast down the rows.
Var add_row(Var a, Var row);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var mean(Var a);
/// Mean over rows: [m x n] -> [1 x n].
Var mean_rows(Var a);

/// input [C_in x T], kernels of shape [C_out, C_in, K], bias [C_out].
Var conv1d(Var input, Var kernels, Var bias, Index stride = 1, Index padding = 0);
Var relu(Var x);
/// Per-row max pooling over columns.
Var maxpool1d(Var x, Index window, Index stride);
Var softmax_rows(Var x);
Var sigmoid(Var x);
Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-5);
Var concat_last(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Index begin, Index count);

/// Inverted dropout: keeps each entry with probability 1-rate and rescales
/// by 1/(1-rate). rate == 0 returns `x` unchanged.
Var dropout(Var x, double rate, std::mt19937_64& rng);

inline constexpr double kBceClamp = 1e-12;

/// Mean binary cross-entropy with probabilities clamped to
/// [kBceClamp, 1 - kBceClamp]. Clamped entries receive zero gradient.
Var bce_loss(Var probs, std::span<const double> labels);

#ifdef HCT_FAULT_INJECTION
namespace fault {
/// Negates the matmul backward pass. Only present in the fault-injection build.
void set_flip_matmul_backward(bool on);
}  // namespace fault
#endif

}  // namespace hct
