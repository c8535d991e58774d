#include "hct/graph.hpp"

#include "hct/errors.hpp"
#include "hct/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace hct {

#ifdef HCT_FAULT_INJECTION
namespace fault {
namespace {
bool flip_matmul = false;
}
void set_flip_matmul_backward(bool on) { flip_matmul = on; }
}  // namespace fault
#endif

namespace {

std::string dims(const RowMatrix& m) { return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]"; }

Graph& same_graph(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw UsageError("operation on an unbound Var");
  if (&a.graph() != &b.graph()) throw UsageError("operands recorded on different graphs");
  return a.graph();
}

Graph& graph_of(Var a) {
  if (!a.valid()) throw UsageError("operation on an unbound Var");
  return a.graph();
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

// ---------------------------------------------------------------- Var

const RowMatrix& Var::value() const {
  if (!graph_) throw UsageError("value() on an unbound Var");
  return graph_->value(id_);
}

const Shape& Var::shape() const {
  if (!graph_) throw UsageError("shape() on an unbound Var");
  return graph_->shape(id_);
}

double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) throw UsageError("scalar() on a " + dims(v) + " value");
  return v(0, 0);
}

// ---------------------------------------------------------------- Graph

void accumulate(RowMatrix* target, const RowMatrix& g) {
  if (!target) return;
  if (target->size() == 0) {
    *target = g;
  } else {
    *target += g;
  }
}

Var Graph::push(Node node) {
  if (node.shape.empty()) node.shape = {node.value.rows(), node.value.cols()};
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(RowMatrix value, Shape shape) {
  Node n;
  n.value = std::move(value);
  n.shape = std::move(shape);
  return push(std::move(n));
}

Var Graph::constant(const Tensor& t) { return constant(RowMatrix(t.matrix()), t.shape()); }

Var Graph::input(const Tensor& t) {
  Node n;
  n.value = t.matrix();
  n.shape = t.shape();
  n.needs_grad = true;
  return push(std::move(n));
}

Var Graph::input(RowMatrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Graph::param(Tensor& t) {
  Node n;
  n.value = t.matrix();
  n.shape = t.shape();
  n.bound = &t;
  n.needs_grad = true;
  return push(std::move(n));
}

Var Graph::record(RowMatrix value, std::vector<std::size_t> inputs, BackwardFn backward, Shape shape) {
  Node n;
  n.value = std::move(value);
  n.shape = std::move(shape);
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw UsageError("record() references a node that does not exist yet");
    n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
  }
  n.inputs = std::move(inputs);
  if (n.needs_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Graph::backward(Var loss) {
  if (!loss.valid() || &loss.graph() != this) throw UsageError("backward() on a Var from another graph");
  if (loss.value().size() != 1) throw UsageError("backward() needs a scalar loss, got " + dims(loss.value()));

  adjoints_.assign(nodes_.size(), RowMatrix());
  adjoints_[loss.id()] = RowMatrix::Ones(1, 1);

  std::vector<RowMatrix*> targets;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.needs_grad || adjoints_[i].size() == 0) continue;
    if (node.backward) {
      targets.assign(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        if (nodes_[node.inputs[k]].needs_grad) targets[k] = &adjoints_[node.inputs[k]];
      }
      node.backward(adjoints_[i], targets);
    }
    if (node.bound) node.bound->accumulate_grad(adjoints_[i]);
  }
}

RowMatrix Graph::grad(Var v) const {
  const auto id = v.id();
  if (id < adjoints_.size() && adjoints_[id].size() != 0) return adjoints_[id];
  return RowMatrix::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
}

// ---------------------------------------------------------------- ops

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner dimensions disagree: " + dims(a.value()) + " x " + dims(b.value()));
  }
  return g.record(a.value() * b.value(), {a.id(), b.id()}, [a, b](const RowMatrix& up, Graph::InputGrads gr) {
    double sign = 1.0;
#ifdef HCT_FAULT_INJECTION
    if (fault::flip_matmul) sign = -1.0;
#endif
    if (gr[0]) accumulate(gr[0], sign * (up * b.value().transpose()));
    if (gr[1]) accumulate(gr[1], sign * (a.value().transpose() * up));
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  return g.record(a.value().transpose(), {a.id()},
                  [](const RowMatrix& up, Graph::InputGrads gr) { accumulate(gr[0], up.transpose()); });
}

namespace {

void require_same_dims(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + " shapes disagree: " + dims(a.value()) + " vs " + dims(b.value()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_dims("add", a, b);
  return g.record(a.value() + b.value(), {a.id(), b.id()}, [](const RowMatrix& up, Graph::InputGrads gr) {
    accumulate(gr[0], up);
    accumulate(gr[1], up);
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_dims("sub", a, b);
  return g.record(a.value() - b.value(), {a.id(), b.id()}, [](const RowMatrix& up, Graph::InputGrads gr) {
    accumulate(gr[0], up);
    accumulate(gr[1], -up);
  });
}

Var add_row(Var a, Var row) {
  Graph& g = same_graph(a, row);
  if (row.value().size() != a.cols()) {
    throw DimensionError("add_row needs a row of width " + std::to_string(a.cols()) + ", got " + dims(row.value()));
  }
  const Index rows = row.rows();
  const Index cols = row.cols();
  RowMatrix out = a.value();
  const Eigen::Map<const Eigen::RowVectorXd> r(row.value().data(), a.cols());
  out.rowwise() += r;
  return g.record(std::move(out), {a.id(), row.id()}, [rows, cols](const RowMatrix& up, Graph::InputGrads gr) {
    accumulate(gr[0], up);
    if (gr[1]) {
      RowMatrix s = up.colwise().sum();
      accumulate(gr[1], Eigen::Map<const RowMatrix>(s.data(), rows, cols));
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_dims("mul", a, b);
  return g.record(a.value().cwiseProduct(b.value()), {a.id(), b.id()},
                  [a, b](const RowMatrix& up, Graph::InputGrads gr) {
                    if (gr[0]) accumulate(gr[0], up.cwiseProduct(b.value()));
                    if (gr[1]) accumulate(gr[1], up.cwiseProduct(a.value()));
                  });
}

Var scale(Var a, double factor) {
  Graph& g = graph_of(a);
  return g.record(a.value() * factor, {a.id()},
                  [factor](const RowMatrix& up, Graph::InputGrads gr) { accumulate(gr[0], up * factor); });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  const Index r = a.rows();
  const Index c = a.cols();
  RowMatrix out(1, 1);
  out(0, 0) = a.value().sum();
  return g.record(std::move(out), {a.id()}, [r, c](const RowMatrix& up, Graph::InputGrads gr) {
    accumulate(gr[0], RowMatrix::Constant(r, c, up(0, 0)));
  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var mean_rows(Var a) {
  Graph& g = graph_of(a);
  const Index r = a.rows();
  if (r < 1) throw DimensionError("mean_rows on an empty matrix");
  return g.record(a.value().colwise().mean(), {a.id()}, [r](const RowMatrix& up, Graph::InputGrads gr) {
    RowMatrix spread = up.replicate(r, 1) / static_cast<double>(r);
    accumulate(gr[0], spread);
  });
}

Var conv1d(Var input, Var kernels, Var bias, Index stride, Index padding) {
  Graph& g = same_graph(input, kernels);
  same_graph(input, bias);
  const Shape& ks = kernels.shape();
  Index c_out = 0;
  Index c_in = 0;
  Index k = 0;
  if (ks.size() == 3) {
    c_out = ks[0];
    c_in = ks[1];
    k = ks[2];
  } else {
    c_out = kernels.rows();
    c_in = input.rows();
    k = c_in > 0 ? kernels.cols() / c_in : 0;
  }
  if (c_in != input.rows() || c_out * c_in * k != kernels.value().size()) {
    throw DimensionError("conv1d kernels " + shape_to_string(ks) + " do not match input " + dims(input.value()));
  }
  if (bias.value().size() != c_out) {
    throw DimensionError("conv1d bias has " + std::to_string(bias.value().size()) + " entries, expected " +
                         std::to_string(c_out));
  }
  const Eigen::Map<const RowMatrix> kmat(kernels.value().data(), c_out, c_in * k);
  const Eigen::Map<const Eigen::RowVectorXd> bvec(bias.value().data(), c_out);
  RowMatrix out = kernels::conv1d(input.value(), kmat, bvec, k, stride, padding);
  const Index kr = kernels.rows();
  const Index kc = kernels.cols();
  const Index br = bias.rows();
  const Index bc = bias.cols();
  return g.record(std::move(out), {input.id(), kernels.id(), bias.id()},
                  [=](const RowMatrix& up, Graph::InputGrads gr) {
                    const Eigen::Map<const RowMatrix> km(kernels.value().data(), c_out, c_in * k);
                    auto d = kernels::conv1d_backward(input.value(), km, up, k, stride, padding);
                    accumulate(gr[0], d.input);
                    if (gr[1]) accumulate(gr[1], Eigen::Map<const RowMatrix>(d.kernels.data(), kr, kc));
                    if (gr[2]) accumulate(gr[2], Eigen::Map<const RowMatrix>(d.bias.data(), br, bc));
                  });
}

Var relu(Var x) {
  Graph& g = graph_of(x);
  if (g.kink_radius() > 0.0 && (x.value().array().abs() < g.kink_radius()).any()) g.note_kink();
  return g.record(kernels::relu(x.value()), {x.id()}, [x](const RowMatrix& up, Graph::InputGrads gr) {
    accumulate(gr[0], kernels::relu_backward(x.value(), up));
  });
}

Var maxpool1d(Var x, Index window, Index stride) {
  Graph& g = graph_of(x);
  auto argmax = std::make_shared<kernels::IndexMatrix>();
  RowMatrix out = kernels::maxpool1d(x.value(), window, stride, *argmax);
  if (g.kink_radius() > 0.0) {
    const RowMatrix& v = x.value();
    for (Index r = 0; r < out.rows(); ++r)
      for (Index t = 0; t < out.cols(); ++t)
        for (Index j = t * stride; j < t * stride + window; ++j) {
          if (j != (*argmax)(r, t) && out(r, t) - v(r, j) < 2.0 * g.kink_radius()) g.note_kink();
        }
  }
  const Index in_cols = x.cols();
  return g.record(std::move(out), {x.id()}, [argmax, in_cols](const RowMatrix& up, Graph::InputGrads gr) {
    accumulate(gr[0], kernels::maxpool1d_backward(up, *argmax, in_cols));
  });
}

Var softmax_rows(Var x) {
  Graph& g = graph_of(x);
  auto y = std::make_shared<RowMatrix>(kernels::softmax_rows(x.value()));
  RowMatrix out = *y;
  return g.record(std::move(out), {x.id()}, [y](const RowMatrix& up, Graph::InputGrads gr) {
    accumulate(gr[0], kernels::softmax_rows_backward(*y, up));
  });
}

Var sigmoid(Var x) {
  Graph& g = graph_of(x);
  auto y = std::make_shared<RowMatrix>(kernels::sigmoid(x.value()));
  RowMatrix out = *y;
  return g.record(std::move(out), {x.id()}, [y](const RowMatrix& up, Graph::InputGrads gr) {
    accumulate(gr[0], kernels::sigmoid_backward(*y, up));
  });
}

Var layer_norm(Var x, Var gain, Var shift, double eps) {
  Graph& g = same_graph(x, gain);
  same_graph(x, shift);
  auto cache = std::make_shared<kernels::LayerNormCache<double>>();
  using RowVec = Eigen::Map<const Eigen::RowVectorXd>;
  RowMatrix out = kernels::layer_norm(x.value(), RowVec(gain.value().data(), gain.value().size()),
                                      RowVec(shift.value().data(), shift.value().size()), eps, *cache);
  const Index gr_rows = gain.rows();
  const Index gr_cols = gain.cols();
  const Index sr = shift.rows();
  const Index sc = shift.cols();
  return g.record(std::move(out), {x.id(), gain.id(), shift.id()},
                  [=](const RowMatrix& up, Graph::InputGrads gr) {
                    auto d = kernels::layer_norm_backward(*cache, RowVec(gain.value().data(), gain.value().size()),
                                                          up);
                    accumulate(gr[0], d.input);
                    if (gr[1]) accumulate(gr[1], Eigen::Map<const RowMatrix>(d.gain.data(), gr_rows, gr_cols));
                    if (gr[2]) accumulate(gr[2], Eigen::Map<const RowMatrix>(d.shift.data(), sr, sc));
                  });
}

Var concat_last(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_last needs at least one part");
  Graph& g = graph_of(parts[0]);
  const Index rows = parts[0].rows();
  Index total = 0;
  std::vector<std::size_t> ids;
  std::vector<Index> widths;
  for (const Var& p : parts) {
    same_graph(parts[0], p);
    if (p.rows() != rows) {
      throw DimensionError("concat_last leading dimension mismatch: " + dims(parts[0].value()) + " vs " +
                           dims(p.value()));
    }
    ids.push_back(p.id());
    widths.push_back(p.cols());
    total += p.cols();
  }
  RowMatrix out(rows, total);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return g.record(std::move(out), std::move(ids), [widths](const RowMatrix& up, Graph::InputGrads gr) {
    Index off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (gr[k]) accumulate(gr[k], up.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_rows needs at least one part");
  Graph& g = graph_of(parts[0]);
  const Index cols = parts[0].cols();
  Index total = 0;
  std::vector<std::size_t> ids;
  std::vector<Index> heights;
  for (const Var& p : parts) {
    same_graph(parts[0], p);
    if (p.cols() != cols) {
      throw DimensionError("concat_rows width mismatch: " + dims(parts[0].value()) + " vs " + dims(p.value()));
    }
    ids.push_back(p.id());
    heights.push_back(p.rows());
    total += p.rows();
  }
  RowMatrix out(total, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return g.record(std::move(out), std::move(ids), [heights](const RowMatrix& up, Graph::InputGrads gr) {
    Index off = 0;
    for (std::size_t k = 0; k < heights.size(); ++k) {
      if (gr[k]) accumulate(gr[k], up.middleRows(off, heights[k]));
      off += heights[k];
    }
  });
}

Var slice_cols(Var a, Index begin, Index count) {
  Graph& g = graph_of(a);
  if (begin < 0 || count < 1 || begin + count > a.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + dims(a.value()));
  }
  const Index r = a.rows();
  const Index c = a.cols();
  return g.record(a.value().middleCols(begin, count), {a.id()},
                  [=](const RowMatrix& up, Graph::InputGrads gr) {
                    RowMatrix full = RowMatrix::Zero(r, c);
                    full.middleCols(begin, count) = up;
                    accumulate(gr[0], full);
                  });
}

Var dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  Graph& g = graph_of(x);
  auto mask = std::make_shared<RowMatrix>(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Index i = 0; i < mask->size(); ++i) mask->data()[i] = uniform01(rng) >= rate ? keep_scale : 0.0;
  return g.record(x.value().cwiseProduct(*mask), {x.id()}, [mask](const RowMatrix& up, Graph::InputGrads gr) {
    accumulate(gr[0], up.cwiseProduct(*mask));
  });
}

Var bce_loss(Var probs, std::span<const double> labels) {
  Graph& g = graph_of(probs);
  const RowMatrix& p = probs.value();
  if (static_cast<std::size_t>(p.size()) != labels.size()) {
    throw UsageError("bce_loss got " + std::to_string(p.size()) + " probabilities and " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw UsageError("bce_loss on an empty batch");
  const double lo = kBceClamp;
  const double hi = 1.0 - kBceClamp;
  const auto n = static_cast<double>(labels.size());
  double total = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p.data()[i], lo, hi);
    const double y = labels[static_cast<std::size_t>(i)];
    total += y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
  }
  RowMatrix out(1, 1);
  out(0, 0) = -total / n;
  std::vector<double> ys(labels.begin(), labels.end());
  return g.record(std::move(out), {probs.id()}, [probs, ys = std::move(ys), lo, hi, n](const RowMatrix& up,
                                                                                       Graph::InputGrads gr) {
    const RowMatrix& pv = probs.value();
    RowMatrix d = RowMatrix::Zero(pv.rows(), pv.cols());
    for (Index i = 0; i < pv.size(); ++i) {
      const double q = pv.data()[i];
      if (q <= lo || q >= hi) continue;
      const double y = ys[static_cast<std::size_t>(i)];
      d.data()[i] = -(y / q - (1.0 - y) / (1.0 - q)) / n * up(0, 0);
    }
    accumulate(gr[0], d);
  });
}

}  // namespace hct
