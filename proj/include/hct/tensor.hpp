#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hct {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Row-major dense matrix; the working type for every kernel and graph node.
template <typename Scalar>
using RowMatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrix = RowMatrixT<double>;

std::string shape_to_string(const Shape& shape);
Index shape_size(const Shape& shape);

/// Dense n-dimensional array of doubles in row-major order with an optional
/// gradient buffer of the same length.
///
/// For matrix arithmetic a tensor is viewed as a 2-D matrix: rank-1 tensors
/// are a single row, higher ranks fold every trailing extent into the
/// columns (`shape[0] x rest`).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor from_matrix(const RowMatrix& m);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor from_vector(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const;
  Index size() const noexcept { return static_cast<Index>(data_.size()); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Index view_rows() const noexcept;
  Index view_cols() const noexcept;
  Eigen::Map<RowMatrix> matrix();
  Eigen::Map<const RowMatrix> matrix() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  bool has_grad() const noexcept { return !grad_.empty(); }
  std::span<const double> grad() const noexcept { return grad_; }
  Eigen::Map<const RowMatrix> grad_matrix() const;
  void accumulate_grad(const Eigen::Ref<const RowMatrix>& g);
  void zero_grad();
  void clear_grad() noexcept { grad_.clear(); }

  /// Same shape and bit-identical values. Gradients are not compared.
  friend bool operator==(const Tensor& a, const Tensor& b) noexcept;

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

}  // namespace hct
