#include "hct/tensor.hpp"

#include "hct/errors.hpp"

#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace hct {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (Index e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(static_cast<std::size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_);
  if (static_cast<Index>(data_.size()) != shape_size(shape_)) {
    throw DimensionError("tensor of shape " + shape_to_string(shape_) + " needs " +
                         std::to_string(shape_size(shape_)) + " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::from_matrix(const RowMatrix& m) {
  return Tensor({m.rows(), m.cols()}, std::vector<double>(m.data(), m.data() + m.size()));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const auto r = static_cast<Index>(rows.size());
  const auto c = r ? static_cast<Index>(rows.begin()->size()) : 0;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(r * c));
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != c) throw DimensionError("ragged rows in Tensor::from_rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

Tensor Tensor::from_vector(std::initializer_list<double> values) {
  return Tensor({static_cast<Index>(values.size())}, std::vector<double>(values));
}

Index Tensor::dim(Index axis) const {
  if (axis < 0 || axis >= rank()) throw DimensionError("axis out of range for " + shape_to_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

Index Tensor::view_rows() const noexcept {
  if (shape_.size() <= 1) return 1;
  return shape_.front();
}

Index Tensor::view_cols() const noexcept {
  if (shape_.empty()) return 0;
  return size() / view_rows();
}

Eigen::Map<RowMatrix> Tensor::matrix() { return {data_.data(), view_rows(), view_cols()}; }

Eigen::Map<const RowMatrix> Tensor::matrix() const { return {data_.data(), view_rows(), view_cols()}; }

Eigen::Map<const RowMatrix> Tensor::grad_matrix() const {
  if (grad_.empty()) throw UsageError("tensor has no gradient");
  return {grad_.data(), view_rows(), view_cols()};
}

void Tensor::accumulate_grad(const Eigen::Ref<const RowMatrix>& g) {
  if (g.size() != size()) {
    throw DimensionError("gradient with " + std::to_string(g.size()) + " entries for tensor " +
                         shape_to_string(shape_));
  }
  if (grad_.empty()) grad_.assign(data_.size(), 0.0);
  // Ref may be column-major strided; walk it in row-major order.
  std::size_t k = 0;
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j) grad_[k++] += g(i, j);
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0); }

bool operator==(const Tensor& a, const Tensor& b) noexcept {
  return a.shape_ == b.shape_ && a.data_.size() == b.data_.size() &&
         (a.data_.empty() || std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0);
}

}  // namespace hct
