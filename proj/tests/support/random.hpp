#pragma once

#include "hct/tensor.hpp"

#include <random>

namespace hct::testing {

inline RowMatrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  RowMatrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : t.data()) v = n(rng);
  return t;
}

}  // namespace hct::testing
