#pragma once

#include <vector>

#include "wsym/tensor.hpp"

// Small dense linear algebra on square/rectangular matrices, backed by Eigen.
namespace wsym::linalg {

Tensor inverse(const Tensor& a);
double determinant(const Tensor& a);
// Descending singular values.
std::vector<double> singular_values(const Tensor& a);
// Count of singular values above rel_tol * largest.
std::size_t numerical_rank(const Tensor& a, double rel_tol);

}  // namespace wsym::linalg
