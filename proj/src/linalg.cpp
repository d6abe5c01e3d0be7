#include "wsym/linalg.hpp"

#include <Eigen/Dense>

namespace wsym::linalg {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const Mat> view(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("expected a matrix, got " + shape_str(a.shape()));
  return {a.data().data(), static_cast<Eigen::Index>(a.dim(0)),
          static_cast<Eigen::Index>(a.dim(1))};
}

void require_square(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw ShapeError("expected a square matrix, got " + shape_str(a.shape()));
  }
}

}  // namespace

Tensor inverse(const Tensor& a) {
  require_square(a);
  Eigen::PartialPivLU<Mat> lu(view(a));
  if (lu.determinant() == 0.0) throw NumericError("inverse of a singular matrix");
  Mat inv = lu.inverse();
  return Tensor(a.shape(), std::vector<double>(inv.data(), inv.data() + inv.size()));
}

double determinant(const Tensor& a) {
  require_square(a);
  return Eigen::PartialPivLU<Mat>(view(a)).determinant();
}

std::vector<double> singular_values(const Tensor& a) {
  Eigen::JacobiSVD<Mat> svd(view(a));
  const auto& s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

std::size_t numerical_rank(const Tensor& a, double rel_tol) {
  const auto s = singular_values(a);
  if (s.empty() || s[0] == 0.0) return 0;
  std::size_t r = 0;
  for (double v : s)
    if (v > rel_tol * s[0]) ++r;
  return r;
}

}  // namespace wsym::linalg
