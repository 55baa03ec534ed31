#pragma once

#include <cstddef>
#include <vector>

namespace binfer {

/// Cholesky factorization of a small dense SPD matrix (row-major n x n).
/// Throws std::domain_error if the matrix is not positive definite.
class SmallCholesky {
 public:
  SmallCholesky(std::vector<double> a, std::size_t n);

  std::size_t dim() const { return n_; }
  double log_det() const { return log_det_; }
  /// Solve A x = b.
  std::vector<double> solve(std::vector<double> b) const;
  /// x^T A^-1 x.
  double quad_inv(const std::vector<double>& x) const;

 private:
  std::vector<double> l_;  // lower-triangular factor, row-major
  std::size_t n_;
  double log_det_ = 0.0;
};

}  // namespace binfer
