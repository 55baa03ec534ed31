#include "binfer/smallmat.hpp"

#include <cmath>
#include <stdexcept>

namespace binfer {

SmallCholesky::SmallCholesky(std::vector<double> a, std::size_t n) : l_(std::move(a)), n_(n) {
  if (l_.size() != n * n) throw std::invalid_argument("SmallCholesky: size mismatch");
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = l_[i * n_ + j];
      for (std::size_t k = 0; k < j; ++k) s -= l_[i * n_ + k] * l_[j * n_ + k];
      if (i == j) {
        if (!(s > 0.0)) throw std::domain_error("SmallCholesky: matrix not positive definite");
        l_[i * n_ + i] = std::sqrt(s);
        log_det_ += 2.0 * std::log(l_[i * n_ + i]);
      } else {
        l_[i * n_ + j] = s / l_[j * n_ + j];
      }
    }
  }
}

std::vector<double> SmallCholesky::solve(std::vector<double> b) const {
  if (b.size() != n_) throw std::invalid_argument("SmallCholesky::solve: size mismatch");
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= l_[i * n_ + k] * b[k];
    b[i] /= l_[i * n_ + i];
  }
  for (std::size_t i = n_; i-- > 0;) {
    for (std::size_t k = i + 1; k < n_; ++k) b[i] -= l_[k * n_ + i] * b[k];
    b[i] /= l_[i * n_ + i];
  }
  return b;
}

double SmallCholesky::quad_inv(const std::vector<double>& x) const {
  std::vector<double> y = solve(x);
  double q = 0.0;
  for (std::size_t i = 0; i < n_; ++i) q += x[i] * y[i];
  return q;
}

}  // namespace binfer
