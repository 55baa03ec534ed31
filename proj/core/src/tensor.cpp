#include "binfer/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace binfer {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  data_.assign(shape_size(shape_), 0.0);
}

Tensor Tensor::scalar(double v) {
  Tensor t{std::vector<std::size_t>{}};
  t.data_[0] = v;
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t{std::move(shape)};
  for (double& x : t.data_) x = v;
  return t;
}

Tensor Tensor::from(std::vector<double> values, std::vector<std::size_t> shape) {
  if (values.size() != shape_size(shape)) {
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return from(std::vector<double>(values), {rows, cols});
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  std::vector<double> v(values);
  std::size_t n = v.size();
  return from(std::move(v), {n});
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("Tensor::rows: rank-2 required, got " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("Tensor::cols: rank-2 required, got " + shape_str(shape_));
  return shape_[1];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return data_[i * cols() + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return data_[i * cols() + j];
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("Tensor::item: tensor of shape " + shape_str(shape_) + " is not a scalar");
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace binfer
