#include "lagscope/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "lagscope/error.hpp"

namespace lagscope::ad {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_size(shape_) != data_.size()) {
    throw Error("tensor: shape " + shape_string(shape_) + " does not match " +
                std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw Error("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                shape_string(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw Error("tensor: item() on shape " + shape_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw Error("tensor: cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace lagscope::ad
