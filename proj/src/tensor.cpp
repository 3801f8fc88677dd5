#include "emoattr/tensor.hpp"

#include <cmath>
#include <sstream>

#include "emoattr/error.hpp"

namespace emoattr {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data_.assign(1, v);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.data_.assign(t.data_.size(), v);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() requires a single-element tensor, got shape " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  if (shape_size(new_shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
  }
  return Tensor(std::move(new_shape), data_);
}

void ensure_finite(const Tensor& t, const char* context) {
  if (!t.all_finite()) {
    throw NumericalError(std::string(context) + " produced a non-finite value");
  }
}

}  // namespace emoattr
