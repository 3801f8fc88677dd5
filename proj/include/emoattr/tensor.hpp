#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace emoattr {

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

// Dense row-major tensor of 64-bit floats. An empty shape is a scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor full(std::vector<std::size_t> shape, double v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Value of a single-element tensor.
  double item() const;

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Same data, new shape; element counts must agree.
  Tensor reshaped(std::vector<std::size_t> new_shape) const;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Throws NumericalError mentioning `context` if any value is NaN/Inf.
void ensure_finite(const Tensor& t, const char* context);

}  // namespace emoattr
