#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace coid {

/// Dense row-major tensor of 64-bit reals. Rank 1 and 2 cover everything the
/// network needs; scalars are 1-element vectors.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    std::size_t n = 1;
    for (std::size_t d : shape_) n *= d;
    if (n != data_.size())
      throw std::invalid_argument("Tensor: shape/data size mismatch (" +
                                  std::to_string(n) + " vs " +
                                  std::to_string(data_.size()) + ")");
  }

  static Tensor zeros(std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor vector(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool is_scalar() const { return data_.size() == 1; }
  bool is_vector() const { return shape_.size() == 1; }
  bool is_matrix() const { return shape_.size() == 2; }

  std::size_t rows() const {
    require_matrix();
    return shape_[0];
  }
  std::size_t cols() const {
    require_matrix();
    return shape_[1];
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  void require_matrix() const {
    if (shape_.size() != 2)
      throw std::invalid_argument("Tensor: not a matrix");
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline std::string shape_string(const Tensor& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape()[i]);
  }
  return s + "]";
}

}  // namespace coid
